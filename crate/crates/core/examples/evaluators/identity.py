#!/usr/bin/env python3
"""Returns the configuration's `x` value as the loss."""
import json
import sys

req = json.load(sys.stdin)
print(json.dumps({"request_id": req["request_id"], "loss": req["config"]["x"]}))
