#!/usr/bin/env python3
"""Toy evaluator: reads one request on stdin, prints one reply on stdout."""
import json
import math
import sys

req = json.load(sys.stdin)
cfg = req["config"]
r = req["resource"]

loss = (math.log10(cfg["lr"]) + 2.5) ** 2 + 0.1 * (cfg["layers"] - 3) ** 2
loss += {"sgd": 0.3, "adam": 0.0, "rmsprop": 0.1}[cfg["optimizer"]]
# fewer epochs, noisier estimate of the final loss
loss += 0.5 / r

print(json.dumps({"request_id": req["request_id"], "loss": loss}))
