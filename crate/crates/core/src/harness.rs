//! Evaluation boundary: the objective trait, a bounded worker pool and the
//! subprocess protocol for external evaluators.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{Error, Result};
use crate::space::{Configuration, Value};

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRequest {
    pub request_id: String,
    pub config: Configuration,
    pub resource: f64,
}

/// Why an evaluation produced no loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub reason: String,
    pub timed_out: bool,
}

impl Failure {
    pub fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
            timed_out: false,
        }
    }

    pub fn timeout(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
            timed_out: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Loss(f64),
    Failed(Failure),
}

impl Outcome {
    /// The loss, or `+inf` for failures.
    pub fn loss_or_inf(&self) -> f64 {
        match self {
            Outcome::Loss(y) => *y,
            Outcome::Failed(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationResult {
    pub request_id: String,
    pub outcome: Outcome,
    /// Wall-clock seconds spent on this request.
    pub duration: f64,
    /// Position in the order results finished within their batch.
    pub completion: usize,
}

/// Something that maps a configuration and a resource to a loss.
///
/// Implementations are called from several worker threads at once unless
/// `serial_only` returns true.
pub trait Objective: Send + Sync {
    fn evaluate(&self, request: &EvaluationRequest) -> std::result::Result<f64, Failure>;

    fn serial_only(&self) -> bool {
        false
    }
}

impl<F> Objective for F
where
    F: Fn(&EvaluationRequest) -> std::result::Result<f64, Failure> + Send + Sync,
{
    fn evaluate(&self, request: &EvaluationRequest) -> std::result::Result<f64, Failure> {
        self(request)
    }
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_owned()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "evaluator panicked".to_owned()
    }
}

fn run_isolated(objective: &Arc<dyn Objective>, request: &EvaluationRequest, timeout: Option<Duration>) -> Outcome {
    let result = match timeout {
        None => catch_unwind(AssertUnwindSafe(|| objective.evaluate(request)))
            .unwrap_or_else(|p| Err(Failure::new(format!("panic: {}", panic_message(p))))),
        Some(limit) => {
            let (tx, rx) = mpsc::channel();
            let obj = Arc::clone(objective);
            let req = request.clone();
            // the thread is left running if it overshoots the limit
            std::thread::spawn(move || {
                let r = catch_unwind(AssertUnwindSafe(|| obj.evaluate(&req)))
                    .unwrap_or_else(|p| Err(Failure::new(format!("panic: {}", panic_message(p)))));
                let _ = tx.send(r);
            });
            match rx.recv_timeout(limit) {
                Ok(r) => r,
                Err(_) => Err(Failure::timeout(format!("no result within {:.3}s", limit.as_secs_f64()))),
            }
        }
    };
    match result {
        Ok(y) if y.is_finite() => Outcome::Loss(y),
        Ok(y) => Outcome::Failed(Failure::new(format!("non-finite loss {y}"))),
        Err(f) => Outcome::Failed(f),
    }
}

/// Evaluates every request with at most `workers` in flight. Results come
/// back in request order; a failure in one request never affects another.
pub fn evaluate_batch(
    objective: &Arc<dyn Objective>,
    requests: &[EvaluationRequest],
    workers: usize,
    timeout: Option<Duration>,
) -> Vec<EvaluationResult> {
    let workers = if objective.serial_only() { 1 } else { workers.max(1) }.min(requests.len().max(1));
    let next = AtomicUsize::new(0);
    let finished = AtomicUsize::new(0);
    let mut slots: Vec<Option<EvaluationResult>> = vec![None; requests.len()];

    let run = |i: usize| {
        let req = &requests[i];
        let start = Instant::now();
        let outcome = run_isolated(objective, req, timeout);
        let duration = start.elapsed().as_secs_f64();
        EvaluationResult {
            request_id: req.request_id.clone(),
            outcome,
            duration,
            completion: finished.fetch_add(1, Ordering::SeqCst),
        }
    };

    if workers == 1 {
        for (i, slot) in slots.iter_mut().enumerate() {
            *slot = Some(run(i));
        }
    } else {
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let (next, run) = (&next, &run);
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let _ = tx.send((i, run(i)));
                });
            }
            drop(tx);
            for (i, r) in rx {
                slots[i] = Some(r);
            }
        });
    }
    slots.into_iter().map(|s| s.expect("every request evaluated")).collect()
}

#[derive(Serialize)]
struct WireRequest<'a> {
    request_id: &'a str,
    resource: f64,
    config: &'a std::collections::BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct WireReply {
    request_id: String,
    loss: Option<f64>,
}

/// Runs a shell command per evaluation. The request is written to the
/// child's stdin as one JSON object; the child answers on stdout with
/// `{"request_id": ..., "loss": ...}`.
#[derive(Debug, Clone)]
pub struct SubprocessObjective {
    command: String,
    timeout: Duration,
}

impl SubprocessObjective {
    /// Checks that the program named by the first word of `command` can be
    /// found before any evaluation is attempted.
    pub fn new(command: impl Into<String>, timeout: Duration) -> Result<Self> {
        let command = command.into();
        let program = command
            .split_whitespace()
            .next()
            .ok_or_else(|| Error::EvaluatorSetup("empty evaluator command".into()))?;
        if !program_exists(program) {
            return Err(Error::EvaluatorSetup(format!("program `{program}` not found")));
        }
        if timeout.is_zero() {
            return Err(Error::EvaluatorSetup("timeout must be positive".into()));
        }
        Ok(Self { command, timeout })
    }

    pub fn command(&self) -> &str {
        &self.command
    }
}

fn program_exists(program: &str) -> bool {
    if program.contains('/') {
        return Path::new(program).is_file();
    }
    let Some(path) = std::env::var_os("PATH") else {
        return false;
    };
    std::env::split_paths(&path).any(|dir| dir.join(program).is_file())
}

fn read_to_string_thread<R: Read + Send + 'static>(mut pipe: R) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = pipe.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    })
}

impl Objective for SubprocessObjective {
    fn evaluate(&self, request: &EvaluationRequest) -> std::result::Result<f64, Failure> {
        let payload = serde_json::to_vec(&WireRequest {
            request_id: &request.request_id,
            resource: request.resource,
            config: &request.config.values,
        })
        .map_err(|e| Failure::new(format!("encoding request: {e}")))?;

        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|e| Failure::new(format!("spawn failed: {e}")))?;

        let stdout = read_to_string_thread(child.stdout.take().expect("piped stdout"));
        let stderr = read_to_string_thread(child.stderr.take().expect("piped stderr"));
        if let Some(mut stdin) = child.stdin.take() {
            // a child that exits without reading stdin is not an error by itself
            let _ = stdin.write_all(&payload);
        }

        let status = match child.wait_timeout(self.timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                // the shell's own children share its process group
                unsafe {
                    libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
                }
                let _ = child.kill();
                let _ = child.wait();
                let err = stderr.join().unwrap_or_default();
                return Err(Failure::timeout(format!(
                    "killed after {:.3}s; stderr: {}",
                    self.timeout.as_secs_f64(),
                    err.trim()
                )));
            }
            Err(e) => return Err(Failure::new(format!("wait failed: {e}"))),
        };
        let out = stdout.join().unwrap_or_default();
        let err = stderr.join().unwrap_or_default();
        if !status.success() {
            return Err(Failure::new(format!("{status}; stderr: {}", err.trim())));
        }
        let reply: WireReply = serde_json::from_str(out.trim())
            .map_err(|e| Failure::new(format!("malformed reply ({e}); stderr: {}", err.trim())))?;
        if reply.request_id != request.request_id {
            return Err(Failure::new(format!(
                "reply for `{}` but request was `{}`",
                reply.request_id, request.request_id
            )));
        }
        match reply.loss {
            Some(y) if y.is_finite() => Ok(y),
            _ => Err(Failure::new(format!("reply has no finite loss; stderr: {}", err.trim()))),
        }
    }
}
