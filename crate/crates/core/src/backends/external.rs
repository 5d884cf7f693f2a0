//! Adapter for simulators run as child processes.
//!
//! One process per evaluation. The request is written to its stdin as a single
//! JSON object `{"design": [...], "fidelity": [...], "seed": n}`; the process
//! answers on stdout with `{"objective": y, "cost_seconds": c}` (cost optional)
//! or `{"error": "message"}`.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EvalOutput, Evaluator};
use crate::error::{Error, Result};

/// Counting semaphore bounding concurrent child processes.
#[derive(Debug)]
pub struct Semaphore {
    permits: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    pub fn new(permits: usize) -> Self {
        Self {
            permits: Mutex::new(permits),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.permits.lock().unwrap_or_else(|e| e.into_inner());
        *n += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalProcessSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    /// Maximum number of simultaneously running child processes.
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    #[serde(default)]
    pub failure_rate: f64,
}

fn default_timeout() -> f64 {
    3600.0
}

fn default_concurrency() -> usize {
    4
}

impl ExternalProcessSpec {
    pub fn new<S: Into<String>>(command: impl IntoIterator<Item = S>) -> Self {
        Self {
            command: command.into_iter().map(Into::into).collect(),
            timeout_s: default_timeout(),
            max_concurrent: default_concurrency(),
            failure_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.command.is_empty() || self.command[0].is_empty() {
            return Err(Error::Config("external-process evaluator needs a non-empty command".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(Error::Config(format!("timeout_s must be positive, got {}", self.timeout_s)));
        }
        if self.max_concurrent == 0 {
            return Err(Error::Config("max_concurrent must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct Request<'a> {
    design: &'a [f64],
    fidelity: &'a [f64],
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Response {
    objective: Option<f64>,
    cost_seconds: Option<f64>,
    error: Option<String>,
}

pub struct ExternalProcess {
    spec: ExternalProcessSpec,
    limit: Arc<Semaphore>,
}

impl ExternalProcess {
    pub fn new(spec: ExternalProcessSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            limit: Arc::new(Semaphore::new(spec.max_concurrent)),
            spec,
        })
    }

    fn run(&self, request: &[u8]) -> Result<(String, f64)> {
        let _permit = self.limit.acquire();
        let start = Instant::now();
        let mut child = Command::new(&self.spec.command[0])
            .args(&self.spec.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::evaluation(format!("cannot spawn {:?}: {e}", self.spec.command[0]), None))?;

        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let request = request.to_vec();
        let writer = thread::spawn(move || {
            let _ = stdin.write_all(&request);
        });
        let out_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        });
        let err_reader = thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });

        let timeout = Duration::from_secs_f64(self.spec.timeout_s);
        let status = loop {
            if let Some(status) = child.try_wait()? {
                break status;
            }
            if start.elapsed() >= timeout {
                let _ = child.kill();
                let _ = child.wait();
                let elapsed = start.elapsed().as_secs_f64();
                return Err(Error::evaluation(
                    format!("timed out after {:.3} s", self.spec.timeout_s),
                    Some(elapsed),
                ));
            }
            thread::sleep(Duration::from_millis(2));
        };
        let elapsed = start.elapsed().as_secs_f64();
        let _ = writer.join();
        let out = out_reader.join().unwrap_or_default();
        let err = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(Error::evaluation(
                format!("process exited with {status}: {}", err.trim()),
                Some(elapsed),
            ));
        }
        Ok((out, elapsed))
    }

    fn parse(out: &str, elapsed: f64) -> Result<EvalOutput> {
        let protocol = |message: String| Error::Protocol {
            message,
            output: out.to_string(),
            cost: Some(elapsed),
        };
        let resp: Response =
            serde_json::from_str(out.trim()).map_err(|e| protocol(format!("response is not valid JSON: {e}")))?;
        if let Some(message) = resp.error {
            return Err(Error::evaluation(message, Some(resp.cost_seconds.unwrap_or(elapsed))));
        }
        let objective = resp
            .objective
            .ok_or_else(|| protocol("response has neither objective nor error".into()))?;
        if !objective.is_finite() {
            return Err(protocol(format!("objective {objective} is not finite")));
        }
        let cost = match resp.cost_seconds {
            Some(c) if c.is_finite() && c > 0.0 => c,
            Some(c) => return Err(protocol(format!("cost_seconds {c} is not positive"))),
            None => elapsed.max(1e-9),
        };
        Ok(EvalOutput::scalar(objective, cost))
    }
}

impl Evaluator for ExternalProcess {
    fn evaluate(&self, x: &[f64], z: &[f64], seed: u64) -> Result<EvalOutput> {
        let request = serde_json::to_vec(&Request {
            design: x,
            fidelity: z,
            seed,
        })?;
        let (out, elapsed) = self.run(&request)?;
        Self::parse(&out, elapsed)
    }
}
