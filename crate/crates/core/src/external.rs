//! One-shot JSON exchange with an external command.
//!
//! The command reads one JSON object on stdin and writes one JSON object to
//! stdout. Failures and timeouts are retried with exponential backoff.

use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalPolicy {
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for ExternalPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("external backend `{endpoint}` failed after {attempts} attempt(s): {message}")]
pub struct ExternalError {
    pub endpoint: String,
    pub attempts: u32,
    pub message: String,
    /// Whether a later call might succeed (timeouts, crashes) as opposed to a
    /// malformed reply.
    pub retryable: bool,
}

fn run_once(endpoint: &str, request: &[u8], timeout: Duration) -> Result<Value, (String, bool)> {
    let mut parts = endpoint.split_whitespace();
    let program = parts.next().ok_or_else(|| ("empty endpoint".to_string(), false))?;
    let mut child = Command::new(program)
        .args(parts)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| (format!("spawn failed: {e}"), true))?;
    if let Some(mut stdin) = child.stdin.take() {
        // A child that exits without reading is reported through its status.
        let _ = stdin.write_all(request);
    }
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });
    let started = Instant::now();
    let status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) if started.elapsed() >= timeout => {
                let _ = child.kill();
                let _ = child.wait();
                return Err((format!("timed out after {timeout:?}"), true));
            }
            Ok(None) => thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err((format!("wait failed: {e}"), true)),
        }
    };
    let out = reader.join().unwrap_or_default();
    if !status.success() {
        return Err((format!("exited with {status}"), true));
    }
    serde_json::from_slice(&out).map_err(|e| (format!("malformed reply: {e}"), false))
}

/// Sends `request` to `endpoint`, retrying retryable failures.
pub fn call_json(endpoint: &str, request: &Value, policy: &ExternalPolicy) -> Result<Value, ExternalError> {
    let body = serde_json::to_vec(request).expect("json values serialize");
    let mut backoff = policy.initial_backoff;
    let attempts_allowed = policy.max_attempts.max(1);
    let mut last = (String::new(), false);
    for attempt in 1..=attempts_allowed {
        match run_once(endpoint, &body, policy.timeout) {
            Ok(v) => return Ok(v),
            Err((message, retryable)) => {
                log::warn!("external backend {endpoint} attempt {attempt}: {message}");
                last = (message, retryable);
                if !retryable || attempt == attempts_allowed {
                    return Err(ExternalError {
                        endpoint: endpoint.to_string(),
                        attempts: attempt,
                        message: last.0,
                        retryable: last.1,
                    });
                }
                thread::sleep(backoff);
                backoff *= 2;
            }
        }
    }
    Err(ExternalError { endpoint: endpoint.to_string(), attempts: attempts_allowed, message: last.0, retryable: last.1 })
}
