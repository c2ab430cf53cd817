//! External evaluator protocol.
//!
//! The evaluator is a command template. `{checkpoint}` and `{lambda}` are
//! substituted into each argument; the process runs in a private working
//! directory and must print exactly one line, `{"wer": <number>}`, then
//! exit 0. Anything else is a failure for that grid point only.

use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Duration;

use wait_timeout::ChildExt;

use super::error::{FailureKind, Result, SweepError};

pub const TIMEOUT_ENV: &str = "SYNVEC_EVAL_TIMEOUT_SECS";
pub const DEFAULT_TIMEOUT_SECS: u64 = 3600;

/// One evaluation request.
#[derive(Debug, Clone, Copy)]
pub struct EvalRequest<'a> {
    pub checkpoint: &'a Path,
    pub lambda: f64,
    pub workdir: &'a Path,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub wer: f64,
    pub stdout: String,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum EvalFailure {
    #[error("failed to start evaluator: {0}")]
    Spawn(String),
    #[error("evaluator exited with {code:?}: {stderr}")]
    Exit { code: Option<i32>, stderr: String },
    #[error("evaluator timed out after {0} s")]
    Timeout(u64),
    #[error("unparseable evaluator output ({reason}): {stdout:?}")]
    BadOutput { reason: String, stdout: String },
}

impl EvalFailure {
    pub fn kind(&self) -> FailureKind {
        match self {
            EvalFailure::Spawn(_) => FailureKind::Spawn,
            EvalFailure::Exit { .. } => FailureKind::Exit,
            EvalFailure::Timeout(_) => FailureKind::Timeout,
            EvalFailure::BadOutput { .. } => FailureKind::BadOutput,
        }
    }
}

/// Scores a materialized checkpoint. Implementations must be callable from
/// several worker threads at once.
pub trait Evaluator: Sync {
    fn evaluate(&self, request: &EvalRequest<'_>) -> std::result::Result<EvalOutput, EvalFailure>;
}

impl<F> Evaluator for F
where
    F: Fn(&EvalRequest<'_>) -> std::result::Result<EvalOutput, EvalFailure> + Sync,
{
    fn evaluate(&self, request: &EvalRequest<'_>) -> std::result::Result<EvalOutput, EvalFailure> {
        self(request)
    }
}

/// Parses the protocol's single-line `{"wer": <number>}` payload.
pub fn parse_eval_output(stdout: &str) -> std::result::Result<f64, EvalFailure> {
    let bad = |reason: &str| EvalFailure::BadOutput {
        reason: reason.to_string(),
        stdout: stdout.to_string(),
    };
    let body = stdout.strip_suffix('\n').unwrap_or(stdout);
    let body = body.strip_suffix('\r').unwrap_or(body);
    if body.contains('\n') {
        return Err(bad("expected a single line"));
    }
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| bad(&format!("invalid JSON: {e}")))?;
    let obj = value.as_object().ok_or_else(|| bad("expected a JSON object"))?;
    if obj.len() != 1 {
        return Err(bad("expected exactly one key, \"wer\""));
    }
    let wer = obj
        .get("wer")
        .and_then(serde_json::Value::as_f64)
        .ok_or_else(|| bad("\"wer\" must be a number"))?;
    if !wer.is_finite() || wer < 0.0 {
        return Err(bad("\"wer\" must be finite and non-negative"));
    }
    Ok(wer)
}

/// Runs an external command per evaluation.
#[derive(Debug, Clone)]
pub struct CommandEvaluator {
    template: Vec<String>,
    timeout: Duration,
}

impl CommandEvaluator {
    pub fn new(template: Vec<String>, timeout: Duration) -> Result<Self> {
        if template.first().is_none_or(|p| p.trim().is_empty()) {
            return Err(SweepError::InvalidConfig("evaluator command is empty".into()));
        }
        Ok(Self { template, timeout })
    }

    /// Splits a shell-style command line (quotes respected, no shell expansion)
    /// and takes the timeout from `SYNVEC_EVAL_TIMEOUT_SECS`.
    pub fn from_command_line(line: &str) -> Result<Self> {
        let template = shell_words::split(line)
            .map_err(|e| SweepError::InvalidConfig(format!("evaluator command: {e}")))?;
        Self::new(template, timeout_from_env()?)
    }

    pub fn template(&self) -> &[String] {
        &self.template
    }

    pub fn timeout(&self) -> Duration {
        self.timeout
    }

    fn argv(&self, request: &EvalRequest<'_>) -> Vec<String> {
        let checkpoint = request.checkpoint.to_string_lossy();
        let lambda = format!("{}", request.lambda);
        self.template
            .iter()
            .map(|arg| arg.replace("{checkpoint}", &checkpoint).replace("{lambda}", &lambda))
            .collect()
    }
}

impl Evaluator for CommandEvaluator {
    fn evaluate(&self, request: &EvalRequest<'_>) -> std::result::Result<EvalOutput, EvalFailure> {
        let argv = self.argv(request);
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(request.workdir)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| EvalFailure::Spawn(format!("{}: {e}", argv[0])))?;

        // Drain both pipes on helper threads so a chatty child cannot block.
        let drain = |pipe: Option<Box<dyn Read + Send>>| {
            std::thread::spawn(move || {
                let mut buf = Vec::new();
                if let Some(mut p) = pipe {
                    let _ = p.read_to_end(&mut buf);
                }
                buf
            })
        };
        let out = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
        let err = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));

        let status = match child.wait_timeout(self.timeout) {
            Ok(Some(status)) => status,
            Ok(None) => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(EvalFailure::Timeout(self.timeout.as_secs()));
            }
            Err(e) => return Err(EvalFailure::Spawn(format!("waiting on evaluator: {e}"))),
        };
        let stdout = String::from_utf8_lossy(&out.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
        if !status.success() {
            return Err(EvalFailure::Exit {
                code: status.code(),
                stderr: stderr.trim_end().to_string(),
            });
        }
        let wer = parse_eval_output(&stdout)?;
        Ok(EvalOutput { wer, stdout })
    }
}

/// Reads `SYNVEC_EVAL_TIMEOUT_SECS`, defaulting to one hour.
pub fn timeout_from_env() -> Result<Duration> {
    match std::env::var(TIMEOUT_ENV) {
        Ok(v) => v
            .trim()
            .parse::<u64>()
            .ok()
            .filter(|&s| s > 0)
            .map(Duration::from_secs)
            .ok_or_else(|| SweepError::InvalidConfig(format!("{TIMEOUT_ENV}={v:?} is not a positive integer"))),
        Err(_) => Ok(Duration::from_secs(DEFAULT_TIMEOUT_SECS)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_protocol_payload() {
        assert_eq!(parse_eval_output("{\"wer\": 12.5}\n").unwrap(), 12.5);
        assert_eq!(parse_eval_output("{\"wer\":0}").unwrap(), 0.0);
    }

    #[test]
    fn rejects_other_shapes() {
        for bad in [
            "",
            "12.5",
            "{\"wer\": \"12\"}",
            "{\"wer\": -1}",
            "{\"wer\": 1, \"extra\": 2}",
            "{\"wer\": 1}\n{\"wer\": 2}\n",
            "{\"wer\": 1",
        ] {
            assert!(parse_eval_output(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[cfg(unix)]
    #[test]
    fn command_substitutes_placeholders_and_reads_stdout() {
        let dir = tempfile::tempdir().unwrap();
        let eval = CommandEvaluator::new(
            vec![
                "sh".into(),
                "-c".into(),
                "test -n \"$1\" && printf '{\"wer\": %s}\\n' \"$2\"".into(),
                "sh".into(),
                "{checkpoint}".into(),
                "{lambda}".into(),
            ],
            Duration::from_secs(30),
        )
        .unwrap();
        let req = EvalRequest {
            checkpoint: Path::new("/tmp/x.safetensors"),
            lambda: 0.3,
            workdir: dir.path(),
        };
        assert_eq!(eval.evaluate(&req).unwrap().wer, 0.3);
    }

    #[cfg(unix)]
    #[test]
    fn nonzero_exit_and_timeout_are_failures() {
        let dir = tempfile::tempdir().unwrap();
        let req = EvalRequest {
            checkpoint: Path::new("x"),
            lambda: 0.0,
            workdir: dir.path(),
        };
        let fail = CommandEvaluator::new(
            vec!["sh".into(), "-c".into(), "echo boom >&2; exit 4".into()],
            Duration::from_secs(30),
        )
        .unwrap();
        match fail.evaluate(&req) {
            Err(EvalFailure::Exit { code: Some(4), stderr }) => assert_eq!(stderr, "boom"),
            other => panic!("unexpected {other:?}"),
        }
        let slow = CommandEvaluator::new(
            vec!["sh".into(), "-c".into(), "sleep 5".into()],
            Duration::from_secs(1),
        )
        .unwrap();
        assert!(matches!(slow.evaluate(&req), Err(EvalFailure::Timeout(1))));
    }

    #[test]
    fn empty_command_is_rejected() {
        assert!(CommandEvaluator::new(vec![], Duration::from_secs(1)).is_err());
        assert!(CommandEvaluator::from_command_line("   ").is_err());
        assert!(CommandEvaluator::from_command_line("eval 'unterminated").is_err());
    }

    #[test]
    fn missing_program_is_spawn_failure() {
        let dir = tempfile::tempdir().unwrap();
        let eval =
            CommandEvaluator::new(vec!["/no/such/program".into()], Duration::from_secs(1)).unwrap();
        let req = EvalRequest {
            checkpoint: Path::new("x"),
            lambda: 0.0,
            workdir: dir.path(),
        };
        assert!(matches!(eval.evaluate(&req), Err(EvalFailure::Spawn(_))));
    }
}
