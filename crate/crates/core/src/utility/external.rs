//! Utility evaluated by an external command.
//!
//! The particle is written to a temporary checkpoint, `{checkpoint}` in the
//! command template is replaced by its path, the command runs under `sh -c`,
//! and the last line of standard output is parsed as a decimal real.

use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::Utility;
use crate::checkpoint;
use crate::error::{EvalError, Result, SwarmError};
use crate::vector::ParamVector;

pub const PLACEHOLDER: &str = "{checkpoint}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalUtilitySpec {
    pub command: String,
    pub workdir: Option<PathBuf>,
    pub timeout_secs: f64,
}

impl ExternalUtilitySpec {
    pub fn validate(&self) -> Result<()> {
        let count = self.command.matches(PLACEHOLDER).count();
        if count > 1 {
            return Err(SwarmError::invalid(
                "command",
                format!("template must contain {PLACEHOLDER} at most once, found {count}"),
            ));
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(SwarmError::invalid("timeout", "must be positive"));
        }
        Ok(())
    }
}

pub struct ExternalUtility {
    spec: ExternalUtilitySpec,
}

impl ExternalUtility {
    pub fn new(spec: ExternalUtilitySpec) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec })
    }
}

fn decimal_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$").unwrap())
}

/// Parse the final stdout line as a decimal real (optional sign and exponent).
pub fn parse_final_line(stdout: &str) -> Result<f64, EvalError> {
    let line = stdout.lines().last().unwrap_or("").trim();
    if !decimal_re().is_match(line) {
        return Err(EvalError::new(format!("final stdout line {line:?} is not a decimal real")));
    }
    line.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| EvalError::new(format!("final stdout line {line:?} is out of range")))
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = String::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_string(&mut buf);
        }
        buf
    })
}

impl Utility for ExternalUtility {
    fn name(&self) -> &str {
        "external"
    }

    fn deterministic(&self) -> bool {
        false
    }

    fn evaluate(&self, x: &ParamVector) -> Result<f64, EvalError> {
        let file = tempfile::Builder::new()
            .prefix("particle-")
            .suffix(".mswm")
            .tempfile()
            .map_err(|e| EvalError::new(format!("cannot create checkpoint file: {e}")))?;
        checkpoint::save_checkpoint(x, file.path()).map_err(|e| EvalError::new(e.to_string()))?;
        let command = self
            .spec
            .command
            .replace(PLACEHOLDER, &file.path().to_string_lossy());

        let mut cmd = Command::new("sh");
        cmd.arg("-c")
            .arg(&command)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(dir) = &self.spec.workdir {
            cmd.current_dir(dir);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| EvalError::new(format!("cannot spawn `{command}`: {e}")))?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());

        let status = child
            .wait_timeout(Duration::from_secs_f64(self.spec.timeout_secs))
            .map_err(|e| EvalError::new(format!("waiting on `{command}`: {e}")))?;
        let Some(status) = status else {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EvalError::new(format!(
                "`{command}` timed out after {}s",
                self.spec.timeout_secs
            )));
        };
        let stdout = out.join().unwrap_or_default();
        let stderr = err.join().unwrap_or_default();
        if !status.success() {
            return Err(EvalError::new(format!("`{command}` exited with {status}")).with_stderr(stderr));
        }
        parse_final_line(&stdout).map_err(|e| e.with_stderr(stderr))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(command: &str) -> ExternalUtilitySpec {
        ExternalUtilitySpec {
            command: command.to_string(),
            workdir: None,
            timeout_secs: 10.0,
        }
    }

    #[test]
    fn final_line_parsing() {
        assert_eq!(parse_final_line("epoch 1\nepoch 2\n0.75\n").unwrap(), 0.75);
        assert_eq!(parse_final_line("-1.5e-3").unwrap(), -0.0015);
        assert_eq!(parse_final_line("+.5").unwrap(), 0.5);
        assert!(parse_final_line("0.75\ndone").is_err());
        assert!(parse_final_line("inf").is_err());
        assert!(parse_final_line("nan").is_err());
        assert!(parse_final_line("").is_err());
    }

    #[test]
    fn template_with_two_placeholders_rejected() {
        assert!(ExternalUtility::new(spec("cat {checkpoint} {checkpoint}")).is_err());
    }

    #[test]
    fn constant_command() {
        let u = ExternalUtility::new(spec("echo 0.75")).unwrap();
        assert!(!u.deterministic());
        assert_eq!(u.evaluate(&ParamVector::zeros(3)).unwrap(), 0.75);
    }

    #[test]
    fn failing_command_carries_stderr() {
        let u = ExternalUtility::new(spec("echo nope >&2; exit 1")).unwrap();
        let err = u.evaluate(&ParamVector::zeros(1)).unwrap_err();
        assert_eq!(err.stderr.as_deref().map(str::trim), Some("nope"));
    }

    #[test]
    fn timeout_is_enforced() {
        let u = ExternalUtility::new(ExternalUtilitySpec {
            timeout_secs: 0.2,
            ..spec("sleep 5; echo 1")
        })
        .unwrap();
        let err = u.evaluate(&ParamVector::zeros(1)).unwrap_err();
        assert!(err.message.contains("timed out"), "{err}");
    }
}
