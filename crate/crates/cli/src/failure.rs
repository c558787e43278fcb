//! Failure classification and exit-code mapping.

use std::fmt::Display;

/// A command failure, split into the two non-zero exit classes: bad
/// usage/configuration (2) and runtime aborts (3).
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn usage(err: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(err.into())
    }

    pub fn runtime(err: impl Into<anyhow::Error>) -> Self {
        Failure::Runtime(err.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    /// One machine-parsable stderr line.
    pub fn as_json_line(&self) -> String {
        let (kind, err) = match self {
            Failure::Usage(e) => ("usage", e),
            Failure::Runtime(e) => ("runtime", e),
        };
        serde_json::json!({ "kind": kind, "error": format!("{err:#}") }).to_string()
    }
}

/// Attaches a failure class to any fallible expression.
pub trait Classify<T> {
    fn or_usage(self) -> Result<T, Failure>;
    fn or_runtime(self) -> Result<T, Failure>;
    fn usage_context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure>;
    fn runtime_context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure>;
}

impl<T, E> Classify<T> for Result<T, E>
where
    E: std::error::Error + Send + Sync + 'static,
{
    fn or_usage(self) -> Result<T, Failure> {
        self.map_err(Failure::usage)
    }

    fn or_runtime(self) -> Result<T, Failure> {
        self.map_err(Failure::runtime)
    }

    fn usage_context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(anyhow::Error::new(e).context(msg.to_string())))
    }

    fn runtime_context(self, msg: impl Display + Send + Sync + 'static) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(anyhow::Error::new(e).context(msg.to_string())))
    }
}

pub fn usage_msg(msg: impl Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

pub fn runtime_msg(msg: impl Display) -> Failure {
    Failure::Runtime(anyhow::anyhow!("{msg}"))
}
