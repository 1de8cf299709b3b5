use numcore::NumError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error("input error: {0}")]
    Input(String),
    #[error("line {line}: parse error: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown {kind} label `{label}`")]
    Label {
        line: usize,
        kind: &'static str,
        label: String,
    },
    #[error("line {line}: {msg}")]
    Record { line: usize, msg: String },
    #[error("skeleton error: {0}")]
    Skeleton(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numeric failures (non-finite values, divergence) as opposed to bad data.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Num(NumError::NonFinite { .. }) | Error::Num(NumError::NonDeterministic { .. }) | Error::Diverged(_)
        )
    }
}

impl Error {
    /// Collapses into a numeric error, for closures handed to gradient checks.
    pub fn into_num(self) -> NumError {
        match self {
            Error::Num(e) => e,
            other => NumError::Argument(other.to_string()),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
