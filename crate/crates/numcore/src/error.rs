use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("function is not deterministic: {first} != {second}")]
    NonDeterministic { first: f64, second: f64 },
    #[error("invalid direction: {0}")]
    Direction(String),
    #[error("invalid interval [{lo}, {hi}]")]
    Interval { lo: f64, hi: f64 },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("duplicate parameter `{0}`")]
    DuplicateParam(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl NumError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
