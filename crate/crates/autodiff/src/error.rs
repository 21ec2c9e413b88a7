use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("data length {actual} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, actual: usize },
    #[error("tensors are limited to 4 dimensions, got {0}")]
    Rank(usize),
    #[error("{op} needs even spatial dimensions, got {height}x{width}")]
    OddDimensions { op: &'static str, height: usize, width: usize },
    #[error("batch norm channel has a single element in training mode")]
    DegenerateBatch,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter {0} has no gradient")]
    MissingGradient(String),
    #[error("duplicate parameter name {0}")]
    DuplicateName(String),
    #[error("unknown parameter {0}")]
    UnknownParam(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("target values must be 0 or 1")]
    Target,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for AutodiffError {
    fn from(e: std::io::Error) -> Self {
        AutodiffError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

pub(crate) fn shape_err<T>(op: &'static str, detail: impl Into<String>) -> Result<T> {
    Err(AutodiffError::Shape { op, detail: detail.into() })
}
