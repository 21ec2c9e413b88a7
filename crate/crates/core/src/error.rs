use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Jpeg(#[from] cdbin_jpeg::JpegError),
    #[error(transparent)]
    Autodiff(#[from] cdbin_autodiff::AutodiffError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {reason}")]
    Image { path: PathBuf, reason: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: document {doc:?} vs ground truth {gt:?}")]
    DimensionMismatch { doc: (usize, usize), gt: (usize, usize) },
    #[error("manifest version {found} is not supported (expected {expected})")]
    ManifestVersion { found: u32, expected: u32 },
    #[error("missing tile file {0}")]
    MissingTile(PathBuf),
    #[error("document {doc} is missing tile ({row}, {col})")]
    MissingTileCoord { doc: String, row: usize, col: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("input {inputs} does not pair with target {targets}")]
    Unpaired { inputs: String, targets: String },
    #[error("non-finite loss component {0}")]
    NonFinite(&'static str),
    #[error("values must be 0 or 1 (or 0/255 for images)")]
    NotBinary,
    #[error("checkpoint does not match model: {0}")]
    CheckpointMismatch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io { path: path.into(), source })
    }
}
