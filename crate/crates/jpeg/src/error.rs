use thiserror::Error;

/// Errors produced by the codec.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum JpegError {
    #[error("expected a {expected}-component image, got {actual} components")]
    ComponentCount { expected: usize, actual: usize },
    #[error("dimensions {width}x{height} are not multiples of 8")]
    NotBlockAligned { width: usize, height: usize },
    #[error("image has no samples")]
    Empty,
    #[error("sample buffer holds {actual} values, expected {expected}")]
    SampleCount { expected: usize, actual: usize },
    #[error("quality {0} is outside [1, 100]")]
    Quality(u32),
    #[error("expected {expected} values, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("run length {0} exceeds 15")]
    RunLength(u8),
    #[error("AC run overflows the 63 coefficients of a block")]
    RunOverflow,
    #[error("coefficient value {value} does not fit magnitude category {max_category}")]
    CoefficientRange { value: i32, max_category: u8 },
    #[error("invalid Huffman table: {0}")]
    HuffmanTable(&'static str),
    #[error("no Huffman code for symbol {0:#04x}")]
    MissingSymbol(u8),
    #[error("invalid Huffman code in entropy-coded data")]
    InvalidCode,
    #[error("stream ended before the scan was complete")]
    Truncated,
    #[error("not a JPEG stream (missing SOI)")]
    NotJpeg,
    #[error("missing EOI marker")]
    MissingEoi,
    #[error("unsupported JPEG feature: {0}")]
    Unsupported(String),
    #[error("malformed {segment} segment")]
    Malformed { segment: &'static str },
    #[error("expected restart marker RST{expected}, found {found:#04x}")]
    Restart { expected: u8, found: u8 },
    #[error("stream references undefined {0}")]
    Undefined(&'static str),
    #[error("compressed size is zero")]
    ZeroSize,
    #[error("invalid coefficient dump line {line}: {reason}")]
    Dump { line: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, JpegError>;
