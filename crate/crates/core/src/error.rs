use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed or unsupported token in a Y4M stream header.
    #[error("y4m header: bad token `{0}`")]
    Y4mHeader(String),

    /// Stream ended in the middle of a frame payload.
    #[error("y4m payload truncated in frame {0}")]
    Y4mTruncated(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("block dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    /// The perturbed run moved the anchor distortion by too little to
    /// form a stable observed ratio.
    #[error("observation spread {0} below resolution threshold")]
    DegenerateObservation(f64),

    #[error("rate-distortion curve: {0}")]
    Curve(String),
}

pub type Result<T> = std::result::Result<T, Error>;
