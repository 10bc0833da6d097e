use thiserror::Error;

/// Errors raised by network construction, inference and data handling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("matrix is not symmetric/Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),
    #[error("class {0} has no members")]
    EmptyClass(usize),
    #[error("vector has numerically zero norm")]
    ZeroVector,
    #[error("imaginary residue {0:e} exceeds tolerance after inverse transform")]
    ImaginaryResidue(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("radius {radius} lies outside the inscribed circle (max {max})")]
    RadiusOutOfBounds { radius: f64, max: f64 },
    #[error("{steps} rotation steps do not divide {gamma} angle bins")]
    StepsNotDividingGamma { steps: usize, gamma: usize },
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { found: u32, expected: u32 },
    #[error("truncated file: {0}")]
    TruncatedFile(String),
    #[error("label count {labels} does not match image count {images}")]
    LabelImageCountMismatch { labels: usize, images: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
