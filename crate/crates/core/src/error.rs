use thiserror::Error;

pub type Result<T> = std::result::Result<T, CsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsError {
    #[error("transform length {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("invalid filter: {0}")]
    InvalidFilter(String),

    #[error("invalid wavelet system: {0}")]
    InvalidSystem(String),

    #[error("invalid basis index: {0}")]
    InvalidIndex(String),

    #[error("grid depth {depth} too small for scale {scale}")]
    DepthTooSmall { depth: u32, scale: u32 },

    #[error("sequency {n} is not resolved by a grid of depth {depth}")]
    Aliasing { n: usize, depth: u32 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid level scheme: {0}")]
    InvalidScheme(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("balancing property fails: theta = {theta:e}")]
    BalancingFails { theta: f64 },

    #[error("enumeration cap exceeded: {count} supports > cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("scan cap reached after {steps} steps without meeting the target")]
    ScanCap { steps: u32 },
}
