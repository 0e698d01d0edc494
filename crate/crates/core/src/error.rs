use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("modulus must be at least 2, got {0}")]
    InvalidModulus(u64),
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("modulus mismatch: {0} vs {1}")]
    ModulusMismatch(u64, u64),
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("index {index} out of range {lo}..={hi}")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("entry ({row}, {col}) violates the unitriangular shape")]
    NotUnitriangular { row: usize, col: usize },
    #[error("observable vector must have first coordinate 0")]
    NonzeroFirstCoordinate,
    #[error("state space of {count} elements exceeds the cap of {cap}")]
    TooLarge { count: u128, cap: u128 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("probability mass drifted to {0} (expected 1)")]
    MassDrift(f64),
    #[error("horizon {horizon} too short: need at least {needed}")]
    HorizonTooShort { horizon: f64, needed: f64 },
    #[error("malformed event log: {0}")]
    Log(String),
}

pub type Result<T> = std::result::Result<T, Error>;
