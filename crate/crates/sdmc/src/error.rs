use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum Error {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("no prime q with {n} | (q-1) found below {bound}")]
    SearchBoundExceeded { n: u64, bound: u64 },
    #[error("{n} does not divide q-1 = {q_minus_1}")]
    OrderNotDividing { n: u64, q_minus_1: u64 },
    #[error("expected sequence of length {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("duplicate interpolation abscissa")]
    DuplicateAbscissa,
    #[error("need at least {needed} interpolation points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrices belong to different fields (q = {0} vs q = {1})")]
    FieldMismatch(u64, u64),
    #[error("{dim} is not divisible by {by}")]
    IndivisibleDimension { dim: usize, by: usize },
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("share parameter invariant violated: {0}")]
    ParamInvariant(String),
    #[error("missing share for server {0}")]
    MissingShare(usize),
    #[error("shares carry mismatched tags or parameters")]
    TagMismatch,
    #[error("illegal share conversion: {0}")]
    IllegalConversion(String),
    #[error("evaluation points must be distinct")]
    NonDistinctBetas,
    #[error("only {got} complete server groups survive, need {needed}")]
    InsufficientGroups { needed: usize, got: usize },
    #[error("enumeration space of {0} states exceeds the audit bound")]
    StateSpaceTooLarge(u64),
    #[error("random mask stayed singular after {0} retries")]
    MaskRetriesExhausted(u32),
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("invalid matrix file: {0}")]
    InvalidMatrixFile(String),
}
