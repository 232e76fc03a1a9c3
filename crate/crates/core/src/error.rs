//! Crate-wide error type.

/// Errors produced by quantizers, regularizers, proximal operators, models,
/// training loops, and data loading.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation received an empty parameter vector.
    #[error("empty parameter vector")]
    EmptyInput,

    /// Two vectors that must share a length do not.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A codebook was requested with more columns than coordinates.
    #[error("invalid codebook: {k} bits exceed dimension {d}")]
    InvalidCodebook { k: usize, d: usize },

    /// A regularization or prox strength was negative.
    #[error("regularization strength must be nonnegative, got {0}")]
    NegativeStrength(f64),

    /// A regularizer specification failed validation.
    #[error("invalid regularizer spec: {0}")]
    InvalidSpec(String),

    /// The requested operation is undefined for this regularizer kind.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// An input lies outside the operator's stated domain.
    #[error("input outside operator domain: {0}")]
    OutOfDomain(String),

    /// A scalar argument violated a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A non-finite value (NaN or infinity) appeared mid-computation.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// A model specification failed validation.
    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    /// CSV row failed to parse.
    #[error("csv parse error at line {line}: {message}")]
    CsvRow { line: u64, message: String },

    /// A feature field was not a number.
    #[error("non-numeric value in column '{column}' at line {line}")]
    CsvField { column: String, line: u64 },

    /// The declared label column is absent from the header.
    #[error("label column '{0}' not found in header")]
    MissingLabelColumn(String),

    /// A dataset violated a structural invariant.
    #[error("invalid dataset: {0}")]
    InvalidData(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
