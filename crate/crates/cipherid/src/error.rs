//! Crate-wide error type.

/// Errors shared across the emulator, builders, kernels, and protocol.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An operation would need more multiplicative depth than the ciphertext
    /// has left.
    #[error("multiplicative depth exhausted: {0}")]
    DepthExhausted(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch in {op}: {details}")]
    DimensionMismatch { op: &'static str, details: String },

    /// Too few samples for the requested model structure.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Data that cannot be scaled (e.g. all-zero records).
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// The regressor matrix is numerically rank deficient.
    #[error("rank deficient regressor: sigma_min/sigma_max = {ratio:.3e}")]
    RankDeficient { ratio: f64 },

    /// A caller-supplied parameter violates a documented precondition.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    /// No parameter choice satisfies the requested accuracy / budget.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Malformed configuration or wire data.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Operation outside the supported envelope.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
