use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZrpError {
    #[error("occupancy length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("scalar mode mismatch: cannot combine {left:?} with {right:?}")]
    ModeMismatch {
        left: crate::qseries::Mode,
        right: crate::qseries::Mode,
    },

    #[error("singular value in {0}")]
    Singular(String),

    #[error("dimension {dim} exceeds cap {cap}")]
    DimensionCap { dim: u128, cap: usize },

    #[error("null space has dimension {0}, expected 1")]
    NullSpaceDimension(usize),

    #[error("divergent trace: {0}")]
    DivergentTrace(String),

    #[error("Fock window is empty (cutoff {cutoff}, lowering degree {lower})")]
    EmptyWindow { cutoff: usize, lower: usize },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("cannot parse {input:?}: {reason}")]
    Parse { input: String, reason: String },

    #[error("absorbing state: total event rate is zero")]
    Absorbing,

    #[error("not column stochastic: column {column} sums to {sum}")]
    NotStochastic { column: usize, sum: f64 },
}

pub type Result<T> = std::result::Result<T, ZrpError>;
