use thiserror::Error;

/// Errors raised by the numerical and protocol layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no input vectors")]
    EmptyInput,

    #[error("every input vector falls below the rank cutoff")]
    AllDegenerate,

    #[error("columns are not orthonormal (max deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("state has zero norm")]
    ZeroState,

    #[error("state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),

    #[error("invalid priors: {0}")]
    InvalidPriors(String),

    #[error("hypotheses have different site counts ({0} vs {1})")]
    SiteCountMismatch(usize, usize),

    #[error("invalid MPS: {0}")]
    InvalidMps(String),

    #[error("dense dimension {dim} exceeds the limit {limit}")]
    TooLarge { dim: usize, limit: usize },

    #[error("full mode needs a dense dimension of at most {limit}, got {dim}")]
    TooLargeForFullMode { dim: usize, limit: usize },

    #[error("compact-mode trace holds no global state")]
    CompactModeHasNoGlobalState,

    #[error("Schmidt rank {rank} exceeds the apparatus dimension {limit}")]
    SchmidtRankOverflow { rank: usize, limit: usize },

    #[error("step rank {rank} exceeds the apparatus dimension {dim}")]
    ApparatusOverflow { rank: usize, dim: usize },

    #[error("hypothesis {index}: component norm {found} deviates from sqrt(prior) {expected}")]
    NormMismatch {
        index: usize,
        found: f64,
        expected: f64,
    },

    #[error("invalid POVM: {0}")]
    InvalidPovm(String),

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("POVM labels do not match the hypotheses: {0}")]
    LabelMismatch(String),

    #[error("states are identical; no conclusive outcome exists")]
    IdenticalStates,

    #[error("unsupported local dimension {0} (only qubits are supported)")]
    UnsupportedDimension(usize),

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("{0} did not converge")]
    NoConvergence(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Numerical guard violations, as opposed to malformed input.
    pub fn is_guard(&self) -> bool {
        matches!(
            self,
            Self::TooLarge { .. }
                | Self::TooLargeForFullMode { .. }
                | Self::SchmidtRankOverflow { .. }
                | Self::ApparatusOverflow { .. }
                | Self::NormMismatch { .. }
                | Self::UnsupportedDimension(_)
                | Self::IdenticalStates
                | Self::NoConvergence(_)
                | Self::NotOrthonormal(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
