use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("precision loss: total mass deviates from 1 by {deviation:e} (budget {budget:e})")]
    PrecisionLoss { deviation: f64, budget: f64 },

    #[error("support too narrow: {truncated:e} of the Gaussian mass falls outside [{lo}, {hi}]")]
    SupportTooNarrow { truncated: f64, lo: i64, hi: i64 },

    #[error("variance must be positive, got {0}")]
    ZeroVariance(f64),

    #[error("number spectrum has a gap at n = {position}")]
    GappedSpectrum { position: i64 },

    #[error("number spectrum must be bounded below by 0, got offset {0}")]
    NegativeOffset(i64),

    #[error("support length {required} exceeds the configured cap {cap}")]
    ResourceExhausted { required: usize, cap: usize },

    #[error("type-class enumeration exceeded the cap of {cap} classes")]
    CombinatorialBlowup { cap: usize },

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("matrix is not a density matrix: {0}")]
    NotDensityMatrix(String),

    #[error("size cap exceeded: {required} > {cap}")]
    CapExceeded { required: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// True for the errors that signal a configured size or work limit was hit.
    pub fn is_resource_cap(&self) -> bool {
        matches!(self, Error::ResourceExhausted { .. } | Error::CombinatorialBlowup { .. } | Error::CapExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
