use thiserror::Error;

/// Errors raised by the pricing engine.
///
/// Variants split into two families: contract/input validation problems
/// (see [`Error::is_validation`]) and numerical failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("barriers cross: lower {lower} >= upper {upper} at t = {t}")]
    BarrierCrossing { t: f64, lower: f64, upper: f64 },
    #[error("barrier level must be positive, got {level} at t = {t}")]
    NonpositiveBarrier { t: f64, level: f64 },
    #[error("maturity must be positive, got {0}")]
    NonpositiveMaturity(f64),
    #[error("contract has no barrier")]
    MissingBarrier,
    #[error("spot {spot} is outside the corridor ({lower}, {upper})")]
    SpotOutsideCorridor { spot: f64, lower: f64, upper: f64 },
    #[error("profile does not match contract: {0}")]
    ProfileMismatch(String),
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),
    #[error("quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("assembly failed: {0}")]
    AssemblyFailure(String),
    #[error("singular diagonal at row {row}: {value:e}")]
    SingularDiagonal { row: usize, value: f64 },
    #[error("transform determinant vanishes at s = {s}")]
    DeterminantVanishing { s: String },
    #[error("Laplace inversion unstable at t = {t}: {diff:e} between node counts")]
    InversionUnstable { t: f64, diff: f64 },
}

impl Error {
    /// True for errors caused by the contract or configuration rather than by
    /// the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::BarrierCrossing { .. }
                | Error::NonpositiveBarrier { .. }
                | Error::NonpositiveMaturity(_)
                | Error::MissingBarrier
                | Error::SpotOutsideCorridor { .. }
                | Error::ProfileMismatch(_)
                | Error::UnsupportedConfiguration(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
