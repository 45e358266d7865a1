use thiserror::Error;

/// Errors raised by the numerical kernels and the scenario runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("truncation risk for {what}: requires n_max >= {required}, basis has n_max = {actual}")]
    TruncationRisk {
        what: String,
        required: usize,
        actual: usize,
    },

    #[error("guard band violated: weight {weight:.3e} above level {above} exceeds {limit:.1e}")]
    GuardBand { weight: f64, above: usize, limit: f64 },

    #[error("magnetic field B = {0:e} is at or below the 1e-6 guard; Berry quantities diverge as 1/B")]
    FieldGuard(f64),

    #[error("finite-difference step {step:e}: {reason}")]
    FiniteDifferenceStep { step: f64, reason: String },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("norm drift {drift:.3e} exceeds {limit:.1e} at t = {time}")]
    NormDrift { drift: f64, limit: f64, time: f64 },

    #[error("loop fidelity |<ref|final>| = {0:.4} is below 0.5; the state left the level")]
    LoopFidelity(f64),

    #[error("under-resolved quadrature grid: {0}")]
    Quadrature(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// True for failures raised by numerical guards (as opposed to malformed input).
    pub fn is_numerical_guard(&self) -> bool {
        matches!(
            self,
            Error::TruncationRisk { .. }
                | Error::GuardBand { .. }
                | Error::FieldGuard(_)
                | Error::FiniteDifferenceStep { .. }
                | Error::NormDrift { .. }
                | Error::LoopFidelity(_)
                | Error::Quadrature(_)
        )
    }

    /// Short machine-readable tag used in error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid-argument",
            Error::DimensionMismatch { .. } => "dimension-mismatch",
            Error::TruncationRisk { .. } => "truncation-risk",
            Error::GuardBand { .. } => "guard-band",
            Error::FieldGuard(_) => "field-guard",
            Error::FiniteDifferenceStep { .. } => "fd-step",
            Error::InvalidPath(_) => "invalid-path",
            Error::NormDrift { .. } => "norm-drift",
            Error::LoopFidelity(_) => "loop-fidelity",
            Error::Quadrature(_) => "quadrature",
            Error::Config(_) => "config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
