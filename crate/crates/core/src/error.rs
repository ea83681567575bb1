use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point is outside the unique-projection tube (distance {distance:.3e}, limit {limit:.3e})")]
    OutsideReach { distance: f64, limit: f64 },
    #[error("projection onto a point set is ambiguous (tie within {gap:.3e})")]
    AmbiguousProjection { gap: f64 },
    #[error("point is not on the manifold (distance {distance:.3e})")]
    NotOnManifold { distance: f64 },
    #[error("tangent vector of length {length:.6} exceeds the injectivity bound {bound:.6}")]
    BeyondInjectivityRadius { length: f64, bound: f64 },
    #[error("points are (numerically) in each other's cut locus")]
    CutLocus,
    #[error("invalid chart radius {radius}: must lie in (0, {limit})")]
    InvalidRadius { radius: f64, limit: f64 },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
    #[error("time must be positive and finite, got {0}")]
    InvalidTime(f64),
    #[error("quadrature did not converge: relative change {change:.3e} between refinement levels")]
    QuadratureDivergence { change: f64 },
    #[error("marginal density underflows (log p_t = {log_density:.1})")]
    Underflow { log_density: f64 },
    #[error("chart {chart} carries negligible mass ({mass:.3e})")]
    EmptyChart { chart: usize, mass: f64 },
    #[error("operation requires a {expected} manifold")]
    WrongManifoldKind { expected: &'static str },
    #[error("switching thresholds must satisfy t_large < t_small (got {t_large}, {t_small})")]
    BadThresholds { t_large: f64, t_small: f64 },
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    DivergenceDetected { epoch: usize },
    #[error("point clouds have different sizes ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cloud of {size} points exceeds the exact solver limit {limit}; use the sliced estimator")]
    TooLarge { size: usize, limit: usize },
    #[error("{aborted} of {total} trajectories aborted")]
    TrajectoryAbort { aborted: usize, total: usize },
    #[error("invalid manifold: {0}")]
    InvalidManifold(String),
    #[error("invalid density: {0}")]
    InvalidDensity(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for errors that come from numerical evaluation rather than from
    /// bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Underflow { .. }
                | Error::QuadratureDivergence { .. }
                | Error::DivergenceDetected { .. }
                | Error::TrajectoryAbort { .. }
                | Error::OutsideReach { .. }
                | Error::AmbiguousProjection { .. }
                | Error::CutLocus
                | Error::EmptyChart { .. }
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutsideReach { .. } => "OutsideReach",
            Error::AmbiguousProjection { .. } => "AmbiguousProjection",
            Error::NotOnManifold { .. } => "NotOnManifold",
            Error::BeyondInjectivityRadius { .. } => "BeyondInjectivityRadius",
            Error::CutLocus => "CutLocus",
            Error::InvalidRadius { .. } => "InvalidRadius",
            Error::NegativeTime(_) => "NegativeTime",
            Error::InvalidTime(_) => "InvalidTime",
            Error::QuadratureDivergence { .. } => "QuadratureDivergence",
            Error::Underflow { .. } => "Underflow",
            Error::EmptyChart { .. } => "EmptyChart",
            Error::WrongManifoldKind { .. } => "WrongManifoldKind",
            Error::BadThresholds { .. } => "BadThresholds",
            Error::DivergenceDetected { .. } => "DivergenceDetected",
            Error::SizeMismatch(..) => "SizeMismatch",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::TooLarge { .. } => "TooLarge",
            Error::TrajectoryAbort { .. } => "TrajectoryAbort",
            Error::InvalidManifold(_) => "InvalidManifold",
            Error::InvalidDensity(_) => "InvalidDensity",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Unsupported(_) => "Unsupported",
            Error::Checkpoint(_) => "Checkpoint",
            Error::Io(_) => "Io",
        }
    }
}
