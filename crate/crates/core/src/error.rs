use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid potential: {0}")]
    InvalidModel(String),

    #[error("potential is not monotonic on [0, {x_max}]: V'({at}) = {slope}")]
    NonMonotonic { x_max: f64, at: f64, slope: f64 },

    #[error("gap equation has no sign change on [0, {x_hi}]")]
    NoBracket { x_hi: f64 },

    #[error("root finder did not converge: {0}")]
    NoConvergence(String),

    #[error("degenerate motion: perturbation strength s = {s} is at or below {s_min}")]
    Degenerate { s: f64, s_min: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("found {found} of {wanted} turning events before t = {t_max}")]
    EventNotFound { found: usize, wanted: usize, t_max: f64 },

    #[error("turning point is not simple: {0}")]
    NonSimpleTurningPoint(String),

    #[error("monodromy matrix is untrustworthy: {0}")]
    InvalidMatrix(String),

    #[error("trajectory undersampled: stride {stride} exceeds {limit}")]
    Undersampled { stride: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid has {points} points, above the cap of {cap}")]
    GridTooLarge { points: usize, cap: usize },
}

impl Error {
    /// True for errors caused by the caller's inputs rather than by the
    /// numerics (the CLI maps these to exit code 2, the rest to 3).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::InvalidModel(_)
                | Error::NonMonotonic { .. }
                | Error::Degenerate { .. }
                | Error::InvalidGrid(_)
                | Error::GridTooLarge { .. }
                | Error::Undersampled { .. }
                | Error::InsufficientData(_)
        )
    }
}
