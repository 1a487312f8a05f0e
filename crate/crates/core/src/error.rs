use thiserror::Error;

/// Errors raised across the transform, solver and oracle layers.
#[derive(Debug, Error)]
pub enum HlError {
    #[error("decay class {0} is not integrable on [0, inf)")]
    NonIntegrableDecay(String),
    #[error("quadrature failed to converge: {0}")]
    QuadratureNotConverged(String),
    #[error("principal value integral did not converge at x = {x}: {detail}")]
    PvNotConverged { x: f64, detail: String },
    #[error("grid too coarse: composition and principal-value paths disagree by {0:.3e}")]
    GridTooCoarse(f64),
    #[error("unsupported boundary data: {0}")]
    UnsupportedBoundaryData(String),
    #[error("degenerate coefficient: {condition}")]
    DegenerateCoefficient { condition: String },
    #[error("sign condition violated: {condition}")]
    SignCondition { condition: String },
    #[error("phase function mu is not invertible on the sampled domain")]
    NonInvertiblePhase,
    #[error("limit of f/rho at the boundary does not stabilise numerically")]
    MissingLimit,
    #[error("degenerate simultaneous system: {condition}")]
    DegenerateSystem { condition: String },
    #[error("denominator A + B xi^2 has a real root: {condition}")]
    RootedDenominator { condition: String },
    #[error("time clock k(t) is not strictly increasing")]
    NonInvertibleClock,
    #[error("discriminant Delta = beta~^2 - 4 gamma alpha~ must be positive, got {0:.6e}")]
    NegativeDiscriminant(f64),
    #[error("sample point {0} lies at or below the domain boundary")]
    DomainViolation(f64),
    #[error("finite-difference truncation too tight: mass near x_max is {0:.3e} of total")]
    TruncationTooTight(f64),
    #[error("spectral truncation insufficient: integrand tail {0:.3e} above tolerance at xi_max")]
    TruncationInsufficient(f64),
    #[error("fields evaluated on different grids")]
    GridMismatch,
    #[error("lift function violates its boundary identity by {0:.3e}")]
    BadLift(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid function data: {0}")]
    InvalidFunction(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl HlError {
    /// True for the fail-fast degeneracy guards on the method's side
    /// conditions (CLI exit code 3).
    pub fn is_degeneracy(&self) -> bool {
        matches!(
            self,
            HlError::DegenerateCoefficient { .. }
                | HlError::SignCondition { .. }
                | HlError::DegenerateSystem { .. }
                | HlError::RootedDenominator { .. }
                | HlError::NegativeDiscriminant(_)
                | HlError::NonInvertibleClock
                | HlError::NonInvertiblePhase
        )
    }
}

pub type Result<T> = std::result::Result<T, HlError>;
