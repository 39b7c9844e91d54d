use thiserror::Error;

/// Errors raised by the simulation and inversion routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate Lorentz pole at omega = {omega}")]
    DegeneratePole { omega: f64 },
    #[error("point {point:?} lies outside the imaging domain")]
    OutOfDomain { point: [f64; 3] },
    #[error("coincident points: kernel is singular")]
    CoincidentPoints,
    #[error("wavenumber must be positive")]
    ZeroWavenumber,
    #[error("mode n0 = {0} has no analytic data; use the voxel spectrum")]
    UnsupportedMode(usize),
    #[error("voxel resolution {0} is below the minimum of 8 per axis")]
    ResolutionTooLow(usize),
    #[error("eigen-solver did not converge after {iterations} iterations (last change {change:e})")]
    NonConvergence { iterations: usize, change: f64 },
    #[error("dispersion function vanishes (|Lambda| = {0:e}); resonance singularity")]
    ResonanceSingularity(f64),
    #[error("damping too large for a real resonance (Delta = {0:e})")]
    Overdamped(f64),
    #[error("degenerate resonance denominator")]
    DegenerateDenominator,
    #[error("singular matrix at pivot {0}")]
    SingularMatrix(usize),
    #[error("ill-conditioned system (condition {cond:e}); reseed the centers or change the basis")]
    IllConditioned { cond: f64 },
    #[error("evaluation point within {min_distance} of particle {particle}")]
    TooCloseToParticle { particle: usize, min_distance: f64 },
    #[error("missing-injection-level: no contrast rows for injection count {0}")]
    MissingInjectionLevel(usize),
    #[error("flat signal: peak/median ratio {ratio:.3} below 10")]
    FlatSignal { ratio: f64 },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("Foldy system not diagonally dominant: row {particle} sums to {row_sum:.3e}")]
    DominanceViolation { particle: usize, row_sum: f64 },
    #[error("scene validation failed: {0}")]
    InvalidScene(String),
}

impl Error {
    /// Whether the error is a numerical failure as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegeneratePole { .. }
                | Error::NonConvergence { .. }
                | Error::ResonanceSingularity(_)
                | Error::Overdamped(_)
                | Error::DegenerateDenominator
                | Error::SingularMatrix(_)
                | Error::IllConditioned { .. }
                | Error::FlatSignal { .. }
                | Error::NonFinite(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
