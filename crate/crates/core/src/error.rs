use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("post-magnet drift speed must be non-zero and finite, got {0} m/s")]
    NonPositiveDrift(f64),

    #[error("time {t} s outside the valid range [{min}, {max}] s")]
    TimeOutOfRange { t: f64, min: f64, max: f64 },

    #[error("polar angle {0} rad is outside the open interval (0, pi)")]
    InvalidAngle(f64),

    #[error("density {rho:e} below the node floor {floor:e}; the trajectory left the support")]
    NodeDensityZero { rho: f64, floor: f64 },

    #[error("step {dt:e} s exceeds the stability bound {bound:e} s")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("step from t = {t:e} s by {dt:e} s crosses the magnet exit at {boundary:e} s")]
    PhaseBoundary { t: f64, dt: f64, boundary: f64 },

    #[error("invalid run specification: {0}")]
    InvalidSpec(String),

    #[error("integration failed for particle {index}: {source}")]
    IntegrationFailure {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("pair {pair_id}: particle {particle} ended undecided")]
    UndecidedOutcome { pair_id: u64, particle: char },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid too small: probability {mass:e} within 3 cells of the boundary")]
    GridTooSmall { mass: f64 },

    #[error("grids or times differ: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization failed: {0}")]
    Serialization(String),
}
