use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported flicker exponent {0}: supported range is [-2, 2]")]
    UnsupportedExponent(f64),

    #[error("incompatible paths: {0}")]
    IncompatiblePaths(String),

    #[error("path of {len} samples is too short for {segments} segment(s) of at least 64 samples")]
    PathTooShort { len: usize, segments: usize },

    #[error("max lag {max_lag} must be below n_steps/10 = {limit}")]
    LagTooLarge { max_lag: usize, limit: usize },

    #[error("frequency {omega} is outside the resolvable band ({lo}, {hi})")]
    OutOfBand { omega: f64, lo: f64, hi: f64 },

    #[error("flicker variance depends on the band cutoffs; a reference grid is required")]
    MissingGrid,

    #[error("integration diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("trajectory {index} (master seed {seed}) diverged at step {step}")]
    TrajectoryDivergence { index: u64, seed: u64, step: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("density matrix lacks single-excitation X structure: entry ({row}, {col}) has magnitude {magnitude:e}")]
    NotXState { row: usize, col: usize, magnitude: f64 },

    #[error("no samples supplied")]
    EmptySamples,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// True for errors raised while integrating a trajectory.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Divergence { .. } | Error::TrajectoryDivergence { .. })
    }
}
