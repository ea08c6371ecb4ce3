use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("n_points must be a power of two >= 8, got {0}")]
    BadPointCount(usize),
    #[error("degenerate interval [{z_min}, {z_max}]")]
    DegenerateInterval { z_min: f64, z_max: f64 },
    #[error("non-finite grid bound")]
    NonFinite,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("negative time tau = {0}")]
    NegativeTime(f64),
    #[error("unknown schedule `{0}`")]
    UnknownSchedule(String),
    #[error("schedule `{schedule}` has no parameter `{param}`")]
    UnknownParameter { schedule: String, param: String },
    #[error("schedule parameter `{0}` must be finite")]
    NonFiniteParameter(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("duplicate key `{0}`")]
    DuplicateKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{key}`: cannot parse `{value}`")]
    BadValue { key: String, value: String },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Reasons a simulation stops before `t_final`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolveError {
    #[error(
        "edge leak at tau = {tau}: probability {left:e} (left) / {right:e} (right) in the outer 5% of the grid exceeds 1e-6"
    )]
    EdgeLeak { tau: f64, left: f64, right: f64 },
    #[error(
        "momentum leak at tau = {tau}: probability {mass:e} near the largest representable momentum exceeds 1e-6; refine the grid"
    )]
    MomentumLeak { tau: f64, mass: f64 },
    #[error("non-finite field value detected at tau = {tau}")]
    NonFinite { tau: f64 },
    #[error("field grid does not match the configured grid")]
    GridMismatch,
    #[error("initial field is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum ObservableError {
    #[error("cat decomposition needs exactly two peaks, found {0}")]
    DecompositionUnavailable(usize),
    #[error("component ratio undefined: denominator mass {0:e} below 1e-6")]
    RatioUndefined(f64),
    #[error("Bloch vector magnitude {0:e} too small to define a direction")]
    DegenerateBloch(f64),
    #[error("effective field vanishes at tau = {0}")]
    DegenerateField(f64),
    #[error("need at least {needed} two-peak samples spanning two periods, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("oracle limited to n_points <= 256, got {0}")]
    GridTooLarge(usize),
    #[error("oracle interval {dt_oracle} exceeds dt/4 = {limit}")]
    IntervalTooCoarse { dt_oracle: f64, limit: f64 },
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed file: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl IoError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        IoError::Malformed {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
