use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the grid rectangle")]
    OutOfDomain { x: f64, y: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field shape mismatch: expected {expected} samples, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("stability violation at t = {t}: {detail}; reduce dt")]
    StabilityViolation { t: f64, detail: String },

    #[error("time step {dt} exceeds the stable bound {dt_max}")]
    TimeStepTooLarge { dt: f64, dt_max: f64 },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("envelope constants infeasible: {0}")]
    ConstantsInfeasible(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("degenerate level set: |grad phi| = {grad} at ({x}, {y})")]
    DegenerateLevelSet { grad: f64, x: f64, y: f64 },

    #[error("interface entered the wall margin: clearance {clearance} < {margin}")]
    WallMargin { clearance: f64, margin: f64 },

    #[error("level set is empty at level {level}")]
    EmptyInterface { level: f64 },

    #[error("trajectory has no snapshot at t = {t}")]
    MissingSnapshot { t: f64 },

    #[error("under-resolved: h = {h} > eps/4 = {limit} for eps = {eps}")]
    UnderResolved { h: f64, eps: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {detail}")]
    Parse { path: PathBuf, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
