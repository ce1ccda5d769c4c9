use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("metric coefficients are not symmetric")]
    NotSymmetric,

    #[error("metric is not positive definite")]
    NotPositiveDefinite,

    #[error("metric condition number {condition:e} exceeds the limit {limit:e}")]
    IllConditioned { condition: f64, limit: f64 },

    #[error("no isometries from dimension {src} into dimension {tgt}")]
    NoIsometries { src: usize, tgt: usize },

    #[error("orientation is only defined for square maps (got {src} -> {tgt})")]
    OrientationUndefined { src: usize, tgt: usize },

    #[error("point {point:?} lies outside the coordinate patch")]
    OutsidePatch { point: Vec<f64> },

    #[error("geodesic in direction {direction:?} leaves the coordinate patch")]
    GeodesicLeftPatch { direction: Vec<f64> },

    #[error("failed to connect {from:?} and {to:?} by a geodesic: {reason}")]
    ConnectFailed {
        from: Vec<f64>,
        to: Vec<f64>,
        reason: String,
    },

    #[error("chart image does not contain the ball of radius {needed}")]
    ChartTooSmall { needed: f64 },

    #[error("chart is not centered: phi(center) = {image:?}")]
    ChartNotCentered { image: Vec<f64> },

    #[error("empty sample set")]
    EmptySamples,

    #[error("invalid exponent p = {0}; need 1 < p < infinity")]
    InvalidExponent(f64),

    #[error("grids do not match")]
    GridMismatch,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
