use crate::dyadic::Scale;

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two families or cells were expected at the same scale.
    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(Scale, Scale),

    /// A coarsening/parent operation was asked for a scale finer than the input.
    #[error("invalid scale: {0}")]
    InvalidScale(String),

    /// A parameter fell outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The operation is undefined on an empty family.
    #[error("empty family: {0}")]
    EmptyFamily(&'static str),

    /// The incidence-density hypothesis of the scale scan failed.
    #[error("incidence density {measured:.6e} below required {required:.6e}; no scan performed")]
    IncidenceDensity { measured: f64, required: f64 },

    /// A tube handed to the heavy-cover pipeline misses the heaviness threshold.
    #[error("tube {tube} is not heavy: {count} incidences < required {required:.3}")]
    NotHeavy {
        tube: String,
        count: u64,
        required: f64,
    },

    /// A nested family had a surviving parent with no surviving children.
    #[error("construction error: {0}")]
    Construction(String),

    /// Malformed run configuration or input file.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
