use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage an estimator error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Hyperparameters,
    Weights,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Hyperparameters => f.write_str("hyperparameter"),
            Stage::Weights => f.write_str("weight"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("transfer function is not strictly proper (numerator degree {num}, denominator degree {den})")]
    NotStrictlyProper { num: usize, den: usize },

    #[error("denominator has a zero leading coefficient")]
    ZeroLeadingCoefficient,

    #[error("period ratio {0} is not an integer")]
    NonIntegerRatio(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("s = {s} lies within tolerance of closed-form pole {pole}")]
    NearPole { s: Complex64, pole: f64 },

    #[error("second moment is inconsistent with the model: ||C||^2 - ||R2||^2 = {0}")]
    InconsistentMoment(f64),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    ConfigWrite(#[from] toml::ser::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(self, stage: Stage) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
