use thiserror::Error;

/// Errors raised by the channel toolchain.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Power profile or CIR with no usable energy.
    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    /// Snapshot whose delays cannot be normalized (all identical).
    #[error("degenerate snapshot: {0}")]
    DegenerateSnapshot(String),

    /// Validity index undefined because two centroids coincide.
    #[error("degenerate clustering: {0}")]
    DegenerateClustering(String),

    /// Cluster rectangle of zero width.
    #[error("degenerate cluster: {0}")]
    DegenerateCluster(String),

    #[error("K-factor undefined: {0}")]
    UndefinedKFactor(String),

    /// Sample set that admits no fit (constant, empty, ...).
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("value {value} outside domain [{lo}, {hi}]: {what}")]
    Domain {
        what: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("undefined slope: {0}")]
    UndefinedSlope(String),

    /// Nonlinear fit that did not converge; carries the best coefficients seen.
    #[error("fit did not converge after {iterations} iterations (rmse {rmse})")]
    FitFailure {
        iterations: usize,
        rmse: f64,
        best: [f64; 4],
    },

    #[error("parse error in {path}: field `{field}`: {message}")]
    Parse {
        path: String,
        field: String,
        message: String,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by numerically degenerate inputs or failed fits.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegenerateProfile(_)
                | Error::DegenerateSnapshot(_)
                | Error::DegenerateClustering(_)
                | Error::DegenerateCluster(_)
                | Error::UndefinedKFactor(_)
                | Error::DegenerateSample(_)
                | Error::Domain { .. }
                | Error::UndefinedSlope(_)
                | Error::FitFailure { .. }
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::DegenerateProfile(_) => "degenerate_profile",
            Error::DegenerateSnapshot(_) => "degenerate_snapshot",
            Error::DegenerateClustering(_) => "degenerate_clustering",
            Error::DegenerateCluster(_) => "degenerate_cluster",
            Error::UndefinedKFactor(_) => "undefined_k_factor",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::Domain { .. } => "domain",
            Error::UndefinedSlope(_) => "undefined_slope",
            Error::FitFailure { .. } => "fit_failure",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
