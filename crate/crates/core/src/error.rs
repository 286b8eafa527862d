use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mode {mode} has damping ratio {zeta:.4} >= 1; only underdamped modes are supported")]
    UnsupportedDamping { mode: usize, zeta: f64 },

    /// The information matrix is not positive definite. `sample` is the
    /// prior-sample index when the failure happened inside a Monte-Carlo sum.
    #[error("singular information matrix{}{}", .sample.map(|k| format!(" for prior sample {k}")).unwrap_or_default(), .label.as_ref().map(|l| format!(" (configuration {l})")).unwrap_or_default())]
    SingularInformation {
        sample: Option<usize>,
        label: Option<String>,
    },

    #[error("solver did not converge after {iterations} Newton iterations (kkt residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("enumeration of {count} configurations exceeds the cap of {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("{stage} stage failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Attributes the error to a pipeline stage.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn with_label(self, name: &str) -> Self {
        match self {
            Error::SingularInformation { sample, .. } => Error::SingularInformation {
                sample,
                label: Some(name.to_string()),
            },
            other => other,
        }
    }
}
