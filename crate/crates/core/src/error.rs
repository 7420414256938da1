use thiserror::Error;

/// Errors raised by the simulator, estimator and scenario runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Interrogation so long that no effective atoms remain, or a true field
    /// outside the estimator's initial interval.
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("invalid calibration: s_max ({s_max}) must exceed s_min ({s_min})")]
    InvalidCalibration { s_min: f64, s_max: f64 },

    #[error("re-centering failed: estimate {b_est} nT outside [{b_lo}, {b_hi}] nT")]
    Recentre { b_est: f64, b_lo: f64, b_hi: f64 },

    #[error("degenerate posterior: {0}")]
    DegeneratePosterior(String),

    #[error("iteration {i} outside 1..={max}")]
    IterationOutOfRange { i: usize, max: usize },

    #[error("fit failed: {reason} (residual rms {residual_rms:.3e})")]
    Fit { reason: String, residual_rms: f64 },

    #[error("empty run log")]
    EmptyLog,

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short machine-parsable tag used on the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid-parameter",
            Error::InvalidConfiguration(_) => "invalid-configuration",
            Error::InvalidCalibration { .. } => "invalid-calibration",
            Error::Recentre { .. } => "recentre",
            Error::DegeneratePosterior(_) => "degenerate-posterior",
            Error::IterationOutOfRange { .. } => "iteration-out-of-range",
            Error::Fit { .. } => "fit",
            Error::EmptyLog => "empty-log",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: reason.into(),
        })
    }
}
