use std::path::PathBuf;

/// Broad failure category, used by the CLI to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numerical,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate calibration in channel {channel} ({wavelength} nm): |W - D| < {epsilon:e} at pixel ({x}, {y})")]
    DegenerateCalibration {
        channel: usize,
        wavelength: f64,
        x: usize,
        y: usize,
        epsilon: f64,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("wavelength {0} nm not present in stack")]
    WavelengthAbsent(f64),

    #[error("degenerate region {region}: {reason}")]
    DegenerateRegion { region: usize, reason: String },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("class {class} has {count} samples, need at least {required}")]
    TooFewSamples {
        class: usize,
        count: usize,
        required: usize,
    },

    #[error("stratification failed: {0}")]
    Stratification(String),

    #[error("solver did not converge after {iterations} iterations (max KKT violation {violation:e})")]
    NotConverged { iterations: usize, violation: f64 },

    #[error("pairwise coupling did not converge after {iterations} iterations (residual {residual:e})")]
    CouplingNotConverged { iterations: usize, residual: f64 },

    #[error("unsupported model format {0:?}")]
    ModelFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::ModelFormat(_) => ErrorKind::Config,
            Error::NotConverged { .. } | Error::CouplingNotConverged { .. } | Error::NonFinite(_) => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
