use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("principal quantum number {n} is below the supported minimum {min}")]
    Range { n: u32, min: u32 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    #[error("quadrature did not converge (last estimate {last}, previous {previous})")]
    Quadrature {
        last: num_complex::Complex64,
        previous: num_complex::Complex64,
    },

    #[error("invalid value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("missing required key `{0}`")]
    MissingKey(String),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("scan window: {0}")]
    Window(String),

    #[error("axis distortion: {0}")]
    Distortion(String),

    #[error("peak fit did not converge after {iterations} iterations (last iterate {last:?})")]
    FitConvergence { iterations: usize, last: Vec<f64> },

    #[error("fit geometry: {0}")]
    FitGeometry(String),

    #[error("calibration underdetermined: need {needed} sideband pairs, got {got}")]
    Underdetermined { needed: usize, got: usize },

    #[error("calibration: {0}")]
    Calibration(String),

    #[error("unassignable peaks at {orphans:?} (no prediction within {gate} MHz)")]
    Assignment { orphans: Vec<f64>, gate: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}
