use thiserror::Error;

/// Errors produced by the deconvolution library.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its domain (non-positive mean, weight outside
    /// [0, 1], and so on).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Inputs whose dimensions do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Structurally valid input that carries no usable signal (e.g. an
    /// all-zero coverage table).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// An ill-formed stutter graph, such as a cycle in the parent direction.
    #[error("stutter graph error: {0}")]
    StutterGraph(String),

    /// Parameter estimation could not be carried out at all (as opposed to
    /// merely failing to converge, which is reported through a flag).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// A malformed input file, with the file and line that caused it.
    #[error("{path}:{line}: {message}")]
    Input {
        path: String,
        line: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(path: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Input {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
