use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{what} index {index} out of bounds (len {len})")]
    OutOfBounds {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Program-and-verify gave up. The cell keeps its last sampled resistance.
    #[error(
        "cell ({row}, {col}) not verified after {attempts} attempts (final resistance {resistance_mohm} MΩ)"
    )]
    ProgramFailure {
        row: usize,
        col: usize,
        attempts: u32,
        resistance_mohm: f64,
    },

    #[error("singular conductance matrix ({0} unknowns)")]
    SingularNetwork(usize),

    #[error("line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn data(line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }
}
