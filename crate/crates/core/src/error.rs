use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Every variant carries a stable machine-readable code (see [`Error::code`])
/// that the command-line front end prints on stderr.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid input: {0}")]
    Input(String),

    /// Malformed or out-of-range file contents. `code` is one of the
    /// `E_*` constants below.
    #[error("{message}")]
    Format { code: &'static str, message: String },

    #[error("rate overflow at row {row}: exponent {exponent} exceeds the guard")]
    RateOverflow { row: usize, exponent: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub const E_COUNTS_NEGATIVE: &str = "E_COUNTS_NEGATIVE";
pub const E_COUNTS_PARSE: &str = "E_COUNTS_PARSE";
pub const E_COUNTS_HEADER: &str = "E_COUNTS_HEADER";
pub const E_EVENTS_PARSE: &str = "E_EVENTS_PARSE";
pub const E_MODEL_PARSE: &str = "E_MODEL_PARSE";

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "E_DIMENSION",
            Error::Parameter(_) => "E_PARAMETER",
            Error::Input(_) => "E_INPUT",
            Error::Format { code, .. } => code,
            Error::RateOverflow { .. } => "E_RATE_OVERFLOW",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Io(_) => "E_IO",
            Error::Json(_) => E_MODEL_PARSE,
            Error::Csv(_) => E_COUNTS_PARSE,
        }
    }

    /// True for failures of the numerical routines, as opposed to bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::RateOverflow { .. } | Error::Numeric(_))
    }

    pub(crate) fn format(code: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            code,
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
