use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or unsupported configuration value.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed external input. `row` is 1-based and counts the header line.
    #[error("input error{}: {message}", location(.row, .column))]
    Input {
        message: String,
        row: Option<usize>,
        column: Option<String>,
    },

    #[error("numeric error at sample {index}: {message}")]
    Numeric { index: usize, message: String },

    #[error("estimator not applicable: {0}")]
    EstimatorInapplicable(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("hypothesis {hypothesis}: {source}")]
    Hypothesis {
        hypothesis: String,
        #[source]
        source: Box<Error>,
    },

    #[error("cell {cell}: {failures} of {trials} trials failed numerically")]
    FailureThreshold {
        cell: String,
        failures: usize,
        trials: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn location(row: &Option<usize>, column: &Option<String>) -> String {
    match (row, column) {
        (Some(r), Some(c)) => format!(" (row {r}, column {c})"),
        (Some(r), None) => format!(" (row {r})"),
        (None, Some(c)) => format!(" (column {c})"),
        (None, None) => String::new(),
    }
}

impl Error {
    pub(crate) fn input(message: impl Into<String>) -> Self {
        Error::Input {
            message: message.into(),
            row: None,
            column: None,
        }
    }

    pub(crate) fn input_at(message: impl Into<String>, row: usize, column: Option<&str>) -> Self {
        Error::Input {
            message: message.into(),
            row: Some(row),
            column: column.map(str::to_owned),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numbers rather than by the caller.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Numeric { .. } | Error::Degenerate(_) | Error::FailureThreshold { .. } => true,
            Error::Hypothesis { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
