use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("malformed audio file: {0}")]
    Format(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("input too short: {0}")]
    TooShort(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("degenerate enrollment: mean d-vector has zero norm")]
    DegenerateEnrollment,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for errors caused by bad data (as opposed to bad configuration).
    /// The CLI maps these to exit code 2.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Format(_)
                | Error::UnsupportedFormat(_)
                | Error::TooShort(_)
                | Error::Degenerate(_)
                | Error::DegenerateEnrollment
                | Error::Io { .. }
                | Error::Json { .. }
        )
    }
}
