use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The CLI maps variants onto exit codes: `Config` and `Validation` exit
/// with 2, `Parse`/`Data`/`Io` with 3, `Numeric` with 4.
#[derive(Debug, Error)]
pub enum LopsError {
    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LopsError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        LopsError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI contract.
    pub fn exit_code(&self) -> i32 {
        match self {
            LopsError::Config(_) | LopsError::Validation(_) => 2,
            LopsError::Parse { .. } | LopsError::Data(_) | LopsError::Io { .. } => 3,
            LopsError::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, LopsError>;
