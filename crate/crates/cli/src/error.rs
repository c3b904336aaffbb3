use std::path::{Path, PathBuf};

/// Errors of the command line, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}:{line}: {field}: {message}", file.display())]
    Schema {
        file: PathBuf,
        /// 1-based line of a text file, or 1-based tensor index of a binary one.
        line: usize,
        field: String,
        message: String,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("missing input {}: produce it with `actube {producer}`", file.display())]
    MissingInput { file: PathBuf, producer: &'static str },
    #[error("{context}: {source}")]
    Processing {
        context: String,
        #[source]
        source: actube_core::Error,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn schema(file: &Path, line: usize, field: impl Into<String>, message: impl ToString) -> Self {
        CliError::Schema {
            file: file.to_path_buf(),
            line,
            field: field.into(),
            message: message.to_string(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn processing(context: impl Into<String>, source: actube_core::Error) -> Self {
        CliError::Processing {
            context: context.into(),
            source,
        }
    }

    /// sysexits.h codes.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema { .. } => 65,
            CliError::Config(_) => 78,
            CliError::MissingInput { .. } => 66,
            CliError::Processing { .. } => 70,
            CliError::Io { .. } => 74,
        }
    }
}
