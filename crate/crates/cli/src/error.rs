use thiserror::Error;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

pub(crate) fn data(context: impl std::fmt::Display) -> impl FnOnce(complens::Error) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

pub(crate) fn runtime(context: impl std::fmt::Display) -> impl FnOnce(complens::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

pub(crate) fn io(context: impl std::fmt::Display) -> impl FnOnce(std::io::Error) -> CliError {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}
