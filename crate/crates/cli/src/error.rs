use thiserror::Error;

/// Exit code for invalid configuration (parse, validation, mismatched model).
pub const EXIT_CONFIG: u8 = 2;
/// Exit code for failures after the configuration was accepted.
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn config(msg: impl ToString) -> Self {
        Self::Config(msg.to_string())
    }

    pub fn runtime(msg: impl ToString) -> Self {
        Self::Runtime(msg.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => EXIT_CONFIG,
            Self::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::runtime(e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::runtime(e)
    }
}
