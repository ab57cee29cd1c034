use thiserror::Error;

/// Every failure a subcommand can end with. The message prefix and the
/// exit code are fixed per variant.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("failed: {0}")]
    Task(String),
    #[error("infra: {0}")]
    Infra(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Task(_) => 1,
            Self::Usage(_) => 2,
            Self::Infra(_) => 3,
        }
    }
}

impl From<tapwise::device::DeviceError> for CliError {
    fn from(e: tapwise::device::DeviceError) -> Self {
        Self::Infra(e.to_string())
    }
}

impl From<tapwise::kb::KbError> for CliError {
    fn from(e: tapwise::kb::KbError) -> Self {
        Self::Infra(e.to_string())
    }
}
