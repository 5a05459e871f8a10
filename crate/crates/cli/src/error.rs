use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, files, data or configuration.
    #[error("{0}")]
    Input(String),

    /// Numerical or sampling failure on valid input.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn input(msg: impl std::fmt::Display) -> Self {
        CliError::Input(msg.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<qaft::Error> for CliError {
    fn from(e: qaft::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

/// Attach a file or section name to an error, keeping its class.
pub trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T>;
}

impl<T> Context<T> for Result<T, qaft::Error> {
    fn context(self, what: impl std::fmt::Display) -> Result<T> {
        self.map_err(|e| match CliError::from(e) {
            CliError::Input(m) => CliError::Input(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
        })
    }
}
