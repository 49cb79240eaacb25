use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input data or options; exit code 2.
    #[error("{0}")]
    Input(String),
    /// The computation itself failed; exit code 3.
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<tvdar::Error> for CliError {
    fn from(e: tvdar::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}
