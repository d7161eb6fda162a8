use std::fmt;

/// Failure of a subcommand. Configuration problems exit with 2, everything
/// else with 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError::Config(msg.to_string())
    }

    pub fn runtime(msg: impl fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Errors reading or validating inputs are configuration errors.
pub trait InputContext<T> {
    fn input(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> InputContext<T> for Result<T, E> {
    fn input(self) -> CliResult<T> {
        self.map_err(CliError::config)
    }
}

/// Errors while running are runtime errors.
pub trait RunContext<T> {
    fn run(self) -> CliResult<T>;
}

impl<T, E: fmt::Display> RunContext<T> for Result<T, E> {
    fn run(self) -> CliResult<T> {
        self.map_err(CliError::runtime)
    }
}
