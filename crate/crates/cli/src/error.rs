use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config {origin}: key `{key}`: {message}")]
    Config { origin: String, key: String, message: String },
    #[error(transparent)]
    Core(#[from] treesegnet::Error),
}

impl CliError {
    /// 1 usage, 2 data, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        use treesegnet::Error as E;
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 1,
            CliError::Core(E::InvalidArgument(_)) => 1,
            CliError::Core(E::Invariant(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    /// The message on one line, for scripts.
    pub fn one_line(&self) -> String {
        let text = self.to_string();
        text.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}
