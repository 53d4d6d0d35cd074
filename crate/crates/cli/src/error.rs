use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("{0}")]
    Tractability(String),
    #[error(transparent)]
    Engine(binmp_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Tractability(_) => 4,
            CliError::Engine(_) | CliError::Io(_) | CliError::Csv(_) => 1,
        }
    }

    /// Wraps an error raised while reading or generating a dataset.
    pub fn data(err: binmp_core::Error) -> Self {
        match err {
            binmp_core::Error::Tractability(m) => CliError::Tractability(m),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<binmp_core::Error> for CliError {
    fn from(err: binmp_core::Error) -> Self {
        use binmp_core::Error as E;
        match err {
            E::Tractability(m) => CliError::Tractability(format!("intractable instance: {m}")),
            E::Contract(m) => CliError::Config(m),
            e @ (E::Parse { .. } | E::EmptyClass(_) | E::Format(_)) => CliError::Data(e.to_string()),
            other => CliError::Engine(other),
        }
    }
}
