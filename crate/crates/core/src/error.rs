use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation did not hold.
    #[error("contract violation: {0}")]
    Contract(String),
    /// An unnormalized histogram had no mass in any bin.
    #[error("degenerate survey: no sample landed in any bin")]
    DegenerateSurvey,
    /// Both unnormalized message terms were zero.
    #[error("contradictory messages: both unnormalized terms are zero")]
    Contradiction,
    #[error("intractable instance: {0}")]
    Tractability(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("class {0} is absent from the data")]
    EmptyClass(u8),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
