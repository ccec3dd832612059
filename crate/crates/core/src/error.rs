use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("multiplier search did not converge after {iterations} halvings (bracket [{lo:e}, {hi:e}])")]
    BisectionStalled { iterations: usize, lo: f64, hi: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path} already exists (pass overwrite to replace it)")]
    FileExists { path: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Dimension(msg()))
    }
}
