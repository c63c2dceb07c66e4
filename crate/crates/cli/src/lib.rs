//! Command implementations behind the `fxclass` binary, the run configuration
//! and the synthetic toy dataset.

pub mod commands;
pub mod config;
pub mod runlog;
pub mod toy;

use fxclass::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("gradient check failed: max relative error {0:.3e}")]
    GradcheckFailed(f64),
}

impl CliError {
    /// 1 for usage and configuration problems, 2 for data problems,
    /// 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::GradcheckFailed(_) => EXIT_NUMERICAL,
            CliError::Core(e) => match e {
                Error::InvalidArgument(_) | Error::InvalidEffect(_) => EXIT_USAGE,
                Error::NonFinite { .. } => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(Error::InvalidEffect("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(Error::Data("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(Error::MissingFile { path: "a.wav".into() }).exit_code(),
            2
        );
        assert_eq!(CliError::from(Error::NonFinite { tensor: "loss".into() }).exit_code(), 3);
    }
}
