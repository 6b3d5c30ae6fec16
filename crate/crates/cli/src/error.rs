use signenc::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{failed} of {total} recordings failed to ingest")]
    Ingest { failed: usize, total: usize },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    /// 0 success, 1 usage or config, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Ingest { .. } => 2,
            CliError::Core(e) => match e {
                Error::Config(_) | Error::Argument(_) => 1,
                Error::Training { .. } => 3,
                _ => 2,
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
        assert_eq!(CliError::from(Error::Config("x".into())).exit_code(), 1);
        assert_eq!(CliError::from(Error::Manifest("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(Error::NotFound("m".into())).exit_code(), 2);
        let t = Error::Training {
            epoch: 1,
            batch: 2,
            message: "nan".into(),
        };
        assert_eq!(CliError::from(t).exit_code(), 3);
    }
}
