//! CLI error classification onto the documented exit codes:
//! 2 config, 3 data, 4 numerical failure.

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Data(anyhow::Error),
    Numeric(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e:#}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e:#}"),
        }
    }
}

impl From<dpltm::Error> for CliError {
    fn from(e: dpltm::Error) -> Self {
        use dpltm::Error::*;
        match &e {
            NonFinite { .. }
            | SingularInformation { .. }
            | SearchFailed(_)
            | NoComparablePairs
            | DegenerateTruth => CliError::Numeric(e.into()),
            Csv { .. } | Dimension(_) | Io(_) | Domain(_) | ModelFile(_) | TapeMismatch => {
                CliError::Data(e.into())
            }
        }
    }
}
