use fairsize_core::AuditError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Audit(#[from] AuditError),
}

impl CliError {
    /// 0 success, 2 validation/config, 3 data, 4 infeasible design,
    /// 5 degenerate statistics.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io { .. } => 3,
            CliError::Audit(e) => match e {
                AuditError::Domain(_) | AuditError::Contract(_) => 2,
                AuditError::InfeasibleDesign { .. } => 4,
                AuditError::UndefinedMetric { .. }
                | AuditError::DegenerateGroup(_)
                | AuditError::DegenerateData(_)
                | AuditError::UnreliableEstimate { .. }
                | AuditError::DegenerateScenario(_) => 5,
            },
        }
    }

    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
