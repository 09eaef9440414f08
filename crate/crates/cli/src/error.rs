use std::path::PathBuf;

use upms::agents::TrainError;
use upms::instance::InstanceError;
use upms::metrics::OracleError;
use upms::nn::NnError;

/// Failure of a command. `category` is the machine-readable tag printed as
/// `error[category]: message`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("refused: {0}")]
    Oracle(#[from] OracleError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] NnError),
    #[error("manifest: {0}")]
    Manifest(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Instance(_) => "instance",
            CliError::Train(TrainError::Divergence { .. }) => "divergence",
            CliError::Train(TrainError::Config(_)) => "usage",
            CliError::Train(_) => "train",
            CliError::Oracle(_) => "oracle",
            CliError::Checkpoint(_) => "checkpoint",
            CliError::Manifest(_) => "manifest",
        }
    }

    /// 2 for usage errors, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.category() == "usage" {
            2
        } else {
            1
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// `error[category]: message` on a single line.
    pub fn line(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {}", self.category(), msg)
    }
}
