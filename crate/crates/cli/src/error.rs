use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use turnover_core::balance::BalanceError;
use turnover_core::dataset::DatasetError;
use turnover_core::eval::EvalError;
use turnover_core::features::FeatureError;
use turnover_core::models::ModelError;
use turnover_core::policy::PolicyError;
use turnover_core::synthgen::GeneratorError;

/// Failure of a pipeline stage or command.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("output directory {} is not writable: {reason}", path.display())]
    NotWritable { path: PathBuf, reason: String },
    #[error("{}: {message}", path.display())]
    Artifact { path: PathBuf, message: String },
    #[error("generate: {0}")]
    Generator(#[from] GeneratorError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: StageError,
    },
    #[error("policy {origin}: {source}")]
    Policy {
        origin: String,
        #[source]
        source: PolicyError,
    },
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

impl CliError {
    pub fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// True when the failure is a model/data schema fingerprint mismatch.
    pub fn is_fingerprint_mismatch(&self) -> bool {
        matches!(
            self,
            CliError::Stage {
                source: StageError::Model(ModelError::FingerprintMismatch { .. })
                    | StageError::Policy(PolicyError::Model(ModelError::FingerprintMismatch { .. })),
                ..
            }
        )
    }
}

pub trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T, CliError>;
}

impl<T, E: Into<StageError>> StageContext<T> for Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage {
            stage,
            source: e.into(),
        })
    }
}
