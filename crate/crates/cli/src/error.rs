use std::path::Path;

use bedexit::imaging::ImagingError;
use bedexit::metrics::MetricsError;
use bedexit::model::ModelError;
use bedexit::pipeline::PipelineError;
use bedexit::signal::SignalError;
use bedexit::synth::SynthError;
use thiserror::Error;

/// Every failure a subcommand can report. [`CliError::code`] is printed on
/// standard error and stays stable across releases.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Checkpoint(ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CliError {
    pub fn io(path: &Path, e: impl ToString) -> Self {
        CliError::Io { path: path.display().to_string(), msg: e.to_string() }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "E_USAGE",
            CliError::Config(_) => "E_CONFIG",
            CliError::Io { .. } => "E_IO",
            CliError::Data(_) => "E_DATA",
            CliError::Signal(_) => "E_SIGNAL",
            CliError::Imaging(_) => "E_IMAGING",
            CliError::Synth(_) => "E_SYNTH",
            CliError::Model(_) => "E_MODEL",
            CliError::Checkpoint(_) => "E_CHECKPOINT",
            CliError::Metrics(_) => "E_METRICS",
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Checkpoint(_) | ModelError::ConfigMismatch { .. } | ModelError::TensorMismatch { .. } => {
                CliError::Checkpoint(e)
            }
            other => CliError::Model(other),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Signal(e) => e.into(),
            PipelineError::Imaging(e) => e.into(),
            PipelineError::Synth(e) => e.into(),
            PipelineError::Model(e) => e.into(),
        }
    }
}
