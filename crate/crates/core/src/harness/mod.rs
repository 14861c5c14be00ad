//! Configuration-driven experiments: rate sweeps, diagnostics campaigns and persistence.

mod campaign;
mod config;
mod dataset_file;
mod emit;
mod sweep;

use std::path::PathBuf;

use thiserror::Error;

pub use campaign::{run_diagnostics_campaign, CampaignResult};
pub use config::{
    DiagnosticsConfig, DimensionRule, EnsembleConfig, Experiment, ExperimentConfig, GridConfig, SweepConfig,
};
pub use dataset_file::{read_dataset, write_dataset, DatasetFile, DATASET_FORMAT, DATASET_VERSION};
pub use emit::{
    emit_campaign, emit_results, read_records_csv, render_svg, write_records_csv, OutputFormat, SOFTWARE_VERSION,
};
pub use sweep::{fit_loglog_slope, run_rate_sweep, RateSweepResult, SlopeFit, SweepPoint, SweepRecord};

use crate::diagnostics::DiagnosticsError;
use crate::estimators::EstimateError;
use crate::spectral::SpectralError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl HarnessError {
    /// Process exit code: 2 for configuration problems, 3 for numeric failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Io { .. } | HarnessError::Format { .. } => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

impl From<SpectralError> for HarnessError {
    fn from(e: SpectralError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<EstimateError> for HarnessError {
    fn from(e: EstimateError) -> Self {
        match e {
            EstimateError::Numeric(m) => HarnessError::Numeric(m),
            other => HarnessError::Config(other.to_string()),
        }
    }
}

impl From<DiagnosticsError> for HarnessError {
    fn from(e: DiagnosticsError) -> Self {
        match e {
            DiagnosticsError::Degenerate => HarnessError::Numeric(e.to_string()),
            other => HarnessError::Config(other.to_string()),
        }
    }
}
