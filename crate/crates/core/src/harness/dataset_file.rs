//! Version-tagged JSON container for simulated datasets.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, HarnessError};
use crate::estimators::{Dataset, Sample};
use crate::spectral::KernelFunction;

pub const DATASET_FORMAT: &str = "opker-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format: String,
    pub version: u32,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub grid_n: usize,
    pub true_kernel: Option<Vec<f64>>,
    pub samples: Vec<Sample>,
}

pub fn write_dataset(path: &Path, cfg: &ExperimentConfig, data: &Dataset) -> Result<(), HarnessError> {
    let file = DatasetFile {
        format: DATASET_FORMAT.into(),
        version: DATASET_VERSION,
        config: cfg.clone(),
        seed: data.seed,
        grid_n: cfg.grid.n,
        true_kernel: data.true_kernel.as_ref().map(|k| k.coeffs.clone()),
        samples: data.samples.clone(),
    };
    let bytes = serde_json::to_vec(&file)
        .map_err(|e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<(ExperimentConfig, Dataset), HarnessError> {
    let bytes = fs::read(path).map_err(|e| HarnessError::io(path, e))?;
    let bad = |message: String| HarnessError::Format { path: path.to_path_buf(), message };
    let file: DatasetFile = serde_json::from_slice(&bytes).map_err(|e| bad(e.to_string()))?;
    if file.format != DATASET_FORMAT {
        return Err(bad(format!("format tag {:?}", file.format)));
    }
    if file.version != DATASET_VERSION {
        return Err(bad(format!("unsupported version {}", file.version)));
    }
    if let Some(s) = file.samples.iter().find(|s| s.output.len() != file.grid_n) {
        return Err(bad(format!("sample with {} grid values, expected {}", s.output.len(), file.grid_n)));
    }
    file.config.validate()?;
    let data = Dataset {
        noise: file.config.noise,
        samples: file.samples,
        true_kernel: file.true_kernel.map(KernelFunction::new),
        seed: file.seed,
    };
    Ok((file.config, data))
}
