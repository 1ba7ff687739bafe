//! Experiment configuration file: `[model]`, `[dataset]` and `[direct]`
//! tables whose keys mirror the corresponding config fields.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::density::DensityBounds;
use crate::direct::DirectConfig;
use crate::error::{Error, Result};
use crate::experiments::dataset::DatasetSpec;
use crate::net::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub kernel: usize,
    pub channels: usize,
    pub stride: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kernel: 3,
            channels: 2,
            stride: 1,
            epochs: 10,
            learning_rate: 0.01,
            batch_size: None,
            seed: 0,
        }
    }
}

impl ModelSection {
    /// Uniform-density model configuration, validated.
    pub fn to_config(&self) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.kernel)?;
        cfg.channels = self.channels;
        cfg.stride = self.stride;
        cfg.epochs = self.epochs;
        cfg.learning_rate = self.learning_rate;
        cfg.batch_size = self.batch_size;
        cfg.seed = self.seed;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Budget and tolerances of the outer search; the box comes from the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DirectSection {
    pub max_evals: usize,
    pub max_iters: usize,
    pub f_tol: f64,
    pub epsilon: f64,
    pub stall_iters: usize,
}

impl Default for DirectSection {
    fn default() -> Self {
        DirectSection {
            max_evals: 60,
            max_iters: 200,
            f_tol: 1e-6,
            epsilon: 1e-4,
            stall_iters: 50,
        }
    }
}

impl DirectSection {
    pub fn with_box(&self, lo: Vec<f64>, hi: Vec<f64>) -> DirectConfig {
        DirectConfig {
            lo,
            hi,
            f_tol: self.f_tol,
            max_evals: self.max_evals,
            max_iters: self.max_iters,
            epsilon: self.epsilon,
            stall_iters: self.stall_iters,
        }
    }

    /// Search box over `dims` density coefficients for a `k x k` kernel.
    pub fn for_density(&self, k: usize, dims: usize, center_value: f64) -> DirectConfig {
        let b = DensityBounds::default_for(k, center_value);
        self.with_box(vec![b.lo; dims], vec![b.hi; dims])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub dataset: DatasetSpec,
    pub direct: DirectSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}
