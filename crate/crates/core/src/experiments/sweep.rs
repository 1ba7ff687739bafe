//! One nested optimisation per value of a single hyperparameter.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiments::config::ExperimentConfig;
use crate::experiments::dataset::gen_dataset;
use crate::experiments::outer::{density_search_config, optimize_density, OuterResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Stride,
    Epochs,
    NImages,
    /// Square images, `rows == cols == value`.
    ImageSize,
    Channels,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Stride => "stride",
            SweepAxis::Epochs => "epochs",
            SweepAxis::NImages => "n_images",
            SweepAxis::ImageSize => "image_size",
            SweepAxis::Channels => "channels",
        }
    }

    /// Copy of `base` with this axis set to `value`.
    pub fn apply(&self, base: &ExperimentConfig, value: usize) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            SweepAxis::Stride => cfg.model.stride = value,
            SweepAxis::Epochs => cfg.model.epochs = value,
            SweepAxis::NImages => cfg.dataset.n_images = value,
            SweepAxis::ImageSize => {
                cfg.dataset.rows = value;
                cfg.dataset.cols = value;
            }
            SweepAxis::Channels => cfg.model.channels = value,
        }
        cfg
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stride" => Ok(SweepAxis::Stride),
            "epochs" => Ok(SweepAxis::Epochs),
            "n_images" | "n-images" => Ok(SweepAxis::NImages),
            "image_size" | "image-size" => Ok(SweepAxis::ImageSize),
            "channels" => Ok(SweepAxis::Channels),
            other => Err(Error::param(format!("unknown sweep axis `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: usize,
    /// The failure message when this run could not complete.
    pub outcome: std::result::Result<OuterResult, String>,
}

/// Runs [`optimize_density`] for every value, all other settings fixed.
/// Image size is held fixed along the stride axis. Failed runs become rows
/// carrying their error; rows come back sorted by value.
pub fn sweep_hyperparams(axis: SweepAxis, values: &[usize], base: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::param("sweep needs at least one value"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let rows = sorted
        .par_iter()
        .map(|&v| {
            let cfg = axis.apply(base, v);
            let run = || -> Result<OuterResult> {
                let model = cfg.model.to_config()?;
                let data = gen_dataset(&cfg.dataset)?;
                let direct = density_search_config(model.kernel, &cfg.direct);
                optimize_density(model.kernel, &model, &direct, &data)
            };
            SweepRow {
                axis_value: v,
                outcome: run().map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(rows)
}
