//! Trains the same model under several densities and compares the losses.

use std::fmt;

use crate::density::{named_density, phi_from_alpha, DensityFamily, DensityVector};
use crate::error::{Error, Result};
use crate::net::{evaluate, sgd_train, Dataset, ModelConfig, Network};

#[derive(Debug, Clone, PartialEq)]
pub enum DensityChoice {
    Family(DensityFamily),
    /// A density found elsewhere, e.g. by the outer optimisation.
    Given { label: String, alpha: DensityVector },
}

impl DensityChoice {
    pub fn label(&self) -> &str {
        match self {
            DensityChoice::Family(f) => f.name(),
            DensityChoice::Given { label, .. } => label,
        }
    }

    pub fn alpha(&self, k: usize) -> Result<DensityVector> {
        match self {
            DensityChoice::Family(f) => named_density(*f, k),
            DensityChoice::Given { alpha, .. } => {
                if alpha.k() != k {
                    return Err(Error::shape(format!("density has {} entries, kernel is {k}", alpha.k())));
                }
                Ok(alpha.clone())
            }
        }
    }
}

impl fmt::Display for DensityChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub family: String,
    pub alpha: Vec<f64>,
    pub final_loss: f64,
    pub heldout_mse: f64,
}

/// Training and held-out parts: the first 80% of the images (at least one)
/// and the rest.
pub fn train_heldout_split(data: &Dataset) -> (Dataset, Dataset) {
    let n_train = ((data.len() * 4) / 5).max(1);
    data.split(n_train)
}

/// Trains once per density on `train` with the model's seed, then scores the
/// trained weights on `heldout`.
pub fn compare_densities(
    choices: &[DensityChoice],
    model: &ModelConfig,
    train: &Dataset,
    heldout: &Dataset,
) -> Result<Vec<CompareRow>> {
    let k = model.kernel;
    let mut rows = Vec::with_capacity(choices.len());
    for choice in choices {
        let alpha = choice.alpha(k)?;
        let cfg = model.clone().with_density(phi_from_alpha(&alpha));
        let out = sgd_train(train, &cfg)?;
        let heldout_mse = if heldout.is_empty() {
            f64::NAN
        } else {
            let net = Network::new(&cfg)?;
            evaluate(&net, &out.params, heldout, cfg.effective_batch(heldout.len()))?
        };
        rows.push(CompareRow {
            family: choice.label().to_string(),
            alpha: alpha.values().to_vec(),
            final_loss: out.report.final_loss,
            heldout_mse,
        });
    }
    Ok(rows)
}
