//! Nested optimisation: DIRECT-L over density coefficients, each point scored
//! by the final training loss of a model trained with that density.

use crate::density::{alpha_from_free, phi_from_alpha, DensityMatrix, DensityVector, FreeParams};
use crate::direct::{minimize, DirectConfig, DirectResult, TraceRow};
use crate::error::{Error, Result};
use crate::experiments::config::DirectSection;
use crate::net::{sgd_train, Dataset, ModelConfig};

/// Centre value `M` of every searched density.
pub const CENTER_VALUE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: Vec<f64>,
    /// Final training loss; `+inf` when training diverged.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OuterResult {
    pub alpha: DensityVector,
    pub objective: f64,
    /// Objective at the uniform density, same inner seed.
    pub baseline: f64,
    /// `1 - objective / baseline`.
    pub improvement: f64,
    pub trace: Vec<TraceRow>,
    pub evals: usize,
    pub iterations: usize,
    pub evaluations: Vec<Evaluation>,
}

/// Final training loss with the given density, `+inf` on divergence.
pub fn training_objective(model: &ModelConfig, density: DensityMatrix, data: &Dataset) -> Result<f64> {
    let cfg = model.clone().with_density(density);
    match sgd_train(data, &cfg) {
        Ok(out) => Ok(out.report.final_loss),
        Err(Error::Divergence { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Runs DIRECT-L over `build(point)`, starting from `init`. The first logged
/// evaluation is `init` itself.
fn search(
    model: &ModelConfig,
    direct: &DirectConfig,
    init: &[f64],
    data: &Dataset,
    build: impl Fn(&[f64]) -> Result<DensityMatrix>,
) -> Result<(DirectResult, Vec<Evaluation>)> {
    model.validate()?;
    if data.is_empty() {
        return Err(Error::param("dataset is empty"));
    }
    let mut log = Vec::new();
    let mut failure = None;
    let result = minimize(
        |x| {
            let value = match build(x).and_then(|phi| training_objective(model, phi, data)) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            };
            log.push(Evaluation { point: x.to_vec(), value });
            value
        },
        direct,
        init,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    if !log[0].value.is_finite() {
        return Err(Error::Divergence { epoch: 0, step: 0 });
    }
    Ok((result, log))
}

fn improvement(objective: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        0.0
    } else {
        1.0 - objective / baseline
    }
}

/// Search box for the symmetric `k x k` density with centre [`CENTER_VALUE`].
pub fn density_search_config(k: usize, section: &DirectSection) -> DirectConfig {
    section.for_density(k, k / 2, CENTER_VALUE)
}

/// Optimises the `(K - 1) / 2` free coefficients of a symmetric density.
///
/// The model's weight-init seed is held fixed, so the objective is a
/// deterministic function of the density. The search starts from the uniform
/// density, whose loss is the reported baseline.
pub fn optimize_density(k: usize, model: &ModelConfig, direct: &DirectConfig, data: &Dataset) -> Result<OuterResult> {
    if k % 2 == 0 || k < 3 {
        return Err(Error::param(format!("kernel extent must be odd and >= 3, got {k}")));
    }
    if model.kernel != k {
        return Err(Error::param(format!("model kernel {} differs from {k}", model.kernel)));
    }
    if direct.dim() != k / 2 {
        return Err(Error::param(format!(
            "search box has {} dimensions, kernel {k} needs {}",
            direct.dim(),
            k / 2
        )));
    }
    let init = vec![CENTER_VALUE; k / 2];
    let (r, log) = search(model, direct, &init, data, |x| {
        Ok(phi_from_alpha(&alpha_from_free(&FreeParams(x.to_vec()), k, CENTER_VALUE)?))
    })?;
    let baseline = log[0].value;
    Ok(OuterResult {
        alpha: alpha_from_free(&FreeParams(r.best_point.clone()), k, CENTER_VALUE)?,
        objective: r.best_value,
        baseline,
        improvement: improvement(r.best_value, baseline),
        trace: r.trace,
        evals: r.evals,
        iterations: r.iterations,
        evaluations: log,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryReport {
    /// Optimum of `alpha = (a1, M, a3)`, `Phi = alpha alpha^T`.
    pub alpha1_free: f64,
    pub alpha3: f64,
    /// Optimum of `alpha = (a1, M, a1)`, `beta = (b1, M, b1)`, `Phi = alpha beta^T`.
    pub alpha1_mixed: f64,
    pub beta1: f64,
    pub objective_free: f64,
    pub objective_mixed: f64,
}

impl SymmetryReport {
    pub fn alpha_gap(&self) -> f64 {
        (self.alpha1_free - self.alpha3).abs()
    }

    pub fn beta_gap(&self) -> f64 {
        (self.alpha1_mixed - self.beta1).abs()
    }
}

/// Drops one symmetry constraint at a time on a 3x3 density and reports how
/// far the two-variable optimum is from symmetric.
pub fn check_symmetry_relaxation(model: &ModelConfig, section: &DirectSection, data: &Dataset) -> Result<SymmetryReport> {
    if model.kernel != 3 {
        return Err(Error::param(format!("symmetry relaxation needs a 3x3 kernel, got {}", model.kernel)));
    }
    let m = CENTER_VALUE;
    let direct = section.for_density(3, 2, m);
    let init = [m, m];
    let (free, _) = search(model, &direct, &init, data, |x| {
        let a = [x[0], m, x[1]];
        DensityMatrix::from_outer(&a, &a)
    })?;
    let (mixed, _) = search(model, &direct, &init, data, |x| {
        DensityMatrix::from_outer(&[x[0], m, x[0]], &[x[1], m, x[1]])
    })?;
    Ok(SymmetryReport {
        alpha1_free: free.best_point[0],
        alpha3: free.best_point[1],
        alpha1_mixed: mixed.best_point[0],
        beta1: mixed.best_point[1],
        objective_free: free.best_value,
        objective_mixed: mixed.best_value,
    })
}
