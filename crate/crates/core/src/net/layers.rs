//! Batch normalisation, ReLU and the MSE loss, each with its backward pass.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;

/// Learned per-channel scale and shift.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Values saved by [`BatchNorm::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    normalized: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
        }
    }

    /// Training-mode normalisation with the batch's own biased statistics.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BatchNormCache)> {
        let [b, c, r, w] = x.dims4("batchnorm input")?;
        if c != self.gamma.len() {
            return Err(Error::shape(format!("{c} channels, {} scales", self.gamma.len())));
        }
        let plane = r * w;
        let count = b * plane;
        if count < 2 {
            return Err(Error::DegenerateBatch(format!(
                "{count} value(s) per channel, need at least 2"
            )));
        }
        let mut normalized = x.clone();
        let mut out = x.clone();
        let mut inv_std = vec![0.0; c];
        for ch in 0..c {
            let planes = || (0..b).map(move |n| (n * c + ch) * plane);
            let mut sum = 0.0;
            for start in planes() {
                sum += x.data()[start..start + plane].iter().sum::<f64>();
            }
            let mean = sum / count as f64;
            let mut ss = 0.0;
            for start in planes() {
                ss += x.data()[start..start + plane].iter().map(|v| (v - mean).powi(2)).sum::<f64>();
            }
            let istd = 1.0 / (ss / count as f64 + BN_EPS).sqrt();
            inv_std[ch] = istd;
            for start in planes() {
                for idx in start..start + plane {
                    let xhat = (x.data()[idx] - mean) * istd;
                    normalized.data_mut()[idx] = xhat;
                    out.data_mut()[idx] = self.gamma[ch] * xhat + self.beta[ch];
                }
            }
        }
        Ok((out, BatchNormCache { normalized, inv_std }))
    }

    /// Returns `(d input, d gamma, d beta)`.
    pub fn backward(&self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
        let [b, c, r, w] = grad_out.dims4("batchnorm upstream")?;
        if !grad_out.same_shape(&cache.normalized) {
            return Err(Error::shape("batchnorm upstream does not match the forward input"));
        }
        let plane = r * w;
        let n = (b * plane) as f64;
        let mut gx = grad_out.clone();
        let mut dgamma = vec![0.0; c];
        let mut dbeta = vec![0.0; c];
        for ch in 0..c {
            let starts: Vec<usize> = (0..b).map(|i| (i * c + ch) * plane).collect();
            let (mut sum_g, mut sum_gx) = (0.0, 0.0);
            for &s in &starts {
                for idx in s..s + plane {
                    let g = grad_out.data()[idx];
                    sum_g += g;
                    sum_gx += g * cache.normalized.data()[idx];
                }
            }
            dgamma[ch] = sum_gx;
            dbeta[ch] = sum_g;
            let k = self.gamma[ch] * cache.inv_std[ch] / n;
            for &s in &starts {
                for idx in s..s + plane {
                    let g = grad_out.data()[idx];
                    let xhat = cache.normalized.data()[idx];
                    gx.data_mut()[idx] = k * (n * g - sum_g - xhat * sum_gx);
                }
            }
        }
        Ok((gx, dgamma, dbeta))
    }
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes `grad_out` where the forward input was strictly positive.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let mut g = grad_out.clone();
    for (gv, &xv) in g.data_mut().iter_mut().zip(input.data()) {
        if xv <= 0.0 {
            *gv = 0.0;
        }
    }
    g
}

/// Mean of squared differences.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!("mse: {:?} vs {:?}", pred.dims(), target.dims())));
    }
    let n = pred.len() as f64;
    Ok(pred.data().iter().zip(target.data()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n)
}

pub fn mse_grad(pred: &Tensor, target: &Tensor) -> Result<Tensor> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!("mse: {:?} vs {:?}", pred.dims(), target.dims())));
    }
    let k = 2.0 / pred.len() as f64;
    let mut g = pred.clone();
    for (gv, t) in g.data_mut().iter_mut().zip(target.data()) {
        *gv = k * (*gv - t);
    }
    Ok(g)
}
