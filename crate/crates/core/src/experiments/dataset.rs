//! Procedural denoising data: smooth random fields plus Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Dataset;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub n_images: usize,
    pub rows: usize,
    pub cols: usize,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Width in pixels of the Gaussian low-pass applied to the white noise
    /// the clean images are made from.
    pub smoothness: f64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            n_images: 20,
            rows: 64,
            cols: 64,
            noise_sigma: 0.1,
            seed: 0,
            smoothness: 3.0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_images == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::param("dataset extents must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::param(format!("noise sigma must be >= 0, got {}", self.noise_sigma)));
        }
        if !(self.smoothness > 0.0 && self.smoothness.is_finite()) {
            return Err(Error::param(format!("smoothness must be > 0, got {}", self.smoothness)));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }
}

/// Normalised 1-D Gaussian taps covering +-3 sigma.
fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable periodic blur of one `rows x cols` plane.
fn blur_periodic(plane: &[f64], rows: usize, cols: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let mut tmp = vec![0.0; plane.len()];
    for i in 0..rows {
        for j in 0..cols {
            tmp[i * cols + j] = taps
                .iter()
                .enumerate()
                .map(|(t, w)| w * plane[i * cols + wrap(j as isize + t as isize - half, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; plane.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = taps
                .iter()
                .enumerate()
                .map(|(t, w)| w * tmp[wrap(i as isize + t as isize - half, rows) * cols + j])
                .sum();
        }
    }
    out
}

fn clean_images(spec: &DatasetSpec) -> Tensor {
    let mut rng = spec.rng(0);
    let taps = gaussian_taps(spec.smoothness);
    let plane = spec.rows * spec.cols;
    let mut data = Vec::with_capacity(spec.n_images * plane);
    for _ in 0..spec.n_images {
        let white: Vec<f64> = (0..plane).map(|_| StandardNormal.sample(&mut rng)).collect();
        let smooth = blur_periodic(&white, spec.rows, spec.cols, &taps);
        let lo = smooth.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        data.extend(smooth.iter().map(|v| (v - lo) / span));
    }
    Tensor::new(vec![spec.n_images, 1, spec.rows, spec.cols], data).expect("finite field")
}

/// The additive noise, before clamping, for every pixel of the dataset.
pub fn noise_field(spec: &DatasetSpec) -> Tensor {
    let mut rng = spec.rng(1);
    Tensor::from_fn(&[spec.n_images, 1, spec.rows, spec.cols], |_| {
        let z: f64 = StandardNormal.sample(&mut rng);
        spec.noise_sigma * z
    })
}

/// Clean smooth fields in `[0, 1]` and their noisy copies
/// `clamp(clean + N(0, sigma^2), 0, 1)`.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let clean = clean_images(spec);
    let noise = noise_field(spec);
    let mut noisy = clean.clone();
    for (v, e) in noisy.data_mut().iter_mut().zip(noise.data()) {
        *v = (*v + e).clamp(0.0, 1.0);
    }
    Dataset::new(noisy, clean)
}
