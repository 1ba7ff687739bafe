//! Wall-clock cost of the density: standard, weighted (density applied per
//! tap inside the convolution loop) and premultiplied (density folded into
//! the weights once per call).

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::conv::{conv2d, conv2d_weighted, flop_count, ConvSpec, KernelStack};
use crate::density::{named_density, phi_from_alpha, DensityFamily};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub kernels: Vec<usize>,
    pub out_channels: Vec<usize>,
    /// `(batch, channels, rows, cols)` of the input.
    pub image: [usize; 4],
    pub repeats: usize,
    /// Untimed runs before measuring each configuration.
    pub warmup: usize,
    /// Each timed sample repeats the call until it lasts at least this long.
    pub min_sample_ms: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            kernels: vec![3, 5, 7],
            out_channels: vec![1, 3, 6],
            image: [2, 3, 128, 128],
            repeats: 15,
            warmup: 2,
            min_sample_ms: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub k: usize,
    pub out_channels: usize,
    pub standard_ms: f64,
    pub weighted_ms: f64,
    pub premultiplied_ms: f64,
    /// Median over repeats of the per-repeat `weighted / standard` ratio.
    pub ratio: f64,
    pub premultiplied_ratio: f64,
    /// Arithmetic bound `3K^2 / 2K^2`.
    pub flop_ratio: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean milliseconds per call over `calls` back-to-back calls.
fn time_ms(calls: usize, mut f: impl FnMut() -> Result<Tensor>) -> Result<f64> {
    let t = Instant::now();
    for _ in 0..calls {
        std::hint::black_box(f()?);
    }
    Ok(t.elapsed().as_secs_f64() * 1e3 / calls as f64)
}

/// Median timings per `(K, out_channels)`. The three paths run interleaved
/// within each repeat and ratios are formed per repeat, so slow drifts in
/// machine load hit both sides of a ratio alike.
pub fn bench_overhead(cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    if cfg.repeats < 10 {
        return Err(Error::param(format!("bench needs at least 10 repeats, got {}", cfg.repeats)));
    }
    let [n, c_in, rows, cols] = cfg.image;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = Tensor::new(cfg.image.to_vec(), (0..n * c_in * rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    let spec = ConvSpec::default();
    let mut out = Vec::new();
    for &k in &cfg.kernels {
        let phi = phi_from_alpha(&named_density(DensityFamily::Cubic, k)?);
        for &f in &cfg.out_channels {
            let w = Tensor::new(vec![f, c_in, k, k], (0..f * c_in * k * k).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let stack = KernelStack::new(w, vec![0.0; f])?;
            let standard = || conv2d(&input, &stack, spec);
            let weighted = || conv2d_weighted(&input, &stack, &phi, spec);
            let premultiplied = || stack.premultiplied(&phi).and_then(|p| conv2d(&input, &p, spec));
            let mut one = f64::MAX;
            for _ in 0..cfg.warmup.max(1) {
                one = one.min(time_ms(1, standard)?);
                time_ms(1, weighted)?;
                time_ms(1, premultiplied)?;
            }
            let calls = ((cfg.min_sample_ms / one.max(1e-6)).ceil() as usize).clamp(1, 10_000);
            let (mut ts, mut tw, mut tp, mut rw, mut rp) = (vec![], vec![], vec![], vec![], vec![]);
            for _ in 0..cfg.repeats {
                let s = time_ms(calls, standard)?;
                let w = time_ms(calls, weighted)?;
                let p = time_ms(calls, premultiplied)?;
                ts.push(s);
                tw.push(w);
                tp.push(p);
                rw.push(w / s);
                rp.push(p / s);
            }
            let flops = |weighted| flop_count(rows as u64, cols as u64, f as u64, k as u64, weighted) as f64;
            out.push(BenchRow {
                k,
                out_channels: f,
                standard_ms: median(ts),
                weighted_ms: median(tw),
                premultiplied_ms: median(tp),
                ratio: median(rw),
                premultiplied_ratio: median(rp),
                flop_ratio: flops(true) / flops(false),
            });
        }
    }
    Ok(out)
}
