//! Weighted convolution on periodic grids and numerical checks of its
//! algebraic properties against an FFT oracle.
//!
//! A [`PeriodicSignal`] is a length-`n` sequence or an `n x n` grid with
//! circular indexing. The weighted circular convolution is
//! `h(z) = sum_x f(x) g(z - x) phi(z - x)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSignal {
    n: usize,
    dim: usize,
    samples: Vec<f64>,
}

impl PeriodicSignal {
    pub fn new_1d(samples: Vec<f64>) -> Result<Self> {
        Self::build(samples.len(), 1, samples)
    }

    pub fn new_2d(n: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != n * n {
            return Err(Error::shape(format!("{} samples for a {n}x{n} grid", samples.len())));
        }
        Self::build(n, 2, samples)
    }

    fn build(n: usize, dim: usize, samples: Vec<f64>) -> Result<Self> {
        if n < 4 {
            return Err(Error::param(format!("periodic signal needs n >= 4, got {n}")));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("periodic signal has non-finite samples"));
        }
        Ok(PeriodicSignal { n, dim, samples })
    }

    pub fn filled(n: usize, dim: usize, value: f64) -> Result<Self> {
        Self::build(n, dim, vec![value; n.pow(dim as u32)])
    }

    /// Unit impulse at the origin.
    pub fn delta(n: usize, dim: usize) -> Result<Self> {
        let mut s = Self::filled(n, dim, 0.0)?;
        s.samples[0] = 1.0;
        Ok(s)
    }

    pub fn random(n: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let samples = (0..n.pow(dim as u32)).map(|_| rng.random_range(-1.0..1.0)).collect();
        PeriodicSignal { n, dim, samples }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn with_samples(&self, samples: Vec<f64>) -> Self {
        PeriodicSignal { n: self.n, dim: self.dim, samples }
    }

    /// Flat index of `z - x` under circular wrap-around.
    fn sub(&self, z: usize, x: usize) -> usize {
        let n = self.n;
        if self.dim == 1 {
            (z + n - x) % n
        } else {
            let (zr, zc) = (z / n, z % n);
            let (xr, xc) = (x / n, x % n);
            ((zr + n - xr) % n) * n + (zc + n - xc) % n
        }
    }

    fn mul(&self, other: &Self) -> Self {
        self.with_samples(self.samples.iter().zip(&other.samples).map(|(a, b)| a * b).collect())
    }

    fn l1(&self) -> f64 {
        self.samples.iter().map(|v| v.abs()).sum()
    }

    fn sup(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn check_compatible(signals: &[&PeriodicSignal]) -> Result<()> {
    let first = signals[0];
    for s in &signals[1..] {
        if s.n != first.n || s.dim != first.dim {
            return Err(Error::shape(format!(
                "periodic signals differ: n={} dim={} vs n={} dim={}",
                first.n, first.dim, s.n, s.dim
            )));
        }
    }
    Ok(())
}

fn weighted_at(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal, z: usize) -> f64 {
    (0..f.len())
        .map(|x| {
            let d = f.sub(z, x);
            f.samples[x] * (g.samples[d] * phi.samples[d])
        })
        .sum()
}

pub fn circular_weighted_conv(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal) -> Result<PeriodicSignal> {
    check_compatible(&[f, g, phi])?;
    Ok(f.with_samples((0..f.len()).map(|z| weighted_at(f, g, phi, z)).collect()))
}

/// Plain circular convolution with the kernel in the outer loop:
/// `sum_y k(y) f(z - y)`.
fn kernel_first_conv(k: &PeriodicSignal, f: &PeriodicSignal) -> PeriodicSignal {
    f.with_samples(
        (0..f.len())
            .map(|z| (0..k.len()).map(|y| k.samples[y] * f.samples[f.sub(z, y)]).sum())
            .collect(),
    )
}

fn dft(s: &PeriodicSignal, inverse: bool) -> Vec<Complex<f64>> {
    let mut data: Vec<Complex<f64>> = s.samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    dft_in_place(&mut data, s.n, s.dim, inverse);
    data
}

fn dft_in_place(data: &mut [Complex<f64>], n: usize, dim: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    // Rows (or the whole 1-D signal), then columns.
    fft.process(data);
    if dim == 2 {
        let mut col = vec![Complex::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            fft.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }
}

/// Circular convolution computed through the DFT.
pub fn fft_circular_conv(f: &PeriodicSignal, g: &PeriodicSignal) -> Result<PeriodicSignal> {
    check_compatible(&[f, g])?;
    let (ff, fg) = (dft(f, false), dft(g, false));
    let mut prod: Vec<Complex<f64>> = ff.iter().zip(&fg).map(|(a, b)| a * b).collect();
    dft_in_place(&mut prod, f.n, f.dim, true);
    let scale = f.len() as f64;
    Ok(f.with_samples(prod.iter().map(|c| c.re / scale).collect()))
}

/// `max |DFT(f * g_phi) - DFT(f) DFT(g phi)|`.
pub fn check_convolution_theorem(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal) -> Result<f64> {
    let h = circular_weighted_conv(f, g, phi)?;
    let lhs = dft(&h, false);
    let (ff, fgp) = (dft(f, false), dft(&g.mul(phi), false));
    Ok(lhs
        .iter()
        .zip(ff.iter().zip(&fgp))
        .map(|(l, (a, b))| (l - a * b).norm())
        .fold(0.0, f64::max))
}

/// `max |(f * g_phi) - (g_phi * f)|`, the second form summing over the
/// premultiplied kernel `g phi`.
pub fn check_commutativity(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal) -> Result<f64> {
    let a = circular_weighted_conv(f, g, phi)?;
    let b = kernel_first_conv(&g.mul(phi), f);
    Ok(max_abs_diff(&a, &b))
}

/// Jacobian of `h = f * g_phi` with respect to `g`: compares the analytic
/// entry `dh(z)/dg(s) = f(z - s) phi(s)` with central differences (step
/// `1e-6`, `g` drawn from a fixed seed). Returns the max error relative to
/// `max(1, max |J|)`.
pub fn check_differentiability(f: &PeriodicSignal, phi: &PeriodicSignal) -> Result<f64> {
    check_compatible(&[f, phi])?;
    let step = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(f.len() as u64);
    let g = PeriodicSignal::random(f.n, f.dim, &mut rng);
    let mut max_err: f64 = 0.0;
    let mut max_j: f64 = 0.0;
    for s in 0..g.len() {
        let mut gp = g.clone();
        gp.samples[s] += step;
        let mut gm = g.clone();
        gm.samples[s] -= step;
        let hp = circular_weighted_conv(f, &gp, phi)?;
        let hm = circular_weighted_conv(f, &gm, phi)?;
        for z in 0..f.len() {
            let numeric = (hp.samples[z] - hm.samples[z]) / (2.0 * step);
            let analytic = f.samples[f.sub(z, s)] * phi.samples[s];
            max_err = max_err.max((numeric - analytic).abs());
            max_j = max_j.max(analytic.abs());
        }
    }
    Ok(max_err / max_j.max(1.0))
}

/// At a fixed point `z`, moves the density onto `f` as
/// `psi_z(x) = phi(z - x)` and returns `|(f * g_phi)(z) - (f psi_z * g)(z)|`.
pub fn check_density_identity(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal, z: usize) -> Result<f64> {
    check_compatible(&[f, g, phi])?;
    if z >= f.len() {
        return Err(Error::Index(format!("evaluation point {z} outside {} samples", f.len())));
    }
    let lhs = weighted_at(f, g, phi, z);
    let rhs: f64 = (0..f.len())
        .map(|x| {
            let d = f.sub(z, x);
            (f.samples[x] * phi.samples[d]) * g.samples[d]
        })
        .sum();
    Ok((lhs - rhs).abs())
}

/// For a constant density `phi = c` the moved density `psi = c` does not
/// depend on `z`, so `f * g_phi == (c f) * g` everywhere.
pub fn check_constant_density_identity(f: &PeriodicSignal, g: &PeriodicSignal, c: f64) -> Result<f64> {
    check_compatible(&[f, g])?;
    let phi = PeriodicSignal::filled(f.n, f.dim, c)?;
    let one = PeriodicSignal::filled(f.n, f.dim, 1.0)?;
    let lhs = circular_weighted_conv(f, g, &phi)?;
    let rhs = circular_weighted_conv(&f.mul(&phi), g, &one)?;
    Ok(max_abs_diff(&lhs, &rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoungCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `||f * g_phi||_1 <= ||phi||_inf ||f||_1 ||g||_1`.
pub fn check_young(f: &PeriodicSignal, g: &PeriodicSignal, phi: &PeriodicSignal) -> Result<YoungCheck> {
    let lhs = circular_weighted_conv(f, g, phi)?.l1();
    let rhs = phi.sup() * f.l1() * g.l1();
    Ok(YoungCheck { lhs, rhs, holds: lhs <= rhs + 1e-12 })
}

fn max_abs_diff(a: &PeriodicSignal, b: &PeriodicSignal) -> f64 {
    a.samples.iter().zip(&b.samples).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyReport {
    pub name: &'static str,
    pub instances: usize,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl std::fmt::Display for PropertyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{:<28} instances={:<5} max_error={:.3e} tol={:.0e} {}",
            self.name,
            self.instances,
            self.max_error,
            self.tolerance,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Grid shape for the `i`-th random instance: sizes cycle through 8, 16 and
/// 64; odd instances of size 8 and 16 are 2-D grids.
pub fn instance_shape(i: usize) -> (usize, usize) {
    let n = [8, 16, 64][i % 3];
    let dim = if i % 2 == 1 && n <= 16 { 2 } else { 1 };
    (n, dim)
}

fn sweep(
    name: &'static str,
    instances: usize,
    tolerance: f64,
    seed: u64,
    mut check: impl FnMut(usize, usize, &mut ChaCha8Rng) -> Result<f64>,
) -> Result<PropertyReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_error: f64 = 0.0;
    for i in 0..instances {
        let (n, dim) = instance_shape(i);
        let e = check(n, dim, &mut rng)?;
        max_error = if e.is_nan() { f64::NAN } else { max_error.max(e) };
    }
    Ok(PropertyReport { name, instances, max_error, tolerance, passed: max_error < tolerance })
}

/// Runs every property on seeded random instances.
pub fn run_suite(seed: u64) -> Result<Vec<PropertyReport>> {
    let triple = |n, dim, rng: &mut ChaCha8Rng| {
        (
            PeriodicSignal::random(n, dim, rng),
            PeriodicSignal::random(n, dim, rng),
            PeriodicSignal::random(n, dim, rng),
        )
    };
    let mut out = Vec::with_capacity(7);
    out.push(sweep("convolution_theorem", 100, 1e-9, seed, |n, d, rng| {
        let (f, g, p) = triple(n, d, rng);
        check_convolution_theorem(&f, &g, &p)
    })?);
    out.push(sweep("commutativity", 100, 1e-11, seed + 1, |n, d, rng| {
        let (f, g, p) = triple(n, d, rng);
        check_commutativity(&f, &g, &p)
    })?);
    out.push(sweep("differentiability", 100, 1e-6, seed + 2, |n, d, rng| {
        let (f, _, p) = triple(n, d, rng);
        check_differentiability(&f, &p)
    })?);
    out.push(sweep("density_identity", 100, 1e-12, seed + 3, |n, d, rng| {
        let (f, g, p) = triple(n, d, rng);
        let z = rng.random_range(0..f.len());
        check_density_identity(&f, &g, &p, z)
    })?);
    // Young: the reported error is the largest excess of lhs over rhs.
    out.push(sweep("young_inequality", 1000, 1e-12, seed + 4, |n, d, rng| {
        let (f, g, p) = triple(n, d, rng);
        let y = check_young(&f, &g, &p)?;
        Ok((y.lhs - y.rhs).max(0.0))
    })?);
    out.push(sweep("uniform_density_matches_fft", 100, 1e-10, seed + 5, |n, d, rng| {
        let (f, g, _) = triple(n, d, rng);
        let one = PeriodicSignal::filled(n, d, 1.0)?;
        Ok(max_abs_diff(&circular_weighted_conv(&f, &g, &one)?, &fft_circular_conv(&f, &g)?))
    })?);
    out.push(sweep("constant_density_identity", 100, 1e-12, seed + 6, |n, d, rng| {
        let (f, g, _) = triple(n, d, rng);
        let c = rng.random_range(-2.0..2.0);
        check_constant_density_identity(&f, &g, c)
    })?);
    Ok(out)
}
