//! Density vectors `alpha` and the rank-1 density matrices `phi = alpha alpha^T`
//! that scale every kernel tap of a weighted convolution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Odd-length, symmetric vector of per-offset scale factors whose centre is
/// pinned to `center_value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRecord", into = "DensityRecord")]
pub struct DensityVector {
    values: Vec<f64>,
    center_value: f64,
}

/// Structured-text form `{k, m, values}` used in configs and reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DensityRecord {
    k: usize,
    #[serde(rename = "m")]
    center_value: f64,
    values: Vec<f64>,
}

impl TryFrom<DensityRecord> for DensityVector {
    type Error = Error;

    fn try_from(r: DensityRecord) -> Result<Self> {
        if r.values.len() != r.k {
            return Err(Error::param(format!("k = {} but {} values", r.k, r.values.len())));
        }
        DensityVector::new(r.values, r.center_value)
    }
}

impl From<DensityVector> for DensityRecord {
    fn from(d: DensityVector) -> Self {
        DensityRecord {
            k: d.values.len(),
            center_value: d.center_value,
            values: d.values,
        }
    }
}

fn check_odd(k: usize) -> Result<()> {
    if k % 2 == 0 || k == 0 {
        return Err(Error::param(format!("kernel extent must be odd, got {k}")));
    }
    Ok(())
}

impl DensityVector {
    pub fn new(values: Vec<f64>, center_value: f64) -> Result<Self> {
        let k = values.len();
        check_odd(k)?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invariant(format!("density values must be finite and >= 0: {values:?}")));
        }
        if values[k / 2] != center_value {
            return Err(Error::Invariant(format!(
                "centre value {} != {}",
                values[k / 2],
                center_value
            )));
        }
        if (0..k / 2).any(|i| values[i] != values[k - 1 - i]) {
            return Err(Error::Invariant(format!("density is not symmetric: {values:?}")));
        }
        Ok(DensityVector { values, center_value })
    }

    pub fn uniform(k: usize, center_value: f64) -> Result<Self> {
        check_odd(k)?;
        Self::new(vec![center_value; k], center_value)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn k(&self) -> usize {
        self.values.len()
    }

    pub fn center_value(&self) -> f64 {
        self.center_value
    }

    pub fn within(&self, bounds: DensityBounds) -> bool {
        self.values.iter().all(|&v| v >= bounds.lo && v <= bounds.hi)
    }
}

impl fmt::Display for DensityVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.values.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v:.4}")?;
        }
        write!(f, "]")
    }
}

/// Box on the density values searched by the outer optimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBounds {
    pub lo: f64,
    pub hi: f64,
}

impl DensityBounds {
    /// `[0, 2M]` for 3x3 kernels; `[0, 4M]` for larger ones, whose reported
    /// optima sit above `2M`.
    pub fn default_for(k: usize, center_value: f64) -> Self {
        let hi = if k <= 3 { 2.0 } else { 4.0 };
        DensityBounds {
            lo: 0.0,
            hi: hi * center_value,
        }
    }
}

/// The `(K - 1) / 2` independent coefficients of a symmetric density, outermost
/// first.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParams(pub Vec<f64>);

pub fn alpha_from_free(theta: &FreeParams, k: usize, center_value: f64) -> Result<DensityVector> {
    check_odd(k)?;
    let half = k / 2;
    if theta.0.len() != half {
        return Err(Error::param(format!(
            "kernel {k} needs {half} free parameters, got {}",
            theta.0.len()
        )));
    }
    let mut values = Vec::with_capacity(k);
    values.extend_from_slice(&theta.0);
    values.push(center_value);
    values.extend(theta.0.iter().rev());
    DensityVector::new(values, center_value)
}

pub fn free_from_alpha(alpha: &DensityVector) -> FreeParams {
    FreeParams(alpha.values[..alpha.k() / 2].to_vec())
}

/// `K x K` density applied multiplicatively to every kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    phi: Tensor,
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl DensityMatrix {
    /// All-ones density: weighted convolution reduces to the standard one.
    pub fn ones(k: usize) -> Result<Self> {
        check_odd(k)?;
        Ok(DensityMatrix {
            phi: Tensor::filled(&[k, k], 1.0),
            alpha: vec![1.0; k],
            beta: vec![1.0; k],
        })
    }

    /// General separable density `alpha beta^T`, rows scaled by `alpha`.
    ///
    /// Only the symmetry-relaxation experiment needs `alpha != beta`.
    pub fn from_outer(alpha: &[f64], beta: &[f64]) -> Result<Self> {
        let k = alpha.len();
        check_odd(k)?;
        if beta.len() != k {
            return Err(Error::shape(format!("alpha has {k} entries, beta {}", beta.len())));
        }
        if alpha.iter().chain(beta).any(|v| !v.is_finite()) {
            return Err(Error::Invariant("non-finite density value".into()));
        }
        let phi = Tensor::from_fn(&[k, k], |f| alpha[f / k] * beta[f % k]);
        Ok(DensityMatrix {
            phi,
            alpha: alpha.to_vec(),
            beta: beta.to_vec(),
        })
    }

    /// Row generating vector.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Column generating vector; equals [`Self::alpha`] for symmetric densities.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn k(&self) -> usize {
        self.phi.dims()[0]
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.phi
    }

    pub fn values(&self) -> &[f64] {
        self.phi.data()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.phi.get2(a, b)
    }

    pub fn trace(&self) -> f64 {
        (0..self.k()).map(|i| self.get(i, i)).sum()
    }

    pub fn is_uniform(&self) -> bool {
        self.values().iter().all(|&v| v == 1.0)
    }
}

pub fn phi_from_alpha(alpha: &DensityVector) -> DensityMatrix {
    DensityMatrix::from_outer(&alpha.values, &alpha.values).expect("validated density vector")
}

/// Reference density shapes, all with centre value 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DensityFamily {
    Uniform,
    /// `1 - slope * |offset|`, clamped at 0.
    Linear { slope: f64 },
    /// `exp(-offset^2 / (2 sigma^2))`.
    Gaussian { sigma: f64 },
    /// `1 - |offset / m|^3` with `m = (K + 1) / 2`, clamped at 0.
    Cubic,
}

impl DensityFamily {
    pub const DEFAULT_SLOPE: f64 = 0.3;
    pub const DEFAULT_SIGMA: f64 = 1.5;

    pub fn name(&self) -> &'static str {
        match self {
            DensityFamily::Uniform => "uniform",
            DensityFamily::Linear { .. } => "linear",
            DensityFamily::Gaussian { .. } => "gaussian",
            DensityFamily::Cubic => "cubic",
        }
    }
}

impl FromStr for DensityFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(DensityFamily::Uniform),
            "linear" => Ok(DensityFamily::Linear {
                slope: Self::DEFAULT_SLOPE,
            }),
            "gaussian" => Ok(DensityFamily::Gaussian {
                sigma: Self::DEFAULT_SIGMA,
            }),
            "cubic" => Ok(DensityFamily::Cubic),
            other => Err(Error::param(format!("unknown density family `{other}`"))),
        }
    }
}

pub fn named_density(family: DensityFamily, k: usize) -> Result<DensityVector> {
    check_odd(k)?;
    let m = ((k + 1) / 2) as f64;
    let shape: Box<dyn Fn(f64) -> f64> = match family {
        DensityFamily::Uniform => Box::new(|_| 1.0),
        DensityFamily::Linear { slope } => {
            if !(slope >= 0.0) {
                return Err(Error::param(format!("linear slope must be >= 0, got {slope}")));
            }
            Box::new(move |d: f64| (1.0 - slope * d.abs()).max(0.0))
        }
        DensityFamily::Gaussian { sigma } => {
            if !(sigma > 0.0) {
                return Err(Error::param(format!("gaussian sigma must be > 0, got {sigma}")));
            }
            Box::new(move |d: f64| (-d * d / (2.0 * sigma * sigma)).exp())
        }
        DensityFamily::Cubic => Box::new(move |d: f64| (1.0 - (d / m).abs().powi(3)).max(0.0)),
    };
    let half = (k / 2) as isize;
    let values = (0..k as isize).map(|i| shape((i - half) as f64)).collect();
    DensityVector::new(values, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn free_to_alpha_reported_optima() {
        let a = alpha_from_free(&FreeParams(vec![0.42]), 3, 1.0).unwrap();
        assert_eq!(a.values(), &[0.42, 1.0, 0.42]);
        let a = alpha_from_free(&FreeParams(vec![0.38, 2.21]), 5, 1.0).unwrap();
        assert_eq!(a.values(), &[0.38, 2.21, 1.0, 2.21, 0.38]);
        let a = alpha_from_free(&FreeParams(vec![1.0; 3]), 7, 1.0).unwrap();
        assert_eq!(a.values(), &[1.0; 7]);
    }

    #[test]
    fn wrong_theta_length_is_rejected() {
        assert!(matches!(
            alpha_from_free(&FreeParams(vec![0.5, 0.5]), 3, 1.0),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn free_from_alpha_cases() {
        let a = DensityVector::new(vec![0.42, 1.0, 0.42], 1.0).unwrap();
        assert_eq!(free_from_alpha(&a), FreeParams(vec![0.42]));
        let a = DensityVector::uniform(5, 1.0).unwrap();
        assert_eq!(free_from_alpha(&a), FreeParams(vec![1.0, 1.0]));
    }

    #[test]
    fn asymmetric_or_off_centre_vectors_are_rejected() {
        assert!(matches!(
            DensityVector::new(vec![0.4, 1.0, 0.5], 1.0),
            Err(Error::Invariant(_))
        ));
        assert!(matches!(
            DensityVector::new(vec![0.4, 2.0, 0.4], 1.0),
            Err(Error::Invariant(_))
        ));
        assert!(DensityVector::new(vec![1.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn phi_from_alpha_cases() {
        let phi = phi_from_alpha(&DensityVector::uniform(3, 1.0).unwrap());
        assert_eq!(phi.values(), &[1.0; 9]);
        assert!(phi.is_uniform());

        let alpha = DensityVector::new(vec![0.38, 2.21, 1.0, 2.21, 0.38], 1.0).unwrap();
        let phi = phi_from_alpha(&alpha);
        assert!((phi.get(0, 1) - 0.8398).abs() < 1e-12);
        assert_eq!(phi.get(2, 2), 1.0);
        let norm2: f64 = alpha.values().iter().map(|v| v * v).sum();
        assert!((phi.trace() - norm2).abs() < 1e-12);
    }

    #[test]
    fn named_density_shapes() {
        let u = named_density(DensityFamily::Uniform, 5).unwrap();
        assert_eq!(u.values(), &[1.0; 5]);

        let g = named_density(DensityFamily::Gaussian { sigma: 1.5 }, 3).unwrap();
        let e = (-1.0f64 / 4.5).exp();
        assert!((g.values()[0] - e).abs() < 1e-15);
        assert!((g.values()[0] - 0.8007).abs() < 1e-4);
        assert_eq!(g.values()[1], 1.0);

        let l = named_density(DensityFamily::Linear { slope: 0.3 }, 5).unwrap();
        for (got, want) in l.values().iter().zip([0.4, 0.7, 1.0, 0.7, 0.4]) {
            assert!((got - want).abs() < 1e-12);
        }

        let c = named_density(DensityFamily::Cubic, 3).unwrap();
        assert!((c.values()[0] - 0.875).abs() < 1e-15);
    }

    #[test]
    fn named_density_clamps_at_zero() {
        let l = named_density(DensityFamily::Linear { slope: 0.6 }, 7).unwrap();
        assert_eq!(l.values()[0], 0.0);
        assert!(l.values().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn named_density_rejects_bad_params() {
        assert!("triangle".parse::<DensityFamily>().is_err());
        assert!(named_density(DensityFamily::Gaussian { sigma: 0.0 }, 3).is_err());
        assert!(named_density(DensityFamily::Linear { slope: -1.0 }, 3).is_err());
        assert!(named_density(DensityFamily::Uniform, 4).is_err());
    }

    #[test]
    fn gaussian_strictly_decreasing_in_offset() {
        let g = named_density(DensityFamily::Gaussian { sigma: 1.5 }, 9).unwrap();
        let v = g.values();
        for i in 4..8 {
            assert!(v[i + 1] < v[i]);
        }
    }

    #[test]
    fn record_round_trip_through_toml() {
        let a = DensityVector::new(vec![0.38, 2.21, 1.0, 2.21, 0.38], 1.0).unwrap();
        let text = toml::to_string(&a).unwrap();
        assert!(text.contains("k = 5"));
        let back: DensityVector = toml::from_str(&text).unwrap();
        assert_eq!(back, a);
        assert!(toml::from_str::<DensityVector>("k = 3\nm = 1.0\nvalues = [0.1, 1.0, 0.2]").is_err());
    }

    /// Upper bound on sigma_2 / sigma_1 from the 2x2 minors:
    /// sigma_1^2 sigma_2^2 <= sum of squared minors and sigma_1^2 >= |phi|_F^2 / K.
    fn rank_one_ratio_bound(phi: &DensityMatrix) -> f64 {
        let k = phi.k();
        let mut e2 = 0.0;
        for i in 0..k {
            for j in i + 1..k {
                for a in 0..k {
                    for b in a + 1..k {
                        let m = phi.get(i, a) * phi.get(j, b) - phi.get(i, b) * phi.get(j, a);
                        e2 += m * m;
                    }
                }
            }
        }
        let fro2: f64 = phi.values().iter().map(|v| v * v).sum();
        e2.sqrt() * k as f64 / fro2
    }

    fn symmetric_theta(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..4.0, k / 2)
    }

    proptest! {
        #[test]
        fn free_round_trip_is_exact(k in prop::sample::select(vec![3usize, 5, 7, 9]), seed in symmetric_theta(9)) {
            let theta = FreeParams(seed[..k / 2].to_vec());
            let alpha = alpha_from_free(&theta, k, 1.0).unwrap();
            prop_assert_eq!(free_from_alpha(&alpha), theta.clone());
            prop_assert_eq!(alpha_from_free(&free_from_alpha(&alpha), k, 1.0).unwrap(), alpha);
        }

        #[test]
        fn phi_is_numerically_rank_one(theta in symmetric_theta(7)) {
            let alpha = alpha_from_free(&FreeParams(theta), 7, 1.0).unwrap();
            let phi = phi_from_alpha(&alpha);
            prop_assert!(rank_one_ratio_bound(&phi) < 1e-10);
            for a in 0..7 {
                for b in 0..7 {
                    prop_assert_eq!(phi.get(a, b), phi.get(b, a));
                }
            }
            prop_assert_eq!(phi.get(3, 3), 1.0);
        }
    }
}
