//! Brute-force and finite-difference oracles for the convolution operators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wconv_core::conv::*;
use wconv_core::density::{phi_from_alpha, DensityMatrix, DensityVector};
use wconv_core::tensor::Tensor;

fn rand_tensor(dims: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(dims, |_| rng.random_range(-1.0..1.0))
}

fn rand_phi(k: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let theta: Vec<f64> = (0..k / 2).map(|_| rng.random_range(0.0..2.0)).collect();
    let mut v = theta.clone();
    v.push(1.0);
    v.extend(theta.iter().rev());
    phi_from_alpha(&DensityVector::new(v, 1.0).unwrap())
}

/// Direct transcription of the definition with explicit padding checks.
fn loop_oracle(x: &Tensor, w: &KernelStack, phi: Option<&DensityMatrix>, s: usize) -> Tensor {
    let d = x.dims();
    let (b, c_in, r, c) = (d[0], d[1], d[2], d[3]);
    let (f_out, k) = (w.weights.dims()[0], w.weights.dims()[2]);
    let p = (k / 2) as isize;
    let (ro, co) = (r.div_ceil(s), c.div_ceil(s));
    let mut y = Tensor::zeros(&[b, f_out, ro, co]);
    for n in 0..b {
        for f in 0..f_out {
            for i in 0..ro {
                for j in 0..co {
                    let mut acc = 0.0;
                    for ch in 0..c_in {
                        for a in 0..k {
                            for bb in 0..k {
                                let ii = (i * s) as isize + a as isize - p;
                                let jj = (j * s) as isize + bb as isize - p;
                                if ii < 0 || jj < 0 || ii >= r as isize || jj >= c as isize {
                                    continue;
                                }
                                let scale = phi.map_or(1.0, |m| m.get(a, bb));
                                acc += scale * w.weights.get4(f, ch, a, bb) * x.get4(n, ch, ii as usize, jj as usize);
                            }
                        }
                    }
                    y.set4(n, f, i, j, acc + w.bias[f]);
                }
            }
        }
    }
    y
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    assert_eq!(a.dims(), b.dims());
    a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn random_stack_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let x = rand_tensor(&[1, 1, 6, 6], &mut rng);
    let w = KernelStack::new(rand_tensor(&[2, 1, 3, 3], &mut rng), vec![0.25, -0.5]).unwrap();
    let y = conv2d(&x, &w, ConvSpec::default()).unwrap();
    assert!(max_abs_diff(&y, &loop_oracle(&x, &w, None, 1)) < 1e-12);
}

#[test]
fn weighted_and_standard_match_loop_oracle_across_kernels() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..30 {
        let k = [3, 5, 7][case % 3];
        let s = 1 + case % 2;
        let (r, c) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (c_in, f) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let x = rand_tensor(&[2, c_in, r, c], &mut rng);
        let bias = (0..f).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = KernelStack::new(rand_tensor(&[f, c_in, k, k], &mut rng), bias).unwrap();
        let phi = rand_phi(k, &mut rng);
        let spec = ConvSpec::strided(s);
        assert!(max_abs_diff(&conv2d(&x, &w, spec).unwrap(), &loop_oracle(&x, &w, None, s)) < 1e-12);
        let yw = conv2d_weighted(&x, &w, &phi, spec).unwrap();
        assert!(max_abs_diff(&yw, &loop_oracle(&x, &w, Some(&phi), s)) < 1e-12);
        let pre = conv2d(&x, &w.premultiplied(&phi).unwrap(), spec).unwrap();
        assert!(max_abs_diff(&yw, &pre) < 1e-12);
    }
}

#[test]
fn transposed_is_adjoint_of_strided() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..20 {
        let s = 1 + case % 3;
        let k = [3, 5][case % 2];
        let (r, c) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let (c_in, f) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let x = rand_tensor(&[2, c_in, r * s, c * s], &mut rng);
        let y = rand_tensor(&[2, f, r, c], &mut rng);
        let w = KernelStack::unbiased(rand_tensor(&[f, c_in, k, k], &mut rng)).unwrap();
        let phi = rand_phi(k, &mut rng);
        let ax = conv2d_weighted(&x, &w, &phi, ConvSpec::strided(s)).unwrap();
        let wt = KernelStack::unbiased_transposed(w.weights.clone()).unwrap();
        let aty = conv2d_transposed_weighted(&y, &wt, &phi, ConvSpec::transposed(s)).unwrap();
        let (l, rr) = (dot(&ax, &y), dot(&x, &aty));
        assert!((l - rr).abs() <= 1e-10 * l.abs().max(1.0), "{l} vs {rr}");
    }
}

/// `sum(up * conv(x))` as a function of one perturbed parameter.
fn loss(x: &Tensor, w: &KernelStack, phi: &DensityMatrix, up: &Tensor, s: usize) -> f64 {
    dot(&conv2d_weighted(x, w, phi, ConvSpec::strided(s)).unwrap(), up)
}

fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let scale = numeric.iter().chain(analytic).map(|v| v.abs()).fold(1e-12, f64::max);
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max) / scale
}

const H: f64 = 1e-5;

fn central(mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(H) - f(-H)) / (2.0 * H)
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for case in 0..10 {
        let k = [3, 5][case % 2];
        let s = 1 + case % 2;
        let x = rand_tensor(&[2, 2, 5, 6], &mut rng);
        let w = KernelStack::new(rand_tensor(&[3, 2, k, k], &mut rng), vec![0.1, 0.2, 0.3]).unwrap();
        let phi = rand_phi(k, &mut rng);
        let spec = ConvSpec::strided(s);
        let up = rand_tensor(&[2, 3, 5usize.div_ceil(s), 6usize.div_ceil(s)], &mut rng);

        let gw = grad_weights(&x, &phi, &up, spec).unwrap();
        let num: Vec<f64> = (0..w.weights.len())
            .map(|idx| {
                central(|h| {
                    let mut w2 = w.clone();
                    w2.weights.data_mut()[idx] += h;
                    loss(&x, &w2, &phi, &up, s)
                })
            })
            .collect();
        assert!(rel_err(gw.weights.data(), &num) < 1e-6);
        let num_b: Vec<f64> = (0..3)
            .map(|f| {
                central(|h| {
                    let mut w2 = w.clone();
                    w2.bias[f] += h;
                    loss(&x, &w2, &phi, &up, s)
                })
            })
            .collect();
        assert!(rel_err(&gw.bias, &num_b) < 1e-6);

        let gx = grad_input(&w, &phi, &up, [2, 2, 5, 6], spec).unwrap();
        let num: Vec<f64> = (0..x.len())
            .map(|idx| {
                central(|h| {
                    let mut x2 = x.clone();
                    x2.data_mut()[idx] += h;
                    loss(&x2, &w, &phi, &up, s)
                })
            })
            .collect();
        assert!(rel_err(gx.data(), &num) < 1e-6);

        let gphi = grad_density(&x, &w, &up, spec).unwrap();
        let num: Vec<f64> = (0..k * k)
            .map(|idx| {
                central(|h| {
                    let mut p = phi.values().to_vec();
                    p[idx] += h;
                    let mut w2 = w.clone();
                    for kernel in w2.weights.data_mut().chunks_exact_mut(k * k) {
                        kernel.iter_mut().zip(&p).for_each(|(wv, pv)| *wv *= pv);
                    }
                    dot(&conv2d(&x, &w2, spec).unwrap(), &up)
                })
            })
            .collect();
        assert!(rel_err(gphi.data(), &num) < 1e-6);
    }
}

#[test]
fn standard_weight_gradient_is_uniform_density_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    let x = rand_tensor(&[1, 1, 6, 6], &mut rng);
    let up = rand_tensor(&[1, 2, 6, 6], &mut rng);
    let ones = DensityMatrix::ones(3).unwrap();
    let g = grad_weights(&x, &ones, &up, ConvSpec::default()).unwrap();
    // d/dw of sum(up * conv2d(x, w)) by brute force
    for f in 0..2 {
        for a in 0..3 {
            for b in 0..3 {
                let mut acc = 0.0;
                for i in 0..6isize {
                    for j in 0..6isize {
                        let (ii, jj) = (i + a as isize - 1, j + b as isize - 1);
                        if (0..6).contains(&ii) && (0..6).contains(&jj) {
                            acc += up.get4(0, f, i as usize, j as usize) * x.get4(0, 0, ii as usize, jj as usize);
                        }
                    }
                }
                assert!((g.weights.get4(f, 0, a, b) - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn density_gradient_is_centrally_symmetric_for_symmetric_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let n = 6;
    let k = 3;
    // Symmetrise image, kernels and upstream under 180-degree rotation.
    let sym = |t: Tensor| {
        let d = t.dims().to_vec();
        let (r, c) = (d[2], d[3]);
        let mut out = t.clone();
        for p in 0..d[0] {
            for q in 0..d[1] {
                for i in 0..r {
                    for j in 0..c {
                        let v = 0.5 * (t.get4(p, q, i, j) + t.get4(p, q, r - 1 - i, c - 1 - j));
                        out.set4(p, q, i, j, v);
                    }
                }
            }
        }
        out
    };
    let x = sym(rand_tensor(&[1, 2, n, n], &mut rng));
    let w = KernelStack::unbiased(sym(rand_tensor(&[2, 2, k, k], &mut rng))).unwrap();
    let up = sym(rand_tensor(&[1, 2, n, n], &mut rng));
    let g = grad_density(&x, &w, &up, ConvSpec::default()).unwrap();
    for a in 0..k {
        for b in 0..k {
            assert!((g.get2(a, b) - g.get2(k - 1 - a, k - 1 - b)).abs() < 1e-12);
        }
    }
}

#[test]
fn transposed_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let s = 2;
    let y = rand_tensor(&[2, 2, 3, 3], &mut rng);
    let w = KernelStack::new(rand_tensor(&[2, 1, 3, 3], &mut rng), vec![0.4]).unwrap();
    let phi = rand_phi(3, &mut rng);
    let spec = ConvSpec::transposed(s);
    let up = rand_tensor(&[2, 1, 6, 6], &mut rng);
    let l = |y: &Tensor, w: &KernelStack| dot(&conv2d_transposed_weighted(y, w, &phi, spec).unwrap(), &up);

    let gy = transposed_grad_input(&w, &phi, &up, spec).unwrap();
    let num: Vec<f64> = (0..y.len())
        .map(|i| {
            central(|h| {
                let mut y2 = y.clone();
                y2.data_mut()[i] += h;
                l(&y2, &w)
            })
        })
        .collect();
    assert!(rel_err(gy.data(), &num) < 1e-6);

    let gw = transposed_grad_weights(&y, &phi, &up, spec).unwrap();
    let num: Vec<f64> = (0..w.weights.len())
        .map(|i| {
            central(|h| {
                let mut w2 = w.clone();
                w2.weights.data_mut()[i] += h;
                l(&y, &w2)
            })
        })
        .collect();
    assert!(rel_err(gw.weights.data(), &num) < 1e-6);
    let nb = central(|h| {
        let mut w2 = w.clone();
        w2.bias[0] += h;
        l(&y, &w2)
    });
    assert!((gw.bias[0] - nb).abs() < 1e-6 * nb.abs().max(1.0));
}
