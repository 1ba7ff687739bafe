//! Direct 2-D convolution (cross-correlation form) with optional density
//! weighting, the transposed (upsampling) variant, and analytic gradients.
//!
//! All layers use "same" zero padding `p = (K - 1) / 2`. A stride-`s` layer
//! produces `ceil(R / s) x ceil(C / s)` outputs; output `(i, j)` reads the
//! window centred on input pixel `(s i, s j)`.

use rayon::prelude::*;

use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Convolution weights `(F, C_in, K, K)` and one bias per output channel.
///
/// Transposed layers store weights as `(C_in, C_out, K, K)` and carry `C_out`
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelStack {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

impl KernelStack {
    pub fn new(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        let [_, _, ka, kb] = weights.dims4("kernel stack")?;
        if ka != kb {
            return Err(Error::shape(format!("kernels must be square, got {ka}x{kb}")));
        }
        if ka % 2 == 0 {
            return Err(Error::param(format!("kernel extent must be odd, got {ka}")));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Invariant("non-finite bias".into()));
        }
        Ok(KernelStack { weights, bias })
    }

    /// Stack with zero bias.
    pub fn unbiased(weights: Tensor) -> Result<Self> {
        let n = weights.dims4("kernel stack")?[0];
        Self::new(weights, vec![0.0; n])
    }

    /// Transposed-layout stack `(C_in, C_out, K, K)` with zero bias.
    pub fn unbiased_transposed(weights: Tensor) -> Result<Self> {
        let n = weights.dims4("kernel stack")?[1];
        Self::new(weights, vec![0.0; n])
    }

    pub fn k(&self) -> usize {
        self.weights.dims()[2]
    }

    /// Leading weight axis: output channels of a conv, inputs of a transposed conv.
    pub fn dim0(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn dim1(&self) -> usize {
        self.weights.dims()[1]
    }

    /// Weights with the density folded in: `phi ∘ w` for every kernel.
    pub fn premultiplied(&self, phi: &DensityMatrix) -> Result<KernelStack> {
        check_phi(self, phi)?;
        let kk = self.k() * self.k();
        let mut weights = self.weights.clone();
        for kernel in weights.data_mut().chunks_exact_mut(kk) {
            for (w, p) in kernel.iter_mut().zip(phi.values()) {
                *w *= p;
            }
        }
        Ok(KernelStack {
            weights,
            bias: self.bias.clone(),
        })
    }
}

/// Gradient of a scalar loss with respect to a [`KernelStack`].
#[derive(Debug, Clone, PartialEq)]
pub struct KernelGrad {
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    /// Ordinary convolution evaluated every `s` pixels.
    Stride(usize),
    /// Transposed convolution: the output grid is `s` times finer.
    Upsample(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub sampling: Sampling,
}

impl ConvSpec {
    pub fn strided(s: usize) -> Self {
        ConvSpec {
            sampling: Sampling::Stride(s),
        }
    }

    pub fn transposed(s: usize) -> Self {
        ConvSpec {
            sampling: Sampling::Upsample(s),
        }
    }

    fn stride(&self) -> Result<usize> {
        match self.sampling {
            Sampling::Stride(s) if s >= 1 => Ok(s),
            Sampling::Stride(s) => Err(Error::param(format!("stride must be >= 1, got {s}"))),
            Sampling::Upsample(_) => Err(Error::param("transposed spec passed to a strided convolution")),
        }
    }

    fn upsample(&self) -> Result<usize> {
        match self.sampling {
            Sampling::Upsample(s) if s >= 1 => Ok(s),
            Sampling::Upsample(s) => Err(Error::param(format!("upsampling factor must be >= 1, got {s}"))),
            Sampling::Stride(_) => Err(Error::param("strided spec passed to a transposed convolution")),
        }
    }
}

impl Default for ConvSpec {
    fn default() -> Self {
        Self::strided(1)
    }
}

fn check_phi(w: &KernelStack, phi: &DensityMatrix) -> Result<()> {
    if phi.k() != w.k() {
        return Err(Error::shape(format!(
            "density is {0}x{0}, kernels are {1}x{1}",
            phi.k(),
            w.k()
        )));
    }
    Ok(())
}

pub(crate) fn out_extent(n: usize, s: usize) -> usize {
    n.div_ceil(s)
}

/// Geometry shared by the strided kernels below.
#[derive(Debug, Clone, Copy)]
struct Geom {
    batch: usize,
    c_in: usize,
    rows: usize,
    cols: usize,
    f_out: usize,
    out_rows: usize,
    out_cols: usize,
    k: usize,
    s: usize,
}

impl Geom {
    /// Kernel taps `lo..hi` that land inside `0..n` for a window starting at `start`.
    fn tap_range(&self, start: isize, n: usize) -> (usize, usize) {
        let lo = (-start).max(0) as usize;
        let hi = (n as isize - start).clamp(0, self.k as isize) as usize;
        (lo, hi.max(lo))
    }

    fn origin(&self, i: usize) -> isize {
        (i * self.s) as isize - (self.k / 2) as isize
    }

    /// True when the `n` output columns starting at `j` see no padding.
    fn interior(&self, j: usize, n: usize) -> bool {
        self.origin(j) >= 0 && self.origin(j + n - 1) + self.k as isize <= self.cols as isize
    }
}

/// Output columns computed together on the padding-free interior.
const LANES: usize = 4;

/// `y[b,f,i,j] = sum_{c,a,b'} tap(f,c,a,b') x[b,c,s i + a - p, s j + b' - p] + bias[f]`,
/// where `tap = phi[a,b'] * w[f,c,a,b']` when `WEIGHTED` (and `phi` is
/// ignored otherwise). The flag is a const parameter so that each variant gets
/// its own inner loop.
fn correlate<const WEIGHTED: bool>(x: &[f64], w: &[f64], phi: &[f64], bias: &[f64], g: Geom) -> Vec<f64> {
    let plane_in = g.rows * g.cols;
    let plane_out = g.out_rows * g.out_cols;
    let kk = g.k * g.k;
    let mut out = vec![0.0; g.batch * g.f_out * plane_out];
    out.par_chunks_mut(plane_out).enumerate().for_each(|(bf, plane)| {
        let (b, f) = (bf / g.f_out, bf % g.f_out);
        let xb = &x[b * g.c_in * plane_in..(b + 1) * g.c_in * plane_in];
        let wf = &w[f * g.c_in * kk..(f + 1) * g.c_in * kk];
        for i in 0..g.out_rows {
            let r0 = g.origin(i);
            let (a_lo, a_hi) = g.tap_range(r0, g.rows);
            let out_row = &mut plane[i * g.out_cols..(i + 1) * g.out_cols];
            let mut j = 0;
            while j < g.out_cols {
                if j + LANES <= g.out_cols && g.interior(j, LANES) {
                    // LANES neighbouring outputs share each tap, giving the
                    // accumulation LANES independent dependency chains.
                    let c0 = g.origin(j) as usize;
                    let span = (LANES - 1) * g.s + g.k;
                    let mut acc = [0.0; LANES];
                    for c in 0..g.c_in {
                        let xc = &xb[c * plane_in..(c + 1) * plane_in];
                        let wc = &wf[c * kk..(c + 1) * kk];
                        for a in a_lo..a_hi {
                            let row = (r0 + a as isize) as usize * g.cols;
                            let xs = &xc[row + c0..][..span];
                            let ws = &wc[a * g.k..][..g.k];
                            for bt in 0..g.k {
                                let tap = if WEIGHTED { phi[a * g.k + bt] * ws[bt] } else { ws[bt] };
                                for (l, acc_l) in acc.iter_mut().enumerate() {
                                    *acc_l += tap * xs[l * g.s + bt];
                                }
                            }
                        }
                    }
                    for (o, v) in out_row[j..j + LANES].iter_mut().zip(acc) {
                        *o = v + bias[f];
                    }
                    j += LANES;
                    continue;
                }
                let c0 = g.origin(j);
                let (b_lo, b_hi) = g.tap_range(c0, g.cols);
                let mut acc = 0.0;
                for c in 0..g.c_in {
                    let xc = &xb[c * plane_in..(c + 1) * plane_in];
                    let wc = &wf[c * kk..(c + 1) * kk];
                    for a in a_lo..a_hi {
                        let row = (r0 + a as isize) as usize * g.cols;
                        let xs = &xc[(row as isize + c0 + b_lo as isize) as usize..][..b_hi - b_lo];
                        let ws = &wc[a * g.k + b_lo..a * g.k + b_hi];
                        if WEIGHTED {
                            let ps = &phi[a * g.k + b_lo..a * g.k + b_hi];
                            for ((pv, wv), xv) in ps.iter().zip(ws).zip(xs) {
                                acc += (pv * wv) * xv;
                            }
                        } else {
                            for (wv, xv) in ws.iter().zip(xs) {
                                acc += wv * xv;
                            }
                        }
                    }
                }
                out_row[j] = acc + bias[f];
                j += 1;
            }
        }
    });
    out
}

/// Adjoint of [`correlate`] in `x` (bias excluded): scatters `gy` back onto the
/// input grid. Each task owns one `(b, c)` input plane, so the result does not
/// depend on the thread count.
fn correlate_adjoint(gy: &[f64], w: &[f64], g: Geom) -> Vec<f64> {
    let plane_in = g.rows * g.cols;
    let plane_out = g.out_rows * g.out_cols;
    let kk = g.k * g.k;
    let mut gx = vec![0.0; g.batch * g.c_in * plane_in];
    gx.par_chunks_mut(plane_in).enumerate().for_each(|(bc, plane)| {
        let (b, c) = (bc / g.c_in, bc % g.c_in);
        for f in 0..g.f_out {
            let gyf = &gy[(b * g.f_out + f) * plane_out..][..plane_out];
            let wfc = &w[(f * g.c_in + c) * kk..][..kk];
            for i in 0..g.out_rows {
                let r0 = g.origin(i);
                let (a_lo, a_hi) = g.tap_range(r0, g.rows);
                for j in 0..g.out_cols {
                    let c0 = g.origin(j);
                    let (b_lo, b_hi) = g.tap_range(c0, g.cols);
                    let up = gyf[i * g.out_cols + j];
                    if up == 0.0 {
                        continue;
                    }
                    for a in a_lo..a_hi {
                        let row = (r0 + a as isize) as usize * g.cols;
                        let dst = &mut plane[(row as isize + c0 + b_lo as isize) as usize..][..b_hi - b_lo];
                        let ws = &wfc[a * g.k + b_lo..a * g.k + b_hi];
                        for (d, wv) in dst.iter_mut().zip(ws) {
                            *d += wv * up;
                        }
                    }
                }
            }
        }
    });
    gx
}

/// `gw[f,c,a,b'] = sum_{b,i,j} gy[b,f,i,j] x[b,c,s i + a - p, s j + b' - p]`.
fn correlate_weight_grad(x: &[f64], gy: &[f64], g: Geom) -> Vec<f64> {
    let plane_in = g.rows * g.cols;
    let plane_out = g.out_rows * g.out_cols;
    let kk = g.k * g.k;
    let mut gw = vec![0.0; g.f_out * g.c_in * kk];
    gw.par_chunks_mut(kk).enumerate().for_each(|(fc, kernel)| {
        let (f, c) = (fc / g.c_in, fc % g.c_in);
        for b in 0..g.batch {
            let xc = &x[(b * g.c_in + c) * plane_in..][..plane_in];
            let gyf = &gy[(b * g.f_out + f) * plane_out..][..plane_out];
            for i in 0..g.out_rows {
                let r0 = g.origin(i);
                let (a_lo, a_hi) = g.tap_range(r0, g.rows);
                for j in 0..g.out_cols {
                    let c0 = g.origin(j);
                    let (b_lo, b_hi) = g.tap_range(c0, g.cols);
                    let up = gyf[i * g.out_cols + j];
                    if up == 0.0 {
                        continue;
                    }
                    for a in a_lo..a_hi {
                        let row = (r0 + a as isize) as usize * g.cols;
                        let xs = &xc[(row as isize + c0 + b_lo as isize) as usize..][..b_hi - b_lo];
                        let dst = &mut kernel[a * g.k + b_lo..a * g.k + b_hi];
                        for (d, xv) in dst.iter_mut().zip(xs) {
                            *d += up * xv;
                        }
                    }
                }
            }
        }
    });
    gw
}

fn forward_geom(input: &Tensor, w: &KernelStack, s: usize) -> Result<Geom> {
    let [batch, c_in, rows, cols] = input.dims4("conv input")?;
    if w.dim1() != c_in {
        return Err(Error::shape(format!(
            "input has {c_in} channels, kernels expect {}",
            w.dim1()
        )));
    }
    if w.bias.len() != w.dim0() {
        return Err(Error::shape(format!(
            "{} output channels but {} biases",
            w.dim0(),
            w.bias.len()
        )));
    }
    Ok(Geom {
        batch,
        c_in,
        rows,
        cols,
        f_out: w.dim0(),
        out_rows: out_extent(rows, s),
        out_cols: out_extent(cols, s),
        k: w.k(),
        s,
    })
}

/// Geometry of the strided convolution whose adjoint a transposed layer
/// computes: the transposed layer's output grid is that convolution's input.
fn transposed_geom(input: &Tensor, w: &KernelStack, s: usize) -> Result<Geom> {
    let [batch, c_in, rows, cols] = input.dims4("transposed conv input")?;
    if w.dim0() != c_in {
        return Err(Error::shape(format!(
            "input has {c_in} channels, transposed kernels expect {}",
            w.dim0()
        )));
    }
    if w.bias.len() != w.dim1() {
        return Err(Error::shape(format!(
            "{} output channels but {} biases",
            w.dim1(),
            w.bias.len()
        )));
    }
    Ok(Geom {
        batch,
        c_in: w.dim1(),
        rows: rows * s,
        cols: cols * s,
        f_out: c_in,
        out_rows: rows,
        out_cols: cols,
        k: w.k(),
        s,
    })
}

fn add_channel_bias(data: &mut [f64], bias: &[f64], plane: usize) {
    for (chunk_idx, chunk) in data.chunks_exact_mut(plane).enumerate() {
        let b = bias[chunk_idx % bias.len()];
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn channel_sums(data: &[f64], channels: usize, plane: usize) -> Vec<f64> {
    let mut sums = vec![0.0; channels];
    for (chunk_idx, chunk) in data.chunks_exact(plane).enumerate() {
        sums[chunk_idx % channels] += chunk.iter().sum::<f64>();
    }
    sums
}

fn tensor4(dims: [usize; 4], data: Vec<f64>) -> Tensor {
    Tensor::from_raw(dims.to_vec(), data)
}

/// Standard convolution: `y[f,i,j] = <w^f, N(I_ij)>_F + bias_f`.
pub fn conv2d(input: &Tensor, w: &KernelStack, spec: ConvSpec) -> Result<Tensor> {
    let g = forward_geom(input, w, spec.stride()?)?;
    let out = correlate::<false>(input.data(), w.weights.data(), &[], &w.bias, g);
    Ok(tensor4([g.batch, g.f_out, g.out_rows, g.out_cols], out))
}

/// Weighted convolution: `y[f,i,j] = <phi ∘ w^f, N(I_ij)>_F + bias_f`.
///
/// The density multiplies each tap inside the inner loop. With `phi = 1` the
/// result is bit-identical to [`conv2d`].
pub fn conv2d_weighted(input: &Tensor, w: &KernelStack, phi: &DensityMatrix, spec: ConvSpec) -> Result<Tensor> {
    check_phi(w, phi)?;
    let g = forward_geom(input, w, spec.stride()?)?;
    let out = correlate::<true>(input.data(), w.weights.data(), phi.values(), &w.bias, g);
    Ok(tensor4([g.batch, g.f_out, g.out_rows, g.out_cols], out))
}

/// Weighted transposed convolution with upsampling factor `s`.
///
/// Weights are `(C_in, C_out, K, K)`; the output is `(B, C_out, s R, s C)`.
/// Without bias this is the exact adjoint of the stride-`s`
/// [`conv2d_weighted`] using the same stack, equivalently a "same" weighted
/// convolution of the zero-upsampled input with spatially flipped kernels.
pub fn conv2d_transposed_weighted(
    input: &Tensor,
    w: &KernelStack,
    phi: &DensityMatrix,
    spec: ConvSpec,
) -> Result<Tensor> {
    check_phi(w, phi)?;
    let g = transposed_geom(input, w, spec.upsample()?)?;
    let eff = w.premultiplied(phi)?;
    let mut out = correlate_adjoint(input.data(), eff.weights.data(), g);
    add_channel_bias(&mut out, &w.bias, g.rows * g.cols);
    Ok(tensor4([g.batch, g.c_in, g.rows, g.cols], out))
}

/// Gradient of `sum(upstream * conv2d_weighted(input, W, phi))` with respect to
/// `W` and the bias. Each weight gradient carries the factor `phi[a,b]`.
pub fn grad_weights(input: &Tensor, phi: &DensityMatrix, upstream: &Tensor, spec: ConvSpec) -> Result<KernelGrad> {
    let s = spec.stride()?;
    let [batch, c_in, rows, cols] = input.dims4("conv input")?;
    let [ub, f_out, ur, uc] = upstream.dims4("upstream")?;
    if ub != batch || ur != out_extent(rows, s) || uc != out_extent(cols, s) {
        return Err(Error::shape(format!(
            "upstream {:?} does not match input {:?} at stride {s}",
            upstream.dims(),
            input.dims()
        )));
    }
    let k = phi.k();
    let g = Geom {
        batch,
        c_in,
        rows,
        cols,
        f_out,
        out_rows: ur,
        out_cols: uc,
        k,
        s,
    };
    let mut gw = correlate_weight_grad(input.data(), upstream.data(), g);
    for kernel in gw.chunks_exact_mut(k * k) {
        kernel.iter_mut().zip(phi.values()).for_each(|(v, p)| *v *= p);
    }
    Ok(KernelGrad {
        weights: tensor4([f_out, c_in, k, k], gw),
        bias: channel_sums(upstream.data(), f_out, ur * uc),
    })
}

/// Gradient of `sum(upstream * conv2d_weighted(input, W, phi))` with respect to
/// the input, whose extents are given by `input_dims`.
pub fn grad_input(
    w: &KernelStack,
    phi: &DensityMatrix,
    upstream: &Tensor,
    input_dims: [usize; 4],
    spec: ConvSpec,
) -> Result<Tensor> {
    check_phi(w, phi)?;
    let s = spec.stride()?;
    let [batch, c_in, rows, cols] = input_dims;
    let [ub, f_out, ur, uc] = upstream.dims4("upstream")?;
    if ub != batch
        || f_out != w.dim0()
        || c_in != w.dim1()
        || ur != out_extent(rows, s)
        || uc != out_extent(cols, s)
    {
        return Err(Error::shape(format!(
            "upstream {:?} inconsistent with input {:?} and kernels {:?}",
            upstream.dims(),
            input_dims,
            w.weights.dims()
        )));
    }
    let g = Geom {
        batch,
        c_in,
        rows,
        cols,
        f_out,
        out_rows: ur,
        out_cols: uc,
        k: w.k(),
        s,
    };
    let eff = w.premultiplied(phi)?;
    Ok(tensor4(input_dims, correlate_adjoint(upstream.data(), eff.weights.data(), g)))
}

/// Gradient of `sum(upstream * conv2d_weighted(input, W, phi))` with respect to
/// `phi`: `sum_{f,c} w[f,c] ∘ (raw weight gradient)[f,c]`.
pub fn grad_density(input: &Tensor, w: &KernelStack, upstream: &Tensor, spec: ConvSpec) -> Result<Tensor> {
    let ones = DensityMatrix::ones(w.k())?;
    let raw = grad_weights(input, &ones, upstream, spec)?;
    if raw.weights.dims() != w.weights.dims() {
        return Err(Error::shape(format!(
            "kernels {:?} do not match input/upstream {:?}",
            w.weights.dims(),
            raw.weights.dims()
        )));
    }
    Ok(fold_density_grad(&w.weights, &raw.weights))
}

fn fold_density_grad(weights: &Tensor, raw: &Tensor) -> Tensor {
    let k = weights.dims()[2];
    let mut out = Tensor::zeros(&[k, k]);
    for (wk, gk) in weights.data().chunks_exact(k * k).zip(raw.data().chunks_exact(k * k)) {
        for ((o, wv), gv) in out.data_mut().iter_mut().zip(wk).zip(gk) {
            *o += wv * gv;
        }
    }
    out
}

/// Input gradient of [`conv2d_transposed_weighted`]: a stride-`s` weighted
/// convolution of the upstream gradient.
pub fn transposed_grad_input(w: &KernelStack, phi: &DensityMatrix, upstream: &Tensor, spec: ConvSpec) -> Result<Tensor> {
    let s = spec.upsample()?;
    let eff = w.premultiplied(phi)?;
    let zero_bias = KernelStack {
        weights: eff.weights,
        bias: vec![0.0; w.dim0()],
    };
    conv2d(upstream, &zero_bias, ConvSpec::strided(s))
}

/// Weight and bias gradient of [`conv2d_transposed_weighted`].
pub fn transposed_grad_weights(
    input: &Tensor,
    phi: &DensityMatrix,
    upstream: &Tensor,
    spec: ConvSpec,
) -> Result<KernelGrad> {
    let s = spec.upsample()?;
    let [ib, c_t, r, c] = input.dims4("transposed conv input")?;
    let [ub, c_out, ur, uc] = upstream.dims4("upstream")?;
    if ib != ub || ur != r * s || uc != c * s {
        return Err(Error::shape(format!(
            "upstream {:?} does not match transposed input {:?} at factor {s}",
            upstream.dims(),
            input.dims()
        )));
    }
    // Roles swap: the upstream grid is the input of the underlying strided conv.
    let g = Geom {
        batch: ib,
        c_in: c_out,
        rows: ur,
        cols: uc,
        f_out: c_t,
        out_rows: r,
        out_cols: c,
        k: phi.k(),
        s,
    };
    let k = phi.k();
    let mut gw = correlate_weight_grad(upstream.data(), input.data(), g);
    for kernel in gw.chunks_exact_mut(k * k) {
        kernel.iter_mut().zip(phi.values()).for_each(|(v, p)| *v *= p);
    }
    Ok(KernelGrad {
        weights: tensor4([c_t, c_out, k, k], gw),
        bias: channel_sums(upstream.data(), c_out, ur * uc),
    })
}

/// Density gradient of [`conv2d_transposed_weighted`].
pub fn transposed_grad_density(input: &Tensor, w: &KernelStack, upstream: &Tensor, spec: ConvSpec) -> Result<Tensor> {
    let ones = DensityMatrix::ones(w.k())?;
    let raw = transposed_grad_weights(input, &ones, upstream, spec)?;
    Ok(fold_density_grad(&w.weights, &raw.weights))
}

/// Operation count of a direct convolution: `2 K^2` per output (multiply and
/// add), `3 K^2` when each tap is also scaled by the density.
pub fn flop_count(rows: u64, cols: u64, filters: u64, k: u64, weighted: bool) -> u64 {
    let per_tap = if weighted { 3 } else { 2 };
    rows * cols * filters * per_tap * k * k
}
