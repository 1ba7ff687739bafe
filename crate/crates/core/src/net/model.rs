//! The three-layer image-to-image model
//! `conv(1->c, /s) -> BN -> ReLU -> conv(c->c) -> BN -> ReLU -> convT(c->1, *s) -> BN -> ReLU`,
//! every convolution weighted by one shared density.

use crate::conv::{self, ConvSpec, KernelStack};
use crate::density::DensityMatrix;
use crate::error::{Error, Result};
use crate::net::init::kaiming_init;
use crate::net::layers::{mse_grad, mse_loss, relu, relu_backward, BatchNorm, BatchNormCache};
use crate::tensor::Tensor;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub channels: usize,
    pub stride: usize,
    pub kernel: usize,
    pub density: DensityMatrix,
    pub epochs: usize,
    pub learning_rate: f64,
    /// `None` selects full-batch for up to 32 samples, else mini-batches of 8.
    pub batch_size: Option<usize>,
    pub seed: u64,
}

impl ModelConfig {
    /// Uniform-density configuration with the model defaults
    /// (`c = 4`, `s = 1`, 20 epochs, learning rate 0.01).
    pub fn new(kernel: usize) -> Result<Self> {
        Ok(ModelConfig {
            channels: 4,
            stride: 1,
            kernel,
            density: DensityMatrix::ones(kernel)?,
            epochs: 20,
            learning_rate: 0.01,
            batch_size: None,
            seed: 0,
        })
    }

    pub fn with_density(mut self, density: DensityMatrix) -> Self {
        self.density = density;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::param("channels must be >= 1"));
        }
        if self.stride == 0 {
            return Err(Error::param("stride must be >= 1"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::param(format!("kernel extent must be odd, got {}", self.kernel)));
        }
        if self.density.k() != self.kernel {
            return Err(Error::shape(format!(
                "density is {0}x{0}, kernel is {1}x{1}",
                self.density.k(),
                self.kernel
            )));
        }
        if self.epochs == 0 {
            return Err(Error::param("epochs must be >= 1"));
        }
        // Zero is accepted: it freezes the weights, which the no-update checks rely on.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param(format!(
                "learning rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == Some(0) {
            return Err(Error::param("batch size must be >= 1"));
        }
        Ok(())
    }

    pub fn effective_batch(&self, n: usize) -> usize {
        match self.batch_size {
            Some(b) => b.min(n),
            None if n <= 32 => n,
            None => 8,
        }
    }
}

/// Trainable parameters: three kernel stacks and three batch norms.
///
/// `convs[2]` is the transposed layer, stored `(c, 1, K, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub convs: [KernelStack; 3],
    pub norms: [BatchNorm; 3],
}

impl Params {
    /// Kaiming-normal weights, zero biases, unit BN scales.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        let (c, k) = (cfg.channels, cfg.kernel);
        let seed = |layer: u64| cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(layer);
        let w1 = kaiming_init(&[c, 1, k, k], k * k, seed(1))?;
        let w2 = kaiming_init(&[c, c, k, k], c * k * k, seed(2))?;
        let w3 = kaiming_init(&[c, 1, k, k], c * k * k, seed(3))?;
        Ok(Params {
            convs: [
                KernelStack::unbiased(w1)?,
                KernelStack::unbiased(w2)?,
                KernelStack::unbiased_transposed(w3)?,
            ],
            norms: [BatchNorm::new(c), BatchNorm::new(c), BatchNorm::new(1)],
        })
    }

    pub fn count(&self) -> usize {
        self.convs.iter().map(|s| s.weights.len() + s.bias.len()).sum::<usize>()
            + self.norms.iter().map(|n| n.gamma.len() + n.beta.len()).sum::<usize>()
    }

    fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        let (convs, norms) = (&mut self.convs, &mut self.norms);
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(12);
        for s in convs.iter_mut() {
            out.push(s.weights.data_mut());
            out.push(&mut s.bias);
        }
        for n in norms.iter_mut() {
            out.push(&mut n.gamma);
            out.push(&mut n.beta);
        }
        out
    }

    /// All parameters flattened: conv weights and biases layer by layer, then
    /// BN scales and shifts.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut p = self.clone();
        p.slots_mut().into_iter().flat_map(|s| s.to_vec()).collect()
    }

    pub fn set_from_slice(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.count() {
            return Err(Error::shape(format!("{} values for {} parameters", flat.len(), self.count())));
        }
        let mut off = 0;
        for slot in self.slots_mut() {
            slot.copy_from_slice(&flat[off..off + slot.len()]);
            off += slot.len();
        }
        Ok(())
    }

    /// `self += scale * other`, slot by slot.
    pub fn axpy(&mut self, scale: f64, other: &Params) {
        let mut other = other.clone();
        for (dst, src) in self.slots_mut().into_iter().zip(other.slots_mut()) {
            dst.iter_mut().zip(src.iter()).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Conv weights `C_in K^2` per output channel for each layer, plus biases and
/// two BN parameters per channel.
pub fn parameter_count(channels: usize, kernel: usize) -> usize {
    let (c, kk) = (channels, kernel * kernel);
    let weights = c * kk + c * c * kk + c * kk;
    let biases = c + c + 1;
    let norms = 2 * (c + c + 1);
    weights + biases + norms
}

/// Intermediate values kept for backpropagation.
pub struct ForwardTrace {
    input: Tensor,
    pre_bn: [Tensor; 3],
    bn: [BatchNormCache; 3],
    post_bn: [Tensor; 3],
    activations: [Tensor; 3],
}

impl ForwardTrace {
    pub fn output(&self) -> &Tensor {
        &self.activations[2]
    }

    /// Post-ReLU activations of the three layers.
    pub fn activations(&self) -> &[Tensor; 3] {
        &self.activations
    }
}

/// Model `M_phi` bound to a configuration.
pub struct Network<'a> {
    cfg: &'a ModelConfig,
}

impl<'a> Network<'a> {
    pub fn new(cfg: &'a ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Network { cfg })
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let [_, ch, r, c] = input.dims4("model input")?;
        if ch != 1 {
            return Err(Error::shape(format!("model expects 1 input channel, got {ch}")));
        }
        let s = self.cfg.stride;
        if r % s != 0 || c % s != 0 {
            return Err(Error::shape(format!("image {r}x{c} not divisible by stride {s}")));
        }
        Ok(())
    }

    pub fn forward(&self, params: &Params, input: &Tensor) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let phi = &self.cfg.density;
        let s = self.cfg.stride;
        let h1 = conv::conv2d(input, &params.convs[0].premultiplied(phi)?, ConvSpec::strided(s))?;
        let (b1, c1) = params.norms[0].forward(&h1)?;
        let a1 = relu(&b1);
        let h2 = conv::conv2d(&a1, &params.convs[1].premultiplied(phi)?, ConvSpec::strided(1))?;
        let (b2, c2) = params.norms[1].forward(&h2)?;
        let a2 = relu(&b2);
        let h3 = conv::conv2d_transposed_weighted(&a2, &params.convs[2], phi, ConvSpec::transposed(s))?;
        let (b3, c3) = params.norms[2].forward(&h3)?;
        let a3 = relu(&b3);
        Ok(ForwardTrace {
            input: input.clone(),
            pre_bn: [h1, h2, h3],
            bn: [c1, c2, c3],
            post_bn: [b1, b2, b3],
            activations: [a1, a2, a3],
        })
    }

    pub fn predict(&self, params: &Params, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward(params, input)?.activations[2].clone())
    }

    /// Gradient of a scalar loss given `d loss / d output`.
    pub fn backward(&self, params: &Params, trace: &ForwardTrace, grad_out: &Tensor) -> Result<Params> {
        let phi = &self.cfg.density;
        let s = self.cfg.stride;
        let mut grads = params.clone();

        let g = relu_backward(&trace.post_bn[2], grad_out);
        let (g, dg, db) = params.norms[2].backward(&trace.bn[2], &g)?;
        grads.norms[2] = BatchNorm { gamma: dg, beta: db };
        let up = ConvSpec::transposed(s);
        let kg = conv::transposed_grad_weights(&trace.activations[1], phi, &g, up)?;
        grads.convs[2] = KernelStack {
            weights: kg.weights,
            bias: kg.bias,
        };
        let g = conv::transposed_grad_input(&params.convs[2], phi, &g, up)?;

        let g = relu_backward(&trace.post_bn[1], &g);
        let (g, dg, db) = params.norms[1].backward(&trace.bn[1], &g)?;
        grads.norms[1] = BatchNorm { gamma: dg, beta: db };
        let one = ConvSpec::strided(1);
        let kg = conv::grad_weights(&trace.activations[0], phi, &g, one)?;
        grads.convs[1] = KernelStack {
            weights: kg.weights,
            bias: kg.bias,
        };
        let dims = trace.activations[0].dims4("activation")?;
        let g = conv::grad_input(&params.convs[1], phi, &g, dims, one)?;

        let g = relu_backward(&trace.post_bn[0], &g);
        let (g, dg, db) = params.norms[0].backward(&trace.bn[0], &g)?;
        grads.norms[0] = BatchNorm { gamma: dg, beta: db };
        let kg = conv::grad_weights(&trace.input, phi, &g, ConvSpec::strided(s))?;
        grads.convs[0] = KernelStack {
            weights: kg.weights,
            bias: kg.bias,
        };
        debug_assert_eq!(trace.pre_bn[0].dims()[1], self.cfg.channels);
        Ok(grads)
    }

    /// MSE loss and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, params: &Params, input: &Tensor, target: &Tensor) -> Result<(f64, Params)> {
        let trace = self.forward(params, input)?;
        let loss = mse_loss(trace.output(), target)?;
        let g = mse_grad(trace.output(), target)?;
        Ok((loss, self.backward(params, &trace, &g)?))
    }

    pub fn loss(&self, params: &Params, input: &Tensor, target: &Tensor) -> Result<f64> {
        mse_loss(&self.predict(params, input)?, target)
    }
}
