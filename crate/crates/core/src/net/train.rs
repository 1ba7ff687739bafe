use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::net::model::{ModelConfig, Network, Params};
use crate::tensor::Tensor;

/// Paired noisy inputs and clean targets, both `(N, 1, R, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub noisy: Tensor,
    pub clean: Tensor,
}

impl Dataset {
    pub fn new(noisy: Tensor, clean: Tensor) -> Result<Self> {
        let [n, c, _, _] = noisy.dims4("noisy images")?;
        if !noisy.same_shape(&clean) {
            return Err(Error::shape(format!(
                "noisy {:?} vs clean {:?}",
                noisy.dims(),
                clean.dims()
            )));
        }
        if n == 0 {
            return Err(Error::param("dataset is empty"));
        }
        if c != 1 {
            return Err(Error::shape(format!("images must have one channel, got {c}")));
        }
        Ok(Dataset { noisy, clean })
    }

    pub fn len(&self) -> usize {
        self.noisy.dims()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            noisy: self.noisy.gather_outer(idx),
            clean: self.clean.gather_outer(idx),
        }
    }

    /// First `n_train` items and the remainder.
    pub fn split(&self, n_train: usize) -> (Dataset, Dataset) {
        let n = self.len();
        let n_train = n_train.min(n);
        let head = Dataset {
            noisy: self.noisy.slice_outer(0, n_train),
            clean: self.clean.slice_outer(0, n_train),
        };
        let tail = Dataset {
            noisy: self.noisy.slice_outer(n_train, n),
            clean: self.clean.slice_outer(n_train, n),
        };
        (head, tail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean mini-batch loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
    /// Training-set loss before the first update.
    pub initial_loss: f64,
    /// Training-set loss after the last update.
    pub final_loss: f64,
    pub parameter_count: usize,
    pub seconds: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: Params,
}

/// Loss over `data` in fixed, unshuffled batches, weighted by batch size.
pub fn evaluate(net: &Network<'_>, params: &Params, data: &Dataset, batch: usize) -> Result<f64> {
    let n = data.len();
    let mut total = 0.0;
    for start in (0..n).step_by(batch) {
        let end = (start + batch).min(n);
        let x = data.noisy.slice_outer(start, end);
        let t = data.clean.slice_outer(start, end);
        total += net.loss(params, &x, &t)? * (end - start) as f64;
    }
    Ok(total / n as f64)
}

/// Plain SGD `w <- w - lr * grad` for `epochs * ceil(N / batch)` steps.
pub fn sgd_train(data: &Dataset, cfg: &ModelConfig) -> Result<TrainOutcome> {
    let start = Instant::now();
    let net = Network::new(cfg)?;
    let mut params = Params::init(cfg)?;
    let n = data.len();
    let batch = cfg.effective_batch(n);
    let initial_loss = evaluate(&net, &params, data, batch)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0, step: 0 });
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        if batch < n {
            order.shuffle(&mut shuffle_rng);
        }
        let mut sum = 0.0;
        for chunk in order.chunks(batch) {
            let part = data.subset(chunk);
            let (loss, grads) = net.loss_and_grad(&params, &part.noisy, &part.clean)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            params.axpy(-cfg.learning_rate, &grads);
            if !params.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            sum += loss * chunk.len() as f64;
            step += 1;
        }
        epoch_losses.push(sum / n as f64);
    }

    let final_loss = evaluate(&net, &params, data, batch)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs,
            step,
        });
    }
    Ok(TrainOutcome {
        report: TrainReport {
            epoch_losses,
            initial_loss,
            final_loss,
            parameter_count: params.count(),
            seconds: start.elapsed().as_secs_f64(),
            seed: cfg.seed,
        },
        params,
    })
}

/// Header of the one-row CSV summary of a training run.
pub fn report_header(kernel: usize) -> Vec<String> {
    let mut h = vec!["seed".to_string(), "k".to_string()];
    h.extend((1..=kernel).map(|i| format!("alpha_{i}")));
    h.extend(
        ["epochs", "lr", "stride", "channels", "final_loss", "seconds"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

impl TrainReport {
    /// `seed, k, alpha values, epochs, lr, stride, channels, final_loss, seconds`.
    pub fn csv_row(&self, cfg: &ModelConfig) -> Vec<String> {
        let mut row = vec![self.seed.to_string(), cfg.kernel.to_string()];
        row.extend(cfg.density.alpha().iter().map(|v| v.to_string()));
        row.push(cfg.epochs.to_string());
        row.push(cfg.learning_rate.to_string());
        row.push(cfg.stride.to_string());
        row.push(cfg.channels.to_string());
        row.push(self.final_loss.to_string());
        row.push(format!("{:.3}", self.seconds));
        row
    }
}
