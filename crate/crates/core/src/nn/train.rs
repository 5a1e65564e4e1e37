//! Losses, Adam and the minibatch training loop.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{Mode, Network};
use crate::error::{Error, Result};
use crate::numerics::{compensated_sum, Matrix, RngStream};

/// Classes per output block for the block softmax loss.
pub const BLOCK: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Mean over all output entries of the squared error.
    Mse,
    /// 10-way softmax cross entropy per block of outputs, averaged over
    /// inputs and blocks. Targets are one-hot within each block.
    BlockSoftmax,
}

/// Loss and its gradient with respect to the network outputs.
pub fn loss_value_and_grad(kind: LossKind, out: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if out.shape() != target.shape() {
        return Err(Error::Shape {
            expected: format!("{:?}", out.shape()),
            got: format!("{:?}", target.shape()),
        });
    }
    let (n, c) = out.shape();
    let mut grad = Matrix::zeros(n, c);
    match kind {
        LossKind::Mse => {
            let denom = (n * c) as f64;
            let mut terms = Vec::with_capacity(n * c);
            for ((g, &o), &t) in grad.data_mut().iter_mut().zip(out.data()).zip(target.data()) {
                let r = o - t;
                terms.push(r * r);
                *g = 2.0 * r / denom;
            }
            Ok((compensated_sum(terms) / denom, grad))
        }
        LossKind::BlockSoftmax => {
            if c % BLOCK != 0 {
                return Err(Error::Dimension(format!(
                    "block softmax needs a multiple of {BLOCK} outputs, got {c}"
                )));
            }
            let blocks = c / BLOCK;
            let denom = (n * blocks) as f64;
            let mut terms = Vec::with_capacity(n * blocks);
            for i in 0..n {
                let o = out.row(i);
                let t = target.row(i);
                let g = grad.row_mut(i);
                for blk in 0..blocks {
                    let r = blk * BLOCK..(blk + 1) * BLOCK;
                    let max = o[r.clone()].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let z: f64 = o[r.clone()].iter().map(|v| (v - max).exp()).sum();
                    let log_z = max + z.ln();
                    let mut ce = 0.0;
                    for k in r {
                        ce -= t[k] * (o[k] - log_z);
                        g[k] = ((o[k] - log_z).exp() - t[k]) / denom;
                    }
                    terms.push(ce);
                }
            }
            Ok((compensated_sum(terms) / denom, grad))
        }
    }
}

/// Training-mode loss and parameter gradient on one batch. `batch` is the
/// batch index reported when the loss is not finite.
pub fn loss_and_grad(
    net: &Network,
    x: &Matrix,
    y: &Matrix,
    kind: LossKind,
    batch: usize,
) -> Result<(f64, Vec<f64>)> {
    let (out, cache) = net.forward(x, Mode::Train)?;
    let (loss, g) = loss_value_and_grad(kind, &out, y)?;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { batch, loss });
    }
    Ok((loss, net.backward(&cache, &g)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, num_params: usize) -> Self {
        AdamState {
            config,
            t: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), params.len()));
        }
        if grads.len() != self.m.len() {
            return Err(Error::shape(self.m.len(), grads.len()));
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
        Ok(())
    }
}

fn default_log_every() -> u64 {
    100
}

fn default_divergence() -> f64 {
    1e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub iterations: u64,
    pub batch_size: usize,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Training aborts once the logged loss exceeds this value.
    #[serde(default = "default_divergence")]
    pub divergence_threshold: f64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            errs.push(format!("lr must be finite and nonnegative, got {}", self.lr));
        }
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".into());
        }
        if self.log_every == 0 {
            errs.push("log_every must be positive".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: u64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum TrainStatus {
    Completed,
    Diverged { iteration: u64, loss: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub status: TrainStatus,
    pub iterations: u64,
    /// Full training-set loss, logged every `log_every` iterations and at the end.
    pub trace: Vec<TracePoint>,
    pub final_train_loss: f64,
}

fn full_loss(net: &Network, x: &Matrix, y: &Matrix, kind: LossKind) -> Result<f64> {
    let (out, _) = net.forward(x, Mode::Train)?;
    Ok(loss_value_and_grad(kind, &out, y)?.0)
}

/// Minibatch Adam. Each iteration draws `batch_size` distinct rows
/// (or the whole set when smaller) and updates batchnorm running statistics.
pub fn train(
    net: &mut Network,
    x: &Matrix,
    y: &Matrix,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<TrainReport> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::Precondition("training set is empty".into()));
    }
    if y.rows() != n {
        return Err(Error::shape(n, y.rows()));
    }
    let batch = cfg.batch_size.min(n);
    let mut adam = AdamState::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        net.num_params(),
    );
    let mut params = net.params();
    let mut trace = Vec::new();
    let diverged = |iteration: u64, loss: f64| TrainStatus::Diverged { iteration, loss };
    for it in 0..cfg.iterations {
        if it % cfg.log_every == 0 {
            let loss = full_loss(net, x, y, cfg.loss)?;
            trace.push(TracePoint { iteration: it, loss });
            if !(loss <= cfg.divergence_threshold) {
                return Ok(TrainReport {
                    status: diverged(it, loss),
                    iterations: it,
                    trace,
                    final_train_loss: loss,
                });
            }
        }
        let idx = if batch == n {
            (0..n).collect()
        } else {
            index::sample(rng, n, batch).into_vec()
        };
        let xb = x.select_rows(&idx);
        let yb = y.select_rows(&idx);
        let (out, cache) = net.forward(&xb, Mode::Train)?;
        let (loss, g_out) = loss_value_and_grad(cfg.loss, &out, &yb)?;
        if !(loss.is_finite() && loss <= cfg.divergence_threshold) {
            return Ok(TrainReport {
                status: diverged(it, loss),
                iterations: it,
                trace,
                final_train_loss: loss,
            });
        }
        let grads = net.backward(&cache, &g_out)?;
        net.update_running_stats(&cache);
        adam.step(&mut params, &grads)?;
        net.set_params(&params)?;
    }
    let loss = full_loss(net, x, y, cfg.loss)?;
    trace.push(TracePoint {
        iteration: cfg.iterations,
        loss,
    });
    let status = if loss <= cfg.divergence_threshold {
        TrainStatus::Completed
    } else {
        diverged(cfg.iterations, loss)
    };
    Ok(TrainReport {
        status,
        iterations: cfg.iterations,
        trace,
        final_train_loss: loss,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mse,
    /// Fraction of (input, block) pairs whose argmax matches the target.
    Accuracy,
}

/// Metric of raw predictions against targets.
pub fn score(metric: Metric, pred: &Matrix, target: &Matrix) -> Result<f64> {
    match metric {
        Metric::Mse => Ok(loss_value_and_grad(LossKind::Mse, pred, target)?.0),
        Metric::Accuracy => {
            if pred.shape() != target.shape() {
                return Err(Error::shape(pred.cols(), target.cols()));
            }
            let (n, c) = pred.shape();
            if c % BLOCK != 0 {
                return Err(Error::Dimension(format!(
                    "accuracy needs a multiple of {BLOCK} outputs, got {c}"
                )));
            }
            let argmax = |v: &[f64]| {
                v.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
                    .0
            };
            let blocks = c / BLOCK;
            let mut hits = 0usize;
            for i in 0..n {
                for blk in pred.row(i).chunks(BLOCK).zip(target.row(i).chunks(BLOCK)) {
                    if argmax(blk.0) == argmax(blk.1) {
                        hits += 1;
                    }
                }
            }
            Ok(hits as f64 / (n * blocks).max(1) as f64)
        }
    }
}

/// Evaluation-mode metric of `net` on a dataset.
pub fn evaluate(net: &Network, x: &Matrix, y: &Matrix, metric: Metric) -> Result<f64> {
    score(metric, &net.predict(x)?, y)
}
