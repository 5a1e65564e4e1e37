//! Dense networks with exact backpropagation: monolithic MLPs and modular
//! networks whose modules read learned projections of the input, trained
//! with minibatch Adam.
//!
//! Parameters are visited in a fixed canonical order so that gradients,
//! optimizer state and checkpoints can all use flat vectors.

mod checkpoint;
mod mlp;
mod modular;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_KIND};
pub use mlp::{init_mlp, BatchNorm, DenseLayer, Mlp, MlpCache, Mode, BN_EPS, BN_MOMENTUM};
pub use modular::{
    init_modular, Combine, CombineKind, ModularCache, ModularNet, ModularSpec, Projection,
    ProjectionKind,
};
pub use train::{
    evaluate, loss_and_grad, loss_value_and_grad, score, train, AdamConfig, AdamState, LossKind, Metric,
    TracePoint, TrainConfig, TrainReport, TrainStatus,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

/// Architecture description sufficient to rebuild a network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NetworkSpec {
    Mlp { sizes: Vec<usize>, batchnorm: bool },
    Modular(ModularSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Network {
    Mlp(Mlp),
    Modular(ModularNet),
}

#[derive(Clone, Debug)]
pub enum Cache {
    Mlp(MlpCache),
    Modular(ModularCache),
}

impl Network {
    pub fn init(spec: &NetworkSpec, rng: &mut RngStream) -> Result<Network> {
        match spec {
            NetworkSpec::Mlp { sizes, batchnorm } => Ok(Network::Mlp(init_mlp(rng, sizes, *batchnorm)?)),
            NetworkSpec::Modular(s) => Ok(Network::Modular(init_modular(rng, s)?)),
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        match self {
            Network::Mlp(m) => NetworkSpec::Mlp {
                sizes: m.sizes(),
                batchnorm: m.has_batchnorm(),
            },
            Network::Modular(n) => {
                let sizes = n.bodies[0].sizes();
                NetworkSpec::Modular(ModularSpec {
                    input_dim: n.input_dim(),
                    modules: n.modules(),
                    projection: match &n.projections[0] {
                        Projection::Linear { u } => ProjectionKind::Linear { b: u.cols() },
                        Projection::Distance { .. } => ProjectionKind::Distance,
                    },
                    body_hidden: sizes[1..sizes.len() - 1].to_vec(),
                    body_out: *sizes.last().expect("non-empty"),
                    batchnorm: n.bodies[0].has_batchnorm(),
                    shared: n.shared,
                    combine: match &n.combine {
                        Combine::Sum => CombineKind::Sum,
                        Combine::Concat { head } => CombineKind::Concat {
                            outputs: head.w.cols(),
                        },
                    },
                    train_projections: n.train_projections,
                })
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Network::Mlp(m) => m.input_dim(),
            Network::Modular(n) => n.input_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Network::Mlp(m) => m.output_dim(),
            Network::Modular(n) => n.output_dim(),
        }
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, Cache)> {
        match self {
            Network::Mlp(m) => m.forward(x, mode).map(|(o, c)| (o, Cache::Mlp(c))),
            Network::Modular(n) => n.forward(x, mode).map(|(o, c)| (o, Cache::Modular(c))),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x, Mode::Eval)?.0)
    }

    /// Gradient of the parameters in canonical order.
    pub fn backward(&self, cache: &Cache, grad_out: &Matrix) -> Result<Vec<f64>> {
        match (self, cache) {
            (Network::Mlp(m), Cache::Mlp(c)) => Ok(m.backward(c, grad_out)?.0),
            (Network::Modular(n), Cache::Modular(c)) => n.backward(c, grad_out),
            _ => Err(Error::Precondition("cache does not belong to this network".into())),
        }
    }

    pub fn update_running_stats(&mut self, cache: &Cache) {
        match (self, cache) {
            (Network::Mlp(m), Cache::Mlp(c)) => m.update_running_stats(c),
            (Network::Modular(n), Cache::Modular(c)) => n.update_running_stats(c),
            _ => {}
        }
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Network::Mlp(m) => m.visit_params(f),
            Network::Modular(n) => n.visit_params(f),
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Network::Mlp(m) => m.visit_params_mut(f),
            Network::Modular(n) => n.visit_params_mut(f),
        }
    }

    fn visit_buffers(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Network::Mlp(m) => m.visit_buffers(f),
            Network::Modular(n) => n.visit_buffers(f),
        }
    }

    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Network::Mlp(m) => m.visit_buffers_mut(f),
            Network::Modular(n) => n.visit_buffers_mut(f),
        }
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit_params(&mut |p| out.extend_from_slice(p));
        out
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.num_params();
        if values.len() != expected {
            return Err(Error::shape(expected, values.len()));
        }
        let mut off = 0;
        self.visit_params_mut(&mut |p| {
            p.copy_from_slice(&values[off..off + p.len()]);
            off += p.len();
        });
        Ok(())
    }

    /// Batchnorm running statistics, flattened.
    pub fn buffers(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_buffers(&mut |b| out.extend_from_slice(b));
        out
    }

    pub fn set_buffers(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.buffers().len();
        if values.len() != expected {
            return Err(Error::shape(expected, values.len()));
        }
        let mut off = 0;
        self.visit_buffers_mut(&mut |b| {
            b.copy_from_slice(&values[off..off + b.len()]);
            off += b.len();
        });
        Ok(())
    }
}
