use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{sample_gaussian_matrix, Matrix, RngStream};

/// Weight on the previous running statistic when folding in a new batch.
pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Batchnorm normalizes with the statistics of the current batch.
    Train,
    /// Batchnorm normalizes with its running statistics.
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
        }
    }
}

/// Affine layer `x W + b` with `W` stored as `in × out`, optionally followed
/// by batchnorm. Every layer but the last is followed by a ReLU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug)]
struct BnCache {
    xhat: Matrix,
    inv_std: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    mode: Mode,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Matrix,
    bn: Option<BnCache>,
    /// Values fed to the ReLU; absent for the output layer.
    pre_relu: Option<Matrix>,
}

/// Intermediate values of one forward pass, consumed by `backward`.
#[derive(Clone, Debug)]
pub struct MlpCache {
    layers: Vec<LayerCache>,
}

fn add_bias(z: &mut Matrix, b: &[f64]) {
    for r in 0..z.rows() {
        for (v, bj) in z.row_mut(r).iter_mut().zip(b) {
            *v += bj;
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    out
}

/// Builds an MLP with weights drawn from `N(0, 1/fan_in)` and zero biases.
/// Batchnorm, when requested, sits before every hidden ReLU.
pub fn init_mlp(rng: &mut RngStream, sizes: &[usize], batchnorm: bool) -> Result<Mlp> {
    if sizes.len() < 2 || sizes.contains(&0) {
        return Err(Error::Dimension(format!(
            "an MLP needs at least two positive layer sizes, got {sizes:?}"
        )));
    }
    let last = sizes.len() - 2;
    let layers = sizes
        .windows(2)
        .enumerate()
        .map(|(l, pair)| {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            DenseLayer {
                w: sample_gaussian_matrix(rng, fan_in, fan_out, 0.0, 1.0 / (fan_in as f64).sqrt()),
                b: vec![0.0; fan_out],
                bn: (batchnorm && l < last).then(|| BatchNorm::new(fan_out)),
            }
        })
        .collect();
    Ok(Mlp { layers })
}

impl Mlp {
    pub fn input_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").w.cols()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.w.cols()));
        s
    }

    pub fn has_batchnorm(&self) -> bool {
        self.layers.iter().any(|l| l.bn.is_some())
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    /// Visits trainable parameters in canonical order: per layer `W`, `b`,
    /// then batchnorm `gamma`, `beta`.
    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            f(l.w.data());
            f(&l.b);
            if let Some(bn) = &l.bn {
                f(&bn.gamma);
                f(&bn.beta);
            }
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            f(l.w.data_mut());
            f(&mut l.b);
            if let Some(bn) = &mut l.bn {
                f(&mut bn.gamma);
                f(&mut bn.beta);
            }
        }
    }

    /// Visits batchnorm running statistics (non-trainable state).
    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for l in &mut self.layers {
            if let Some(bn) = &mut l.bn {
                f(&mut bn.running_mean);
                f(&mut bn.running_var);
            }
        }
    }

    pub fn visit_buffers(&self, f: &mut dyn FnMut(&[f64])) {
        for l in &self.layers {
            if let Some(bn) = &l.bn {
                f(&bn.running_mean);
                f(&bn.running_var);
            }
        }
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!("{} input columns", self.input_dim()), x.cols()));
        }
        let n_layers = self.layers.len();
        let mut caches = Vec::with_capacity(n_layers);
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.matmul(&layer.w)?;
            add_bias(&mut z, &layer.b);
            if l + 1 == n_layers {
                caches.push(LayerCache {
                    input: a,
                    bn: None,
                    pre_relu: None,
                });
                a = z;
                break;
            }
            let bn_cache = match &layer.bn {
                Some(bn) => Some(batchnorm_forward(&mut z, bn, mode)),
                None => None,
            };
            let mut next = z.clone();
            next.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            caches.push(LayerCache {
                input: a,
                bn: bn_cache,
                pre_relu: Some(z),
            });
            a = next;
        }
        Ok((a, MlpCache { layers: caches }))
    }

    /// Returns the gradient with respect to the parameters (canonical order)
    /// and with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad_out: &Matrix) -> Result<(Vec<f64>, Matrix)> {
        let mut per_layer: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        let mut g = grad_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let lc = &cache.layers[l];
            let mut bn_grads = None;
            if let Some(pre) = &lc.pre_relu {
                for (gv, &pv) in g.data_mut().iter_mut().zip(pre.data()) {
                    if pv <= 0.0 {
                        *gv = 0.0;
                    }
                }
                if let (Some(bn), Some(bc)) = (&layer.bn, &lc.bn) {
                    let (dz, dgamma, dbeta) = batchnorm_backward(&g, bn, bc);
                    g = dz;
                    bn_grads = Some((dgamma, dbeta));
                }
            }
            let dw = lc.input.t_matmul(&g)?;
            let db = column_sums(&g);
            let mut grads = dw.into_data();
            grads.extend(db);
            if let Some((dgamma, dbeta)) = bn_grads {
                grads.extend(dgamma);
                grads.extend(dbeta);
            }
            per_layer[l] = grads;
            g = g.matmul_t(&layer.w)?;
        }
        Ok((per_layer.concat(), g))
    }

    /// Folds the batch statistics recorded in a train-mode `cache` into the
    /// running statistics.
    pub fn update_running_stats(&mut self, cache: &MlpCache) {
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &lc.bn) {
                if bc.mode != Mode::Train {
                    continue;
                }
                let n = bc.xhat.rows() as f64;
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for j in 0..bn.gamma.len() {
                    bn.running_mean[j] = BN_MOMENTUM * bn.running_mean[j] + (1.0 - BN_MOMENTUM) * bc.mean[j];
                    bn.running_var[j] =
                        BN_MOMENTUM * bn.running_var[j] + (1.0 - BN_MOMENTUM) * bc.var[j] * unbias;
                }
            }
        }
    }
}

/// Normalizes `z` in place and returns what the backward pass needs.
fn batchnorm_forward(z: &mut Matrix, bn: &BatchNorm, mode: Mode) -> BnCache {
    let (n, w) = z.shape();
    let (mean, var) = match mode {
        Mode::Train => {
            let mean: Vec<f64> = column_sums(z).into_iter().map(|s| s / n as f64).collect();
            let mut var = vec![0.0; w];
            for r in 0..n {
                for ((v, x), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                    *v += (x - m).powi(2);
                }
            }
            var.iter_mut().for_each(|v| *v /= n as f64);
            (mean, var)
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = Matrix::zeros(n, w);
    for r in 0..n {
        let zr = z.row_mut(r);
        let xr = xhat.row_mut(r);
        for j in 0..w {
            xr[j] = (zr[j] - mean[j]) * inv_std[j];
            zr[j] = bn.gamma[j] * xr[j] + bn.beta[j];
        }
    }
    BnCache {
        xhat,
        inv_std,
        mean,
        var,
        mode,
    }
}

/// Gradient through batchnorm given the gradient `g` at its output.
/// Returns (d input, d gamma, d beta).
fn batchnorm_backward(g: &Matrix, bn: &BatchNorm, bc: &BnCache) -> (Matrix, Vec<f64>, Vec<f64>) {
    let (n, w) = g.shape();
    let mut dgamma = vec![0.0; w];
    let dbeta = column_sums(g);
    for r in 0..n {
        for ((dg, gv), xh) in dgamma.iter_mut().zip(g.row(r)).zip(bc.xhat.row(r)) {
            *dg += gv * xh;
        }
    }
    let mut dz = Matrix::zeros(n, w);
    match bc.mode {
        Mode::Eval => {
            for r in 0..n {
                for j in 0..w {
                    dz.set(r, j, g.get(r, j) * bn.gamma[j] * bc.inv_std[j]);
                }
            }
        }
        Mode::Train => {
            // dz = (γ·inv_std / n)(n·g − Σg − x̂·Σ(g·x̂))
            let nf = n as f64;
            for r in 0..n {
                for j in 0..w {
                    let v = nf * g.get(r, j) - dbeta[j] - bc.xhat.get(r, j) * dgamma[j];
                    dz.set(r, j, bn.gamma[j] * bc.inv_std[j] / nf * v);
                }
            }
        }
    }
    (dz, dgamma, dbeta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_of_small_net() {
        let net = init_mlp(&mut RngStream::new(0, 0), &[1, 8, 8, 1], false).unwrap();
        assert_eq!(net.num_params(), 97);
        let bn = init_mlp(&mut RngStream::new(0, 0), &[1, 8, 8, 1], true).unwrap();
        assert_eq!(bn.num_params(), 97 + 32);
    }

    #[test]
    fn rejects_degenerate_sizes() {
        let mut rng = RngStream::new(0, 0);
        assert!(init_mlp(&mut rng, &[3], false).is_err());
        assert!(init_mlp(&mut rng, &[3, 0, 1], false).is_err());
    }

    #[test]
    fn zero_input_returns_final_bias() {
        let mut net = init_mlp(&mut RngStream::new(1, 0), &[4, 6, 2], true).unwrap();
        net.layers[1].b = vec![0.25, -1.5];
        let (out, _) = net.forward(&Matrix::zeros(3, 4), Mode::Train).unwrap();
        for r in 0..3 {
            assert_eq!(out.row(r), &[0.25, -1.5]);
        }
    }

    #[test]
    fn weight_scale_follows_fan_in() {
        let net = init_mlp(&mut RngStream::new(2, 0), &[400, 300, 1], false).unwrap();
        let w = net.layers[0].w.data();
        let sd = (w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
        assert!((sd - 0.05).abs() < 0.005, "{sd}");
    }

    #[test]
    fn frozen_fixture_output() {
        let net = Mlp {
            layers: vec![
                DenseLayer {
                    w: Matrix::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
                    b: vec![0.0, 0.5],
                    bn: None,
                },
                DenseLayer {
                    w: Matrix::from_rows(&[vec![2.0], vec![-3.0]]).unwrap(),
                    b: vec![0.1],
                    bn: None,
                },
            ],
        };
        // hidden = relu([1·1 + 2·0.5, −1 + 4 + 0.5]) = [2, 3.5]
        let x = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let (out, _) = net.forward(&x, Mode::Eval).unwrap();
        assert!((out.get(0, 0) - (4.0 - 10.5 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn running_stats_track_batches() {
        let mut net = init_mlp(&mut RngStream::new(3, 0), &[2, 3, 1], true).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.0, 0.5]]).unwrap();
        let (_, cache) = net.forward(&x, Mode::Train).unwrap();
        net.update_running_stats(&cache);
        let bn = net.layers[0].bn.as_ref().unwrap();
        assert!(bn.running_mean.iter().any(|&m| m != 0.0));
        // eval mode afterwards uses the running statistics, so it differs
        let (train_out, _) = net.forward(&x, Mode::Train).unwrap();
        let (eval_out, _) = net.forward(&x, Mode::Eval).unwrap();
        assert_ne!(train_out, eval_out);
    }
}
