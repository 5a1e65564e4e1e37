//! Monte Carlo simulation of min-norm linear regression on Gaussian random
//! features, used to check the closed-form losses in [`crate::theory`].
//!
//! Each trial draws target coefficients `W` with diagonal covariance, a
//! training design `Φ ∈ R^{dn×P}` and a fresh test design, fits the
//! minimum-norm solution on the first `p` feature columns and records the
//! train and test losses. The infinite spectrum is truncated at `P`
//! features; the trace beyond `P` is added to the last feature so the total
//! target variance equals the untruncated value.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    compensated_sum, min_norm_lstsq, sample_gaussian_matrix, standard_normal, RngStream,
};
use crate::theory::SpectrumSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSimConfig {
    /// Number of body features `P` (finite stand-in for an infinite basis).
    #[serde(rename = "P")]
    pub features: usize,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    pub spectrum: SpectrumSpec,
    pub trials: usize,
    pub n_test: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimStats {
    pub trials: usize,
    pub train_mean: f64,
    pub train_se: f64,
    pub test_mean: f64,
    pub test_se: f64,
}

impl LinearSimConfig {
    fn validate(&self, block: usize) -> Result<()> {
        self.spectrum.validate()?;
        let mut problems = Vec::new();
        if self.features == 0 {
            problems.push("P must be >= 1".to_string());
        }
        if self.p == 0 || self.d == 0 || self.trials == 0 || self.n_test == 0 {
            problems.push("p, d, trials and n_test must be >= 1".to_string());
        }
        if self.p > block + self.features {
            problems.push(format!(
                "p = {} exceeds the {} available features",
                self.p,
                block + self.features
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Variance of each body feature's coefficient, with the trace beyond
    /// `P` folded into the last entry.
    fn body_variances(&self) -> Vec<f64> {
        let mut lam = self.spectrum.lambdas(self.features);
        if let Some(last) = lam.last_mut() {
            *last += self.spectrum.trace_tail(self.features as f64);
        }
        lam
    }
}

/// Simulates a monolithic model: body features only, spectrum at
/// `spectrum.dim = m`.
pub fn simulate_monolithic(cfg: &LinearSimConfig, rng: &RngStream) -> Result<SimStats> {
    run(cfg, 0, rng)
}

/// Simulates a modular model whose feature map is `m·b` projection
/// coordinates with unit-variance targets followed by `P` body features with
/// spectrum at `spectrum.dim = b`. The model fits the first `p` columns.
pub fn simulate_modular(cfg: &LinearSimConfig, m: usize, b: usize, rng: &RngStream) -> Result<SimStats> {
    let block = m * b;
    if cfg.p <= block {
        return Err(Error::Precondition(format!(
            "modular model needs p > m*b (p = {}, m*b = {block})",
            cfg.p
        )));
    }
    if cfg.spectrum.dim as usize != b {
        return Err(Error::Precondition(format!(
            "modular spectrum dim {} must equal b = {b}",
            cfg.spectrum.dim
        )));
    }
    run(cfg, block, rng)
}

/// `block` unit-variance projection coordinates precede the body features.
fn run(cfg: &LinearSimConfig, block: usize, rng: &RngStream) -> Result<SimStats> {
    cfg.validate(block)?;
    let mut std_dev = vec![1.0; block];
    std_dev.extend(cfg.body_variances().into_iter().map(f64::sqrt));
    let results = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial(cfg, &std_dev, &mut rng.substream(t as u64)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let (train, test): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    let (train_mean, train_se) = mean_se(&train);
    let (test_mean, test_se) = mean_se(&test);
    Ok(SimStats {
        trials: cfg.trials,
        train_mean,
        train_se,
        test_mean,
        test_se,
    })
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// One trial: returns (train loss, test loss).
fn trial(cfg: &LinearSimConfig, std_dev: &[f64], rng: &mut RngStream) -> Result<(f64, f64)> {
    let width = std_dev.len();
    let w: Vec<f64> = std_dev.iter().map(|s| s * standard_normal(rng)).collect();

    let rows = cfg.d * cfg.n;
    let (theta, train) = if rows == 0 {
        (vec![0.0; cfg.p], 0.0)
    } else {
        let phi = sample_gaussian_matrix(rng, rows, width, 0.0, 1.0);
        let y = phi.matvec(&w)?;
        let head = phi.columns(0, cfg.p);
        let theta = min_norm_lstsq(&head, &y)?;
        let fit = head.matvec(&theta)?;
        let sse = compensated_sum(y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)));
        (theta, sse / cfg.n as f64)
    };

    let mut delta = w;
    for (dj, tj) in delta.iter_mut().zip(&theta) {
        *dj -= tj;
    }
    let test_phi = sample_gaussian_matrix(rng, cfg.d * cfg.n_test, width, 0.0, 1.0);
    let err = test_phi.matvec(&delta)?;
    let test = compensated_sum(err.iter().map(|e| e * e)) / cfg.n_test as f64;
    Ok((train, test))
}
