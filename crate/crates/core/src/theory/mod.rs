//! Closed-form expected train and test losses for min-norm linear
//! regression on random features whose target coefficients follow the
//! power-law spectrum in [`SpectrumSpec`].
//!
//! Monolithic models see the whole input, so the spectrum decays with the
//! input dimension `m`. Modular models learn `m·b` projection coordinates
//! with unit variance plus bodies whose spectrum decays with the bottleneck
//! dimension `b` only.

mod fit;
mod fnp;
mod inversion;
mod spectrum;

pub use fit::{fit_theory_params, FitRecord, FitResult};
pub use fnp::{f_np, f_np_closed, f_np_monte_carlo, median_of_means, FEvaluator, McConfig, MOM_GROUPS};
pub use inversion::{invert_sample_complexity, LossCurve, SampleComplexity};
pub use spectrum::{effective_dim_of, SpectrumSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPair {
    pub train: f64,
    pub test: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonolithicConfig {
    /// `spectrum.dim` is the input dimension `m`.
    pub spectrum: SpectrumSpec,
    pub n: u64,
    pub p: u64,
    pub d: u64,
}

impl MonolithicConfig {
    pub fn m(&self) -> u32 {
        self.spectrum.dim
    }

    fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        if self.p == 0 || self.d == 0 {
            return Err(Error::Precondition("p and d must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModularConfig {
    /// `spectrum.dim` must equal the bottleneck dimension `b`.
    pub spectrum: SpectrumSpec,
    pub n: u64,
    pub p: u64,
    pub d: u64,
    pub m: u64,
    pub b: u64,
}

impl ModularConfig {
    fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        if self.d == 0 {
            return Err(Error::Precondition("d must be >= 1".into()));
        }
        if self.spectrum.dim as u64 != self.b {
            return Err(Error::Precondition(format!(
                "modular spectrum dim {} must equal b = {}",
                self.spectrum.dim, self.b
            )));
        }
        if self.p <= self.m * self.b {
            return Err(Error::Precondition(format!(
                "modular model needs p > m*b (p = {}, m*b = {})",
                self.p,
                self.m * self.b
            )));
        }
        Ok(())
    }
}

/// Shared loss expression with head trace `t1`, tail trace `t2` and total
/// trace `t1 + t2`:
/// test = d·t2·F(dn,p) − d·(min(dn,p)/p)·t1 + d·(t1 + t2),
/// train = ((dn − min(dn,p))/n)·t2.
fn loss_formula(n: f64, p: f64, d: f64, t1: f64, t2: f64, f: &FEvaluator) -> Result<LossPair> {
    let dn = d * n;
    let fill = dn.min(p);
    let test = d * t2 * f.eval(dn, p)? - d * (fill / p) * t1 + d * (t1 + t2);
    let train = if n > 0.0 { (dn - fill) / n * t2 } else { 0.0 };
    Ok(LossPair { train, test })
}

/// Monolithic losses for a real-valued parameter count, used when `p` is an
/// effective count `α·p′`.
pub fn monolithic_losses_real(
    spectrum: &SpectrumSpec,
    n: f64,
    p: f64,
    d: f64,
    f: &FEvaluator,
) -> Result<LossPair> {
    let t2 = spectrum.trace_tail(p);
    loss_formula(n, p, d, spectrum.c - t2, t2, f)
}

/// Expected losses of a monolithic model with `p` parameters trained on `n`
/// samples with `d` outputs each.
pub fn monolithic_losses(cfg: &MonolithicConfig, f: &FEvaluator) -> Result<LossPair> {
    cfg.validate()?;
    monolithic_losses_real(&cfg.spectrum, cfg.n as f64, cfg.p as f64, cfg.d as f64, f)
}

/// Expected losses of a modular model. The body tail trace is evaluated at
/// `p`, with the `m·b` projection block adding unit variance per coordinate
/// to the head; the training loss therefore does not involve `m`.
pub fn modular_losses(cfg: &ModularConfig, f: &FEvaluator) -> Result<LossPair> {
    cfg.validate()?;
    let p = cfg.p as f64;
    let t2 = cfg.spectrum.trace_tail(p);
    let block = (cfg.m * cfg.b) as f64;
    loss_formula(cfg.n as f64, p, cfg.d as f64, block + cfg.spectrum.c - t2, t2, f)
}

/// Modular losses when the `p` fitted parameters are split exactly into the
/// `m·b` projection coordinates and the first `p − m·b` body features, so
/// the body tail starts at `p − m·b`.
pub fn modular_losses_split(cfg: &ModularConfig, f: &FEvaluator) -> Result<LossPair> {
    cfg.validate()?;
    let block = cfg.m * cfg.b;
    let t2 = cfg.spectrum.trace_tail((cfg.p - block) as f64);
    loss_formula(
        cfg.n as f64,
        cfg.p as f64,
        cfg.d as f64,
        block as f64 + cfg.spectrum.c - t2,
        t2,
        f,
    )
}
