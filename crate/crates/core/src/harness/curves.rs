//! Loss curves over `(n, p)` grids from the closed forms and from the
//! linear simulator, emitted with one shared row schema.

use serde::{Deserialize, Serialize};

use super::records::CurveRow;
use crate::error::{Error, Result};
use crate::linear_sim::{simulate_modular, simulate_monolithic, LinearSimConfig};
use crate::numerics::RngStream;
use crate::theory::{
    modular_losses, modular_losses_split, monolithic_losses, FEvaluator, McConfig, ModularConfig,
    MonolithicConfig, SpectrumSpec,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveModel {
    #[default]
    Monolithic,
    /// `m` modules, each reading `spectrum.dim` projection coordinates.
    Modular { m: u64 },
}

/// Which closed form to use for modular curves.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModularForm {
    /// Tail trace evaluated at `p`.
    #[default]
    Printed,
    /// Tail trace evaluated at `p − mb`, the body's own feature count.
    Split,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSettings {
    /// Truncation `P` of the feature spectrum.
    #[serde(rename = "P")]
    pub features: usize,
    pub trials: usize,
    pub n_test: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        SimulationSettings {
            features: 2000,
            trials: 200,
            n_test: 256,
        }
    }
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub spectrum: SpectrumSpec,
    #[serde(default = "one")]
    pub d: u64,
    pub n: Vec<u64>,
    pub p: Vec<u64>,
    #[serde(default)]
    pub model: CurveModel,
    #[serde(default)]
    pub form: ModularForm,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub simulation: SimulationSettings,
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let Err(e) = self.spectrum.validate() {
            errs.push(e.to_string());
        }
        if self.d == 0 {
            errs.push("d must be positive".into());
        }
        if self.n.is_empty() || self.p.is_empty() {
            errs.push("n and p grids must be nonempty".into());
        }
        if let CurveModel::Modular { m } = self.model {
            let mb = m * self.spectrum.dim as u64;
            if m == 0 {
                errs.push("modular m must be positive".into());
            }
            if let Some(&p) = self.p.iter().find(|&&p| p <= mb) {
                errs.push(format!("modular curves need p > m·b = {mb}, got p = {p}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    fn model_name(&self) -> &'static str {
        match self.model {
            CurveModel::Monolithic => "monolithic",
            CurveModel::Modular { .. } => "modular",
        }
    }

    fn m(&self) -> u32 {
        match self.model {
            CurveModel::Monolithic => self.spectrum.dim,
            CurveModel::Modular { m } => m as u32,
        }
    }

    fn grid(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.n.iter().flat_map(move |&n| self.p.iter().map(move |&p| (n, p)))
    }
}

/// Closed-form train and test losses over the grid.
pub fn theory_curve(cfg: &CurveConfig) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let f = FEvaluator::new(cfg.mc);
    cfg.grid()
        .map(|(n, p)| {
            let pair = match cfg.model {
                CurveModel::Monolithic => monolithic_losses(
                    &MonolithicConfig {
                        spectrum: cfg.spectrum,
                        n,
                        p,
                        d: cfg.d,
                    },
                    &f,
                )?,
                CurveModel::Modular { m } => {
                    let mc = ModularConfig {
                        spectrum: cfg.spectrum,
                        n,
                        p,
                        d: cfg.d,
                        m,
                        b: cfg.spectrum.dim as u64,
                    };
                    match cfg.form {
                        ModularForm::Printed => modular_losses(&mc, &f)?,
                        ModularForm::Split => modular_losses_split(&mc, &f)?,
                    }
                }
            };
            Ok(CurveRow {
                source: "theory".into(),
                model: cfg.model_name().into(),
                n,
                p: p as f64,
                m: cfg.m(),
                d: cfg.d,
                train: pair.train,
                test: pair.test,
                train_se: None,
                test_se: None,
            })
        })
        .collect()
}

/// Monte Carlo estimates over the grid; grid point `(n, p)` draws from
/// the stream keyed by `(n, p)` under `seed`.
pub fn simulate_curve(cfg: &CurveConfig, seed: u64) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let root = RngStream::new(seed, 0);
    cfg.grid()
        .map(|(n, p)| {
            let sim = LinearSimConfig {
                features: cfg.simulation.features,
                n: n as usize,
                p: p as usize,
                d: cfg.d as usize,
                spectrum: cfg.spectrum,
                trials: cfg.simulation.trials,
                n_test: cfg.simulation.n_test,
            };
            let rng = root.keyed(&[n, p]);
            let stats = match cfg.model {
                CurveModel::Monolithic => simulate_monolithic(&sim, &rng)?,
                CurveModel::Modular { m } => {
                    simulate_modular(&sim, m as usize, cfg.spectrum.dim as usize, &rng)?
                }
            };
            Ok(CurveRow {
                source: "simulation".into(),
                model: cfg.model_name().into(),
                n,
                p: p as f64,
                m: cfg.m(),
                d: cfg.d,
                train: stats.train_mean,
                test: stats.test_mean,
                train_se: Some(stats.train_se),
                test_se: Some(stats.test_se),
            })
        })
        .collect()
}
