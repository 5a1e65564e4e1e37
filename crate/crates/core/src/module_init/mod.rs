//! Learning module projections by minimizing the kernel objective
//! `y(X)ᵀK⁻¹y(X)` with plain stochastic gradient descent.
//!
//! Each run starts from a random projection, repeatedly subsamples a batch,
//! builds the module-conditional kernel on it and steps down the analytic
//! gradient. Projections found this way seed the modules of a network.

mod kernel;

pub use kernel::{
    gram, kernel_eval, kernel_loss, kernel_loss_grad, kernel_matrix, solve_jittered, KernelSpec,
    ProjectionVars, DEGENERACY_TOL, MAX_RELATIVE_JITTER,
};

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::Projection;
use crate::numerics::{sample_gaussian_matrix, sample_gaussian_vec, sample_unit_sphere, Matrix, RngStream};

pub const PROJECTIONS_KIND: &str = "projections";

/// Which kernel to optimize, without its variables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelTemplate {
    SineLinear { sigma: f64 },
    RbfProjection { sigma: f64, width: usize },
    Distance { sigma: f64 },
}

impl KernelTemplate {
    pub fn sigma(&self) -> f64 {
        match *self {
            KernelTemplate::SineLinear { sigma }
            | KernelTemplate::RbfProjection { sigma, .. }
            | KernelTemplate::Distance { sigma } => sigma,
        }
    }

    /// Random starting variables: unit vectors for the sine kernel,
    /// `N(0, 1/D)` entries for the matrix projection and a standard Gaussian
    /// center for the distance kernel.
    pub fn random_vars(&self, rng: &mut RngStream, dim: usize) -> Result<ProjectionVars> {
        Ok(match *self {
            KernelTemplate::SineLinear { .. } => ProjectionVars::SineLinear {
                u: sample_unit_sphere(rng, dim)?,
                v: sample_unit_sphere(rng, dim)?,
            },
            KernelTemplate::RbfProjection { width, .. } => ProjectionVars::RbfProjection {
                u: sample_gaussian_matrix(rng, dim, width, 0.0, 1.0 / (dim as f64).sqrt()),
            },
            KernelTemplate::Distance { .. } => ProjectionVars::Distance {
                u: sample_gaussian_vec(rng, dim),
            },
        })
    }
}

fn default_jitter() -> f64 {
    1e-6
}

fn default_true() -> bool {
    true
}

fn default_log_every() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub iters: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Diagonal jitter as a multiple of the kernel's diagonal value.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// With multi-output targets, optimize a single randomly chosen output
    /// column per iteration.
    #[serde(default = "default_true")]
    pub one_output_per_iter: bool,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch_size == 0 {
            errs.push("batch_size must be positive".to_string());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            errs.push(format!("lr must be finite and nonnegative, got {}", self.lr));
        }
        if !(self.jitter >= 0.0) {
            errs.push(format!("jitter must be nonnegative, got {}", self.jitter));
        }
        if self.log_every == 0 {
            errs.push("log_every must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRun {
    pub vars: ProjectionVars,
    /// `(iteration, objective)` before the step at that iteration.
    pub trace: Vec<(usize, f64)>,
    /// Times the sine auxiliary direction was redrawn after degenerating.
    pub resets: usize,
}

fn redraw_v(vars: &mut ProjectionVars, rng: &mut RngStream) -> Result<()> {
    if let ProjectionVars::SineLinear { v, .. } = vars {
        *v = sample_unit_sphere(rng, v.len())?;
    }
    Ok(())
}

/// One run of the projection search on inputs `x` (`n × D`) and targets
/// `y` (`n × d`).
pub fn find_module_projection(
    x: &Matrix,
    y: &Matrix,
    template: &KernelTemplate,
    cfg: &InitConfig,
    rng: &mut RngStream,
) -> Result<ProjectionRun> {
    cfg.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::Precondition("dataset is empty".into()));
    }
    if y.rows() != n {
        return Err(Error::shape(n, y.rows()));
    }
    if cfg.batch_size > n {
        return Err(Error::Precondition(format!(
            "batch size {} exceeds dataset size {n}",
            cfg.batch_size
        )));
    }
    let mut spec = KernelSpec {
        sigma: template.sigma(),
        vars: template.random_vars(rng, x.cols())?,
    };
    spec.validate()?;
    let max_k = spec.max_value();
    let mut trace = Vec::new();
    let mut resets = 0;
    for it in 0..cfg.iters {
        let idx = index::sample(rng, n, cfg.batch_size).into_vec();
        let xb = x.select_rows(&idx);
        let yb = if cfg.one_output_per_iter && y.cols() > 1 {
            let c = rng.random_range(0..y.cols());
            Matrix::column(&idx.iter().map(|&i| y.get(i, c)).collect::<Vec<_>>())
        } else {
            y.select_rows(&idx)
        };
        let (loss, grad) = match kernel_loss_grad(&spec, &xb, &yb, cfg.jitter * max_k) {
            Ok(v) => v,
            Err(Error::DegenerateProjection(_)) => {
                redraw_v(&mut spec.vars, rng)?;
                resets += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if it % cfg.log_every == 0 {
            trace.push((it, loss));
        }
        spec.vars.descend(&grad, cfg.lr)?;
        if let ProjectionVars::SineLinear { u, v } = &spec.vars {
            if !(crate::numerics::dot(u, v).abs() > DEGENERACY_TOL) {
                redraw_v(&mut spec.vars, rng)?;
                resets += 1;
            }
        }
    }
    Ok(ProjectionRun {
        vars: spec.vars,
        trace,
        resets,
    })
}

/// Kernel objective of `vars` on a fixed batch, for monitoring.
pub fn objective(
    vars: &ProjectionVars,
    template: &KernelTemplate,
    x: &Matrix,
    y: &Matrix,
    jitter: f64,
) -> Result<f64> {
    let spec = KernelSpec {
        sigma: template.sigma(),
        vars: vars.clone(),
    };
    let k = gram(&spec, x)?;
    let (a, _) = solve_jittered(&k, y, jitter * spec.max_value())?;
    Ok(crate::numerics::dot(a.data(), y.data()))
}

/// `modules` independent runs; run `j` uses `rng.substream(j)`.
pub fn init_all_modules(
    x: &Matrix,
    y: &Matrix,
    modules: usize,
    template: &KernelTemplate,
    cfg: &InitConfig,
    rng: &RngStream,
) -> Result<Vec<ProjectionRun>> {
    if modules == 0 {
        return Err(Error::Precondition("need at least one module".into()));
    }
    (0..modules)
        .into_par_iter()
        .map(|j| find_module_projection(x, y, template, cfg, &mut rng.substream(j as u64)))
        .collect()
}

/// Network projection seeded from learned variables. The sine kernel does
/// not see the scale of `u`, so it is normalized; the auxiliary direction is
/// initialization metadata only and is dropped.
pub fn to_projection(vars: &ProjectionVars) -> Projection {
    match vars {
        ProjectionVars::SineLinear { u, .. } => {
            let n = crate::numerics::norm2(u);
            let s = if n > 0.0 { 1.0 / n } else { 1.0 };
            Projection::Linear {
                u: Matrix::column(&u.iter().map(|x| x * s).collect::<Vec<_>>()),
            }
        }
        ProjectionVars::RbfProjection { u } => Projection::Linear { u: u.clone() },
        ProjectionVars::Distance { u } => Projection::Distance { center: u.clone() },
    }
}

pub fn save_projections(path: impl AsRef<Path>, vars: &[ProjectionVars], meta: Value) -> Result<()> {
    let kinds: Vec<Value> = vars
        .iter()
        .map(|v| match v {
            ProjectionVars::SineLinear { .. } => json!("sine-linear"),
            ProjectionVars::RbfProjection { .. } => json!("rbf-projection"),
            ProjectionVars::Distance { .. } => json!("distance"),
        })
        .collect();
    let mut c = Container::new(PROJECTIONS_KIND, json!({ "kinds": kinds, "meta": meta }));
    for (j, v) in vars.iter().enumerate() {
        match v {
            ProjectionVars::SineLinear { u, v } => {
                c.push(format!("u{j}"), vec![u.len()], u.clone())?;
                c.push(format!("v{j}"), vec![v.len()], v.clone())?;
            }
            ProjectionVars::RbfProjection { u } => {
                c.push(format!("u{j}"), vec![u.rows(), u.cols()], u.data().to_vec())?
            }
            ProjectionVars::Distance { u } => c.push(format!("u{j}"), vec![u.len()], u.clone())?,
        }
    }
    c.write(path)
}

pub fn load_projections(path: impl AsRef<Path>) -> Result<Vec<ProjectionVars>> {
    let path = path.as_ref();
    let c = Container::read(path)?;
    let bad = |msg: String| Error::Format {
        path: path.to_path_buf(),
        msg,
    };
    if c.kind != PROJECTIONS_KIND {
        return Err(bad(format!("expected projections, found {:?}", c.kind)));
    }
    let kinds = c.meta["kinds"]
        .as_array()
        .ok_or_else(|| bad("missing projection kinds".into()))?;
    let array = |name: String| {
        c.get(&name)
            .map(|(s, d)| (s.shape.clone(), d.to_vec()))
            .ok_or_else(|| bad(format!("missing array {name}")))
    };
    kinds
        .iter()
        .enumerate()
        .map(|(j, k)| {
            let (shape, u) = array(format!("u{j}"))?;
            Ok(match k.as_str() {
                Some("sine-linear") => ProjectionVars::SineLinear {
                    u,
                    v: array(format!("v{j}"))?.1,
                },
                Some("rbf-projection") if shape.len() == 2 => ProjectionVars::RbfProjection {
                    u: Matrix::from_vec(shape[0], shape[1], u)?,
                },
                Some("distance") => ProjectionVars::Distance { u },
                other => return Err(bad(format!("unknown projection kind {other:?}"))),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dot, norm2};
    use crate::tasks::{gen_sine_task, SineVariant};

    fn cfg(lr: f64, iters: usize) -> InitConfig {
        InitConfig {
            iters,
            batch_size: 64,
            lr,
            jitter: 1e-6,
            one_output_per_iter: true,
            log_every: 10,
        }
    }

    #[test]
    fn zero_learning_rate_returns_initialization() {
        let mut rng = RngStream::new(0, 0);
        let x = sample_gaussian_matrix(&mut rng, 100, 3, 0.0, 1.0);
        let y = sample_gaussian_matrix(&mut rng, 100, 1, 0.0, 1.0);
        let t = KernelTemplate::SineLinear { sigma: 1.0 };
        let run = find_module_projection(&x, &y, &t, &cfg(0.0, 20), &mut RngStream::new(5, 0)).unwrap();
        let init = t.random_vars(&mut RngStream::new(5, 0), 3).unwrap();
        assert_eq!(run.vars, init);
        assert_eq!(run.trace.len(), 2);
    }

    #[test]
    fn batch_larger_than_dataset_is_rejected() {
        let x = Matrix::zeros(10, 2);
        let y = Matrix::zeros(10, 1);
        let t = KernelTemplate::Distance { sigma: 1.0 };
        assert!(find_module_projection(&x, &y, &t, &cfg(0.1, 1), &mut RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn runs_are_isolated_by_substream() {
        let mut rng = RngStream::new(1, 0);
        let x = sample_gaussian_matrix(&mut rng, 80, 3, 0.0, 1.0);
        let y = sample_gaussian_matrix(&mut rng, 80, 1, 0.0, 1.0);
        let t = KernelTemplate::Distance { sigma: 1.0 };
        let root = RngStream::new(9, 2);
        let three = init_all_modules(&x, &y, 3, &t, &cfg(0.05, 15), &root).unwrap();
        let one = init_all_modules(&x, &y, 1, &t, &cfg(0.05, 15), &root).unwrap();
        assert_eq!(one[0], three[0]);
        let single = find_module_projection(&x, &y, &t, &cfg(0.05, 15), &mut root.substream(2)).unwrap();
        assert_eq!(single, three[2]);
    }

    #[test]
    fn recovers_planted_sine_direction() {
        let mut hits = 0;
        let mut decreased = 0;
        for seed in 0..5 {
            let mut rng = RngStream::new(seed, 0);
            let task = gen_sine_task(&mut rng, 1, 5, 3).unwrap();
            let data = task.sample(&mut rng, 1000, SineVariant::Linear).unwrap();
            let y = Matrix::column(&data.y);
            let t = KernelTemplate::SineLinear { sigma: 0.3 };
            let c = InitConfig {
                iters: 2000,
                batch_size: 128,
                lr: 0.01,
                ..cfg(0.01, 0)
            };
            let run = find_module_projection(&data.x, &y, &t, &c, &mut RngStream::new(seed, 1)).unwrap();
            let ProjectionVars::SineLinear { u, .. } = &run.vars else { unreachable!() };
            let cos = dot(u, &task.u[0]).abs() / norm2(u);
            if cos > 0.9 {
                hits += 1;
            }
            assert!(run.trace.iter().all(|(_, l)| l.is_finite()));
            let first = run.trace.first().unwrap().1;
            let last = run.trace.last().unwrap().1;
            if last <= first {
                decreased += 1;
            }
        }
        assert!(hits >= 4, "recovered {hits} of 5");
        assert!(decreased >= 4, "objective decreased in {decreased} of 5");
    }

    #[test]
    fn projections_round_trip() {
        let mut rng = RngStream::new(2, 0);
        let vars = vec![
            KernelTemplate::SineLinear { sigma: 1.0 }.random_vars(&mut rng, 4).unwrap(),
            KernelTemplate::RbfProjection { sigma: 1.0, width: 2 }.random_vars(&mut rng, 4).unwrap(),
            KernelTemplate::Distance { sigma: 1.0 }.random_vars(&mut rng, 4).unwrap(),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        save_projections(&path, &vars, json!({"seed": 2})).unwrap();
        assert_eq!(load_projections(&path).unwrap(), vars);
    }
}
