//! Module-conditional kernels, the kernel objective `yᵀK⁻¹y` and its
//! analytic gradient with respect to the projection variables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix, SpdFactor};

/// Below this `|v̂ᵀû|` the sine kernel is undefined.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Jitter escalation stops once it exceeds this fraction of the mean diagonal.
pub const MAX_RELATIVE_JITTER: f64 = 1e-2;

/// Projection variables of one module, also used for their gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectionVars {
    /// Scalar projection `ûᵀx` with auxiliary deflation direction `v̂`.
    SineLinear { u: Vec<f64>, v: Vec<f64> },
    /// Matrix projection `Ûᵀx`, `Û` is `D × width`.
    RbfProjection { u: Matrix },
    /// Distance to a learned center `‖x − û‖`.
    Distance { u: Vec<f64> },
}

impl ProjectionVars {
    pub fn input_dim(&self) -> usize {
        match self {
            ProjectionVars::SineLinear { u, .. } | ProjectionVars::Distance { u } => u.len(),
            ProjectionVars::RbfProjection { u } => u.rows(),
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            ProjectionVars::SineLinear { u, v } => {
                f(u);
                f(v);
            }
            ProjectionVars::RbfProjection { u } => f(u.data_mut()),
            ProjectionVars::Distance { u } => f(u),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        match self {
            ProjectionVars::SineLinear { u, v } => [u.as_slice(), v.as_slice()].concat(),
            ProjectionVars::RbfProjection { u } => u.data().to_vec(),
            ProjectionVars::Distance { u } => u.clone(),
        }
    }

    /// `self ← self − step · grad`; both must be the same variant and shape.
    pub fn descend(&mut self, grad: &ProjectionVars, step: f64) -> Result<()> {
        let g = grad.flatten();
        let expected = self.flatten().len();
        if g.len() != expected || std::mem::discriminant(self) != std::mem::discriminant(grad) {
            return Err(Error::shape(expected, g.len()));
        }
        let mut off = 0;
        self.visit_mut(&mut |p| {
            for v in p.iter_mut() {
                *v -= step * g[off];
                off += 1;
            }
        });
        Ok(())
    }
}

/// A kernel with its bandwidth and current projection variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub sigma: f64,
    pub vars: ProjectionVars,
}

/// Per-point quantities every kernel is built from.
enum Features {
    Sine { s: f64, t: Vec<f64>, r: Matrix, q: Vec<f64> },
    Rbf { z: Matrix },
    Distance { rho: Vec<f64> },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Precondition(format!("sigma must be positive, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Largest value the kernel takes, reached at `x1 = x2`.
    pub fn max_value(&self) -> f64 {
        match self.vars {
            ProjectionVars::SineLinear { .. } => 2.0,
            _ => 1.0,
        }
    }

    fn features(&self, x: &Matrix) -> Result<Features> {
        self.validate()?;
        if x.cols() != self.vars.input_dim() {
            return Err(Error::shape(format!("{} input columns", self.vars.input_dim()), x.cols()));
        }
        match &self.vars {
            ProjectionVars::SineLinear { u, v } => {
                let s = dot(v, u);
                if !(s.abs() > DEGENERACY_TOL) {
                    return Err(Error::DegenerateProjection(s));
                }
                let t: Vec<f64> = x.matvec(u)?.into_iter().map(|p| p / s).collect();
                let mut r = x.clone();
                for (i, &ti) in t.iter().enumerate() {
                    for (rv, vv) in r.row_mut(i).iter_mut().zip(v) {
                        *rv -= ti * vv;
                    }
                }
                let q = r.matvec(v)?;
                Ok(Features::Sine { s, t, r, q })
            }
            ProjectionVars::RbfProjection { u } => Ok(Features::Rbf { z: x.matmul(u)? }),
            ProjectionVars::Distance { u } => Ok(Features::Distance {
                rho: (0..x.rows())
                    .map(|i| x.row(i).iter().zip(u).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                    .collect(),
            }),
        }
    }
}

fn gram_from(features: &Features, sigma: f64) -> Matrix {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let b = match features {
        Features::Sine { t, .. } => t.len(),
        Features::Rbf { z } => z.rows(),
        Features::Distance { rho } => rho.len(),
    };
    let mut k = Matrix::zeros(b, b);
    for i in 0..b {
        for j in 0..=i {
            let v = match features {
                Features::Sine { t, r, .. } => {
                    let dr: f64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    (-(t[i] - t[j]).powi(2) * inv).exp() + (-dr * inv).exp()
                }
                Features::Rbf { z } => {
                    let dz: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    (-dz * inv).exp()
                }
                Features::Distance { rho } => (-(rho[i] - rho[j]).powi(2) * inv).exp(),
            };
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// `κ(x1, x2)` for the given kernel.
pub fn kernel_eval(spec: &KernelSpec, x1: &[f64], x2: &[f64]) -> Result<f64> {
    let x = Matrix::from_rows(&[x1.to_vec(), x2.to_vec()])?;
    Ok(gram_from(&spec.features(&x)?, spec.sigma).get(0, 1))
}

/// `b × b` matrix of `κ(x_i, x_j)` over the rows of `batch`.
pub fn gram(spec: &KernelSpec, batch: &Matrix) -> Result<Matrix> {
    Ok(gram_from(&spec.features(batch)?, spec.sigma))
}

/// Kernel matrix for `per_output`-dimensional targets: entry
/// `(i·d + a, j·d + c)` is `κ(x_i, x_j)·δ_ac`.
pub fn kernel_matrix(spec: &KernelSpec, batch: &Matrix, per_output: usize) -> Result<Matrix> {
    if batch.rows() == 0 {
        return Err(Error::Precondition("kernel batch is empty".into()));
    }
    let g = gram(spec, batch)?;
    if per_output == 1 {
        return Ok(g);
    }
    let (b, d) = (g.rows(), per_output);
    let mut k = Matrix::zeros(b * d, b * d);
    for i in 0..b {
        for j in 0..b {
            for a in 0..d {
                k.set(i * d + a, j * d + a, g.get(i, j));
            }
        }
    }
    Ok(k)
}

fn mean_diag(k: &Matrix) -> f64 {
    (0..k.rows()).map(|i| k.get(i, i)).sum::<f64>() / k.rows().max(1) as f64
}

/// Solves `(K + jitter·I) A = Y`, escalating the jitter tenfold (starting
/// from `1e-6·mean diag` when zero) until the factorization succeeds.
/// Returns `A` and the jitter used.
pub fn solve_jittered(k: &Matrix, y: &Matrix, jitter: f64) -> Result<(Matrix, f64)> {
    if k.rows() != k.cols() || y.rows() != k.rows() {
        return Err(Error::shape(k.rows(), y.rows()));
    }
    if !(jitter >= 0.0) {
        return Err(Error::Precondition(format!("jitter must be nonnegative, got {jitter}")));
    }
    let scale = mean_diag(k).abs().max(f64::MIN_POSITIVE);
    let cap = MAX_RELATIVE_JITTER * scale;
    let mut j = jitter;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.rows() {
            kj.set(i, i, kj.get(i, i) + j);
        }
        if let Some(f) = SpdFactor::new(&kj) {
            let a = f.solve_matrix(y);
            if a.is_finite() {
                return Ok((a, j));
            }
        }
        j = if j == 0.0 { 1e-6 * scale } else { j * 10.0 };
        if j > cap * (1.0 + 1e-12) {
            return Err(Error::Conditioning { jitter: j / 10.0 });
        }
    }
}

/// `yᵀ(K + jitter·I)⁻¹y` via a Cholesky solve.
pub fn kernel_loss(k: &Matrix, y: &[f64], jitter: f64) -> Result<f64> {
    let (a, _) = solve_jittered(k, &Matrix::column(y), jitter)?;
    Ok(dot(a.data(), y))
}

/// Objective `Σ_a y_aᵀ(K + jitter·I)⁻¹y_a` over the columns of `y`
/// (`b × d`) and its gradient with respect to the projection variables.
pub fn kernel_loss_grad(
    spec: &KernelSpec,
    batch: &Matrix,
    y: &Matrix,
    jitter: f64,
) -> Result<(f64, ProjectionVars)> {
    let feats = spec.features(batch)?;
    let k = gram_from(&feats, spec.sigma);
    let (alpha, _) = solve_jittered(&k, y, jitter)?;
    let loss = dot(alpha.data(), y.data());
    // dL = −Σ_ij W_ij dκ_ij with W = A Aᵀ.
    let w = alpha.matmul_t(&alpha)?;
    let b = batch.rows();
    let s2 = spec.sigma * spec.sigma;
    let inv = 1.0 / (2.0 * s2);
    let grad = match (&feats, &spec.vars) {
        (Features::Sine { s, t, r, q }, ProjectionVars::SineLinear { u, .. }) => {
            let m = u.len();
            let mut g = vec![0.0; b];
            let mut h = vec![0.0; b];
            for i in 0..b {
                for j in 0..b {
                    if i == j {
                        continue;
                    }
                    let dt = t[i] - t[j];
                    let dr: f64 = r.row(i).iter().zip(r.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    let e1 = (-dt * dt * inv).exp();
                    let e2 = (-dr * inv).exp();
                    let wij = w.get(i, j);
                    g[i] += wij * (e1 * dt - e2 * (q[i] - q[j]));
                    h[i] += wij * e2 * dt;
                }
            }
            let mut gu = vec![0.0; m];
            let mut gv = vec![0.0; m];
            let mut gt = 0.0;
            for i in 0..b {
                let gi = 2.0 * g[i] / s2;
                gt += gi * t[i];
                for (c, &ri) in r.row(i).iter().enumerate() {
                    gu[c] += gi * ri / s;
                    gv[c] -= 2.0 * h[i] / s2 * ri;
                }
            }
            for c in 0..m {
                gv[c] -= gt * u[c] / s;
            }
            ProjectionVars::SineLinear { u: gu, v: gv }
        }
        (Features::Rbf { z }, ProjectionVars::RbfProjection { .. }) => {
            let width = z.cols();
            let mut gz = Matrix::zeros(b, width);
            for i in 0..b {
                for j in 0..b {
                    if i == j {
                        continue;
                    }
                    let dz: f64 = z.row(i).iter().zip(z.row(j)).map(|(a, b)| (a - b).powi(2)).sum();
                    let mij = w.get(i, j) * (-dz * inv).exp() * 2.0 / s2;
                    if mij == 0.0 {
                        continue;
                    }
                    let (zi, zj) = (z.row(i).to_vec(), z.row(j));
                    for (c, g) in gz.row_mut(i).iter_mut().enumerate() {
                        *g += mij * (zi[c] - zj[c]);
                    }
                }
            }
            ProjectionVars::RbfProjection { u: batch.t_matmul(&gz)? }
        }
        (Features::Distance { rho }, ProjectionVars::Distance { u }) => {
            let mut gu = vec![0.0; u.len()];
            for i in 0..b {
                let mut gr = 0.0;
                for j in 0..b {
                    let d = rho[i] - rho[j];
                    gr += w.get(i, j) * (-d * d * inv).exp() * d;
                }
                gr *= 2.0 / s2;
                if rho[i] > 0.0 {
                    for (c, g) in gu.iter_mut().enumerate() {
                        *g += gr * (u[c] - batch.get(i, c)) / rho[i];
                    }
                }
            }
            ProjectionVars::Distance { u: gu }
        }
        _ => unreachable!("features are built from the same variables"),
    };
    Ok((loss, grad))
}
