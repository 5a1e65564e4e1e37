use serde::{Deserialize, Serialize};

use super::mlp::{init_mlp, DenseLayer, Mlp, MlpCache, Mode};
use crate::error::{Error, Result};
use crate::numerics::{sample_gaussian_matrix, sample_gaussian_vec, Matrix, RngStream};

/// How a module reads the network input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Projection {
    /// `z = xᵀU` with `U ∈ R^{m×b}`.
    Linear { u: Matrix },
    /// `z = ‖x − center‖₂`, a single coordinate.
    Distance { center: Vec<f64> },
}

impl Projection {
    pub fn width(&self) -> usize {
        match self {
            Projection::Linear { u } => u.cols(),
            Projection::Distance { .. } => 1,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Projection::Linear { u } => u.rows(),
            Projection::Distance { center } => center.len(),
        }
    }

    fn values(&self) -> &[f64] {
        match self {
            Projection::Linear { u } => u.data(),
            Projection::Distance { center } => center,
        }
    }

    fn values_mut(&mut self) -> &mut [f64] {
        match self {
            Projection::Linear { u } => u.data_mut(),
            Projection::Distance { center } => center,
        }
    }

    /// Projected inputs, `n × width`.
    fn apply(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            Projection::Linear { u } => x.matmul(u),
            Projection::Distance { center } => {
                let d: Vec<f64> = (0..x.rows())
                    .map(|r| {
                        x.row(r)
                            .iter()
                            .zip(center)
                            .map(|(a, c)| (a - c).powi(2))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                Ok(Matrix::column(&d))
            }
        }
    }

    fn grad(&self, x: &Matrix, z: &Matrix, dz: &Matrix) -> Result<Vec<f64>> {
        match self {
            Projection::Linear { .. } => Ok(x.t_matmul(dz)?.into_data()),
            Projection::Distance { center } => {
                // ∂‖x − c‖/∂c = (c − x)/‖x − c‖
                let mut g = vec![0.0; center.len()];
                for r in 0..x.rows() {
                    let dist = z.get(r, 0);
                    if dist <= 0.0 {
                        continue;
                    }
                    let s = dz.get(r, 0) / dist;
                    for ((gj, cj), xj) in g.iter_mut().zip(center).zip(x.row(r)) {
                        *gj += s * (cj - xj);
                    }
                }
                Ok(g)
            }
        }
    }
}

/// How module outputs become the network output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Combine {
    /// `(1/√K) Σ_j body_j(z_j)`.
    Sum,
    /// A linear head over the concatenated module outputs.
    Concat { head: DenseLayer },
}

/// A network of `K` modules, each an MLP body reading its own projection of
/// the input. With `shared` bodies all modules use `bodies[0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularNet {
    pub projections: Vec<Projection>,
    pub bodies: Vec<Mlp>,
    pub shared: bool,
    pub combine: Combine,
    /// Frozen projections still appear among the parameters but receive zero
    /// gradient.
    pub train_projections: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectionKind {
    Linear { b: usize },
    Distance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CombineKind {
    Sum,
    Concat { outputs: usize },
}

/// Shape of a modular network, enough to rebuild it from a parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModularSpec {
    pub input_dim: usize,
    pub modules: usize,
    pub projection: ProjectionKind,
    /// Hidden widths of each module body.
    pub body_hidden: Vec<usize>,
    pub body_out: usize,
    pub batchnorm: bool,
    pub shared: bool,
    pub combine: CombineKind,
    pub train_projections: bool,
}

impl ModularSpec {
    pub fn projection_width(&self) -> usize {
        match self.projection {
            ProjectionKind::Linear { b } => b,
            ProjectionKind::Distance => 1,
        }
    }

    pub fn body_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.projection_width()];
        s.extend(&self.body_hidden);
        s.push(self.body_out);
        s
    }
}

/// Random initialization: linear projections from `N(0, 1/m)`, distance
/// centers from `N(0, I)`, bodies and head as in [`init_mlp`].
pub fn init_modular(rng: &mut RngStream, spec: &ModularSpec) -> Result<ModularNet> {
    if spec.modules == 0 || spec.input_dim == 0 || spec.body_out == 0 {
        return Err(Error::Dimension(
            "modular network needs modules, input_dim and body_out >= 1".into(),
        ));
    }
    let m = spec.input_dim;
    let projections = (0..spec.modules)
        .map(|_| match spec.projection {
            ProjectionKind::Linear { b } => Projection::Linear {
                u: sample_gaussian_matrix(rng, m, b, 0.0, 1.0 / (m as f64).sqrt()),
            },
            ProjectionKind::Distance => Projection::Distance {
                center: sample_gaussian_vec(rng, m),
            },
        })
        .collect();
    let n_bodies = if spec.shared { 1 } else { spec.modules };
    let bodies = (0..n_bodies)
        .map(|_| init_mlp(rng, &spec.body_sizes(), spec.batchnorm))
        .collect::<Result<Vec<_>>>()?;
    let combine = match spec.combine {
        CombineKind::Sum => Combine::Sum,
        CombineKind::Concat { outputs } => {
            let fan_in = spec.modules * spec.body_out;
            Combine::Concat {
                head: DenseLayer {
                    w: sample_gaussian_matrix(rng, fan_in, outputs, 0.0, 1.0 / (fan_in as f64).sqrt()),
                    b: vec![0.0; outputs],
                    bn: None,
                },
            }
        }
    };
    Ok(ModularNet {
        projections,
        bodies,
        shared: spec.shared,
        combine,
        train_projections: spec.train_projections,
    })
}

/// Intermediate values of a forward pass.
#[derive(Clone, Debug)]
pub struct ModularCache {
    input: Matrix,
    z: Vec<Matrix>,
    bodies: Vec<MlpCache>,
    concat: Option<Matrix>,
}

impl ModularNet {
    pub fn modules(&self) -> usize {
        self.projections.len()
    }

    pub fn input_dim(&self) -> usize {
        self.projections[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        match &self.combine {
            Combine::Sum => self.bodies[0].output_dim(),
            Combine::Concat { head } => head.w.cols(),
        }
    }

    pub fn body(&self, j: usize) -> &Mlp {
        &self.bodies[if self.shared { 0 } else { j }]
    }

    /// Output scale of the sum combination.
    pub fn scale(&self) -> f64 {
        1.0 / (self.modules() as f64).sqrt()
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        for p in &self.projections {
            f(p.values());
        }
        for b in &self.bodies {
            b.visit_params(f);
        }
        if let Combine::Concat { head } = &self.combine {
            f(head.w.data());
            f(&head.b);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for p in &mut self.projections {
            f(p.values_mut());
        }
        for b in &mut self.bodies {
            b.visit_params_mut(f);
        }
        if let Combine::Concat { head } = &mut self.combine {
            f(head.w.data_mut());
            f(&mut head.b);
        }
    }

    pub fn visit_buffers(&self, f: &mut dyn FnMut(&[f64])) {
        for b in &self.bodies {
            b.visit_buffers(f);
        }
    }

    pub fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        for b in &mut self.bodies {
            b.visit_buffers_mut(f);
        }
    }

    pub fn forward(&self, x: &Matrix, mode: Mode) -> Result<(Matrix, ModularCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!("{} input columns", self.input_dim()), x.cols()));
        }
        let n = x.rows();
        let mut zs = Vec::with_capacity(self.modules());
        let mut caches = Vec::with_capacity(self.modules());
        let mut outs = Vec::with_capacity(self.modules());
        for (j, p) in self.projections.iter().enumerate() {
            let z = p.apply(x)?;
            let (o, c) = self.body(j).forward(&z, mode)?;
            zs.push(z);
            caches.push(c);
            outs.push(o);
        }
        let (out, concat) = match &self.combine {
            Combine::Sum => {
                let mut acc = Matrix::zeros(n, outs[0].cols());
                for o in &outs {
                    for (a, v) in acc.data_mut().iter_mut().zip(o.data()) {
                        *a += v;
                    }
                }
                acc.scale(self.scale());
                (acc, None)
            }
            Combine::Concat { head } => {
                let width: usize = outs.iter().map(|o| o.cols()).sum();
                let mut h = Matrix::zeros(n, width);
                for r in 0..n {
                    let mut off = 0;
                    for o in &outs {
                        h.row_mut(r)[off..off + o.cols()].copy_from_slice(o.row(r));
                        off += o.cols();
                    }
                }
                let mut y = h.matmul(&head.w)?;
                for r in 0..n {
                    for (v, b) in y.row_mut(r).iter_mut().zip(&head.b) {
                        *v += b;
                    }
                }
                (y, Some(h))
            }
        };
        Ok((
            out,
            ModularCache {
                input: x.clone(),
                z: zs,
                bodies: caches,
                concat,
            },
        ))
    }

    /// Parameter gradient in canonical order.
    pub fn backward(&self, cache: &ModularCache, grad_out: &Matrix) -> Result<Vec<f64>> {
        let k = self.modules();
        let n = grad_out.rows();
        let body_out = self.bodies[0].output_dim();
        let mut head_grads = Vec::new();
        let module_grads: Vec<Matrix> = match &self.combine {
            Combine::Sum => {
                let mut g = grad_out.clone();
                g.scale(self.scale());
                vec![g; k]
            }
            Combine::Concat { head } => {
                let h = cache.concat.as_ref().expect("concat cache");
                head_grads = h.t_matmul(grad_out)?.into_data();
                let mut db = vec![0.0; head.b.len()];
                for r in 0..n {
                    for (d, g) in db.iter_mut().zip(grad_out.row(r)) {
                        *d += g;
                    }
                }
                head_grads.extend(db);
                let dh = grad_out.matmul_t(&head.w)?;
                (0..k).map(|j| dh.columns(j * body_out, (j + 1) * body_out)).collect()
            }
        };

        let mut proj_grads = Vec::with_capacity(k);
        let mut body_grads: Vec<Vec<f64>> = self.bodies.iter().map(|b| vec![0.0; b.num_params()]).collect();
        for j in 0..k {
            let bi = if self.shared { 0 } else { j };
            let (gp, dz) = self.bodies[bi].backward(&cache.bodies[j], &module_grads[j])?;
            for (a, g) in body_grads[bi].iter_mut().zip(&gp) {
                *a += g;
            }
            let pg = if self.train_projections {
                self.projections[j].grad(&cache.input, &cache.z[j], &dz)?
            } else {
                vec![0.0; self.projections[j].values().len()]
            };
            proj_grads.push(pg);
        }
        let mut out = proj_grads.concat();
        for g in body_grads {
            out.extend(g);
        }
        out.extend(head_grads);
        Ok(out)
    }

    pub fn update_running_stats(&mut self, cache: &ModularCache) {
        for j in 0..self.modules() {
            let bi = if self.shared { 0 } else { j };
            self.bodies[bi].update_running_stats(&cache.bodies[j]);
        }
    }
}
