use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, sample_gaussian_matrix, sample_unit_sphere, standard_normal, Matrix, RngStream};

/// Sum-of-sines regression target built from `k` modules, each reading the
/// input through one unit direction `u_i`:
/// `y(x) = (1/√k) Σ_i Σ_j a_ij sin(ω_ij u_iᵀx + φ_ij)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTask {
    pub k: usize,
    pub m: usize,
    pub tau: usize,
    pub a: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub phase: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionDataset {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl RegressionDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> RegressionDataset {
        RegressionDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// How each module reads the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SineVariant {
    /// `u_iᵀx`
    Linear,
    /// `‖u_i − x‖₂`
    Distance,
}

/// Samples `a ~ N(0,1)`, `ω ~ N(0, 4π²)`, `φ ~ U(−π, π)` and module
/// directions uniformly from the unit sphere.
pub fn gen_sine_task(rng: &mut RngStream, k: usize, m: usize, tau: usize) -> Result<SineTask> {
    if k == 0 || m == 0 || tau == 0 {
        return Err(Error::Dimension(format!(
            "sine task needs k, m, tau >= 1 (got {k}, {m}, {tau})"
        )));
    }
    let mut a = Vec::with_capacity(k);
    let mut omega = Vec::with_capacity(k);
    let mut phase = Vec::with_capacity(k);
    let mut u = Vec::with_capacity(k);
    for _ in 0..k {
        a.push((0..tau).map(|_| standard_normal(rng)).collect());
        omega.push((0..tau).map(|_| 2.0 * PI * standard_normal(rng)).collect());
        phase.push((0..tau).map(|_| rng.random_range(-PI..PI)).collect());
        u.push(sample_unit_sphere(rng, m)?);
    }
    Ok(SineTask {
        k,
        m,
        tau,
        a,
        omega,
        phase,
        u,
    })
}

impl SineTask {
    pub fn eval(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.eval_variant(x, SineVariant::Linear)
    }

    pub fn eval_nonlinear(&self, x: &Matrix) -> Result<Vec<f64>> {
        self.eval_variant(x, SineVariant::Distance)
    }

    pub fn eval_variant(&self, x: &Matrix, variant: SineVariant) -> Result<Vec<f64>> {
        if x.cols() != self.m {
            return Err(Error::shape(format!("{} input columns", self.m), x.cols()));
        }
        let scale = 1.0 / (self.k as f64).sqrt();
        let out = (0..x.rows())
            .map(|r| {
                let row = x.row(r);
                let mut acc = 0.0;
                for i in 0..self.k {
                    let z = match variant {
                        SineVariant::Linear => dot(&self.u[i], row),
                        SineVariant::Distance => distance(&self.u[i], row),
                    };
                    for j in 0..self.tau {
                        acc += self.a[i][j] * (self.omega[i][j] * z + self.phase[i][j]).sin();
                    }
                }
                scale * acc
            })
            .collect();
        Ok(out)
    }

    /// Draws `n` inputs from `N(0, I_m)` and labels them.
    pub fn sample(&self, rng: &mut RngStream, n: usize, variant: SineVariant) -> Result<RegressionDataset> {
        let x = sample_gaussian_matrix(rng, n, self.m, 0.0, 1.0);
        let y = self.eval_variant(&x, variant)?;
        Ok(RegressionDataset { x, y })
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(seed: u64, k: usize, m: usize, tau: usize) -> SineTask {
        gen_sine_task(&mut RngStream::new(seed, 0), k, m, tau).unwrap()
    }

    #[test]
    fn rejects_empty_dimensions() {
        let mut rng = RngStream::new(0, 0);
        assert!(gen_sine_task(&mut rng, 0, 3, 3).is_err());
        assert!(gen_sine_task(&mut rng, 3, 0, 3).is_err());
        assert!(gen_sine_task(&mut rng, 3, 3, 0).is_err());
    }

    #[test]
    fn directions_are_unit_and_phases_in_range() {
        let t = task(1, 6, 4, 3);
        for u in &t.u {
            assert!((crate::numerics::norm2(u) - 1.0).abs() < 1e-12);
        }
        assert!(t.phase.iter().flatten().all(|p| (-PI..=PI).contains(p)));
    }

    #[test]
    fn same_seed_same_task() {
        assert_eq!(task(5, 2, 3, 3), task(5, 2, 3, 3));
        assert_ne!(task(5, 2, 3, 3), task(6, 2, 3, 3));
    }

    #[test]
    fn frequency_spread_matches_two_pi() {
        let t = task(2, 1, 1, 10_000);
        let w = &t.omega[0];
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd - 2.0 * PI).abs() < 0.05 * 2.0 * PI, "{sd}");
    }

    #[test]
    fn hand_evaluated_point() {
        let t = SineTask {
            k: 1,
            m: 3,
            tau: 1,
            a: vec![vec![1.0]],
            omega: vec![vec![1.0]],
            phase: vec![vec![0.0]],
            u: vec![vec![1.0, 0.0, 0.0]],
        };
        let x = Matrix::from_rows(&[vec![PI / 2.0, 0.7, -3.0]]).unwrap();
        assert!((t.eval(&x).unwrap()[0] - 1.0).abs() < 1e-15);
        // at x = u the distance variant evaluates sin(φ) = 0
        let x = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(t.eval_nonlinear(&x).unwrap()[0], 0.0);
    }

    #[test]
    fn zero_amplitudes_give_zero_target() {
        let mut t = task(3, 3, 4, 3);
        t.a.iter_mut().flatten().for_each(|a| *a = 0.0);
        let d = t.sample(&mut RngStream::new(0, 1), 10, SineVariant::Linear).unwrap();
        assert!(d.y.iter().all(|&y| y == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = task(3, 3, 4, 3);
        assert!(matches!(t.eval(&Matrix::zeros(2, 3)), Err(Error::Shape { .. })));
    }
}
