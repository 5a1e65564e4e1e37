//! Deterministic sampling and the dense linear algebra every other module
//! builds on.
//!
//! Pseudoinverses go through an SVD with a relative singular-value cutoff;
//! symmetric positive-definite solves go through Cholesky.

mod matrix;
mod rng;

pub use matrix::{axpy, compensated_sum, dot, norm2, Matrix};
pub use rng::RngStream;

use nalgebra::{Cholesky, DMatrix, DVector, SVD};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative singular-value cutoff used when no other tolerance is given.
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

pub fn standard_normal(rng: &mut RngStream) -> f64 {
    rng.sample(StandardNormal)
}

/// Matrix with i.i.d. `N(mean, std²)` entries. `std = 0` gives a constant matrix.
pub fn sample_gaussian_matrix(
    rng: &mut RngStream,
    rows: usize,
    cols: usize,
    mean: f64,
    std: f64,
) -> Matrix {
    assert!(std >= 0.0, "standard deviation must be non-negative");
    let data = (0..rows * cols)
        .map(|_| mean + std * standard_normal(rng))
        .collect();
    Matrix::from_vec(rows, cols, data).expect("length matches by construction")
}

pub fn sample_gaussian_vec(rng: &mut RngStream, len: usize) -> Vec<f64> {
    (0..len).map(|_| standard_normal(rng)).collect()
}

/// Uniform draw from the unit sphere in `R^m`.
pub fn sample_unit_sphere(rng: &mut RngStream, m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::Dimension("unit sphere needs m >= 1".into()));
    }
    loop {
        let mut v = sample_gaussian_vec(rng, m);
        let n = norm2(&v);
        if n > 1e-300 {
            v.iter_mut().for_each(|x| *x /= n);
            return Ok(v);
        }
    }
}

/// Thin SVD pieces `(U, s, Vᵀ)` with singular values below `tol * s_max`
/// reported as zero.
struct Svd {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v_t: DMatrix<f64>,
}

fn svd(m: &Matrix, tol: f64) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix passed to pinv".into()));
    }
    let svd = SVD::new(m.to_nalgebra(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vt");
    let mut s = svd.singular_values;
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * s_max;
    for v in s.iter_mut() {
        if *v <= cutoff {
            *v = 0.0;
        }
    }
    Ok(Svd { u, s, v_t })
}

/// Moore–Penrose pseudoinverse. Singular values at or below `tol * σ_max`
/// are treated as zero.
pub fn pinv(m: &Matrix, tol: f64) -> Result<Matrix> {
    let Svd { u, s, v_t } = svd(m, tol)?;
    // M† = V Σ⁺ Uᵀ
    let mut v = v_t.transpose();
    for (j, &sj) in s.iter().enumerate() {
        let inv = if sj > 0.0 { 1.0 / sj } else { 0.0 };
        v.column_mut(j).scale_mut(inv);
    }
    Ok(Matrix::from_nalgebra(&(v * u.transpose())))
}

/// Minimum-norm least-squares solution `A† b`.
pub fn min_norm_lstsq(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    min_norm_lstsq_tol(a, b, DEFAULT_PINV_TOL)
}

pub fn min_norm_lstsq_tol(a: &Matrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    if a.rows() != b.len() {
        return Err(Error::shape(
            format!("right-hand side of length {}", a.rows()),
            b.len(),
        ));
    }
    let Svd { u, s, v_t } = svd(a, tol)?;
    let rhs = DVector::from_column_slice(b);
    let mut coef = u.transpose() * rhs;
    for (c, &sj) in coef.iter_mut().zip(s.iter()) {
        *c = if sj > 0.0 { *c / sj } else { 0.0 };
    }
    Ok((v_t.transpose() * coef).iter().copied().collect())
}

/// Squared Frobenius norm of `M†`, i.e. `Σ 1/σ_i²` over the nonzero
/// singular values. Uses the Cholesky factor of the smaller Gram matrix and
/// falls back to an SVD when that is numerically singular.
pub fn pinv_frobenius_sq(m: &Matrix) -> Result<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(0.0);
    }
    let gram = if r >= c { m.t_matmul(m)? } else { m.matmul_t(m)? };
    let k = gram.rows();
    if let Some(chol) = Cholesky::new(gram.to_nalgebra()) {
        // Tr(G⁻¹) = ‖L⁻¹‖_F²
        let l = chol.l();
        let mut inv_l = DMatrix::<f64>::identity(k, k);
        if l.solve_lower_triangular_mut(&mut inv_l) {
            let v = inv_l.iter().map(|x| x * x).sum::<f64>();
            if v.is_finite() {
                return Ok(v);
            }
        }
    }
    let Svd { s, .. } = svd(m, DEFAULT_PINV_TOL)?;
    Ok(s.iter().filter(|&&x| x > 0.0).map(|x| 1.0 / (x * x)).sum())
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub struct SpdFactor {
    chol: Cholesky<f64, nalgebra::Dyn>,
}

impl SpdFactor {
    /// Returns `None` when the matrix is not numerically positive definite.
    pub fn new(m: &Matrix) -> Option<SpdFactor> {
        Cholesky::new(m.to_nalgebra()).map(|chol| SpdFactor { chol })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let x = self.chol.solve(&DVector::from_column_slice(b));
        x.iter().copied().collect()
    }

    /// Solves for every column of `b` at once.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        Matrix::from_nalgebra(&self.chol.solve(&b.to_nalgebra()))
    }
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(m: &Matrix) -> Vec<f64> {
    let mut ev: Vec<f64> = m
        .to_nalgebra()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RngStream {
        RngStream::new(42, 0)
    }

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().max_abs()
    }

    #[test]
    fn zero_variance_gaussian_is_constant() {
        let m = sample_gaussian_matrix(&mut rng(), 2, 2, 0.0, 0.0);
        assert_eq!(m, Matrix::zeros(2, 2));
    }

    #[test]
    fn gaussian_moments_within_standard_error_bounds() {
        let m = sample_gaussian_matrix(&mut rng(), 1000, 1, 0.0, 1.0);
        let n = m.data().len() as f64;
        let mean = m.data().iter().sum::<f64>() / n;
        let var = m.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.1, "mean {mean}");
        assert!((var - 1.0).abs() < 0.15, "var {var}");
    }

    #[test]
    fn gaussian_sampling_is_deterministic() {
        let a = sample_gaussian_matrix(&mut rng(), 3, 4, 1.0, 2.0);
        let b = sample_gaussian_matrix(&mut rng(), 3, 4, 1.0, 2.0);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_sphere_draws() {
        let mut r = rng();
        for m in 1..8 {
            let u = sample_unit_sphere(&mut r, m).unwrap();
            assert!((norm2(&u) - 1.0).abs() < 1e-12);
        }
        let u = sample_unit_sphere(&mut r, 1).unwrap();
        assert!(u[0] == 1.0 || u[0] == -1.0);
        assert!(matches!(sample_unit_sphere(&mut r, 0), Err(Error::Dimension(_))));
    }

    #[test]
    fn unit_sphere_mean_is_centered() {
        let mut r = rng();
        let mut acc = [0.0; 5];
        let draws = 10_000;
        for _ in 0..draws {
            let u = sample_unit_sphere(&mut r, 5).unwrap();
            axpy(1.0, &u, &mut acc);
        }
        for a in acc {
            // each coordinate has variance 1/5; 3 sigma of the mean is ~0.013
            assert!((a / draws as f64).abs() < 0.03);
        }
    }

    #[test]
    fn pinv_of_identity_and_diagonal() {
        let i3 = Matrix::identity(3);
        assert!(max_abs_diff(&pinv(&i3, DEFAULT_PINV_TOL).unwrap(), &i3) < 1e-14);
        let d = Matrix::from_diag(&[2.0, 0.0]);
        let expect = Matrix::from_diag(&[0.5, 0.0]);
        assert!(max_abs_diff(&pinv(&d, DEFAULT_PINV_TOL).unwrap(), &expect) < 1e-14);
    }

    fn check_penrose(m: &Matrix) {
        let p = pinv(m, DEFAULT_PINV_TOL).unwrap();
        let scale = m.frobenius_norm().max(1.0);
        let mpm = m.matmul(&p).unwrap().matmul(m).unwrap();
        assert!(max_abs_diff(&mpm, m) < 1e-9 * scale);
        let pmp = p.matmul(m).unwrap().matmul(&p).unwrap();
        assert!(max_abs_diff(&pmp, &p) < 1e-9 * p.frobenius_norm().max(1.0));
        let mp = m.matmul(&p).unwrap();
        assert!(max_abs_diff(&mp, &mp.transpose()) < 1e-9);
        let pm = p.matmul(m).unwrap();
        assert!(max_abs_diff(&pm, &pm.transpose()) < 1e-9);
    }

    #[test]
    fn penrose_conditions_on_random_shapes() {
        let mut r = rng();
        for (rows, cols) in [(5, 3), (4, 4), (4, 8), (8, 4)] {
            let m = sample_gaussian_matrix(&mut r, rows, cols, 0.0, 1.0);
            check_penrose(&m);
        }
    }

    #[test]
    fn pinv_rejects_non_finite() {
        let m = Matrix::from_vec(1, 2, vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(pinv(&m, 1e-10), Err(Error::NonFinite(_))));
    }

    #[test]
    fn lstsq_simple_cases() {
        let x = min_norm_lstsq(&Matrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        for (a, b) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        let a = Matrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap();
        let x = min_norm_lstsq(&a, &[2.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
        assert!(min_norm_lstsq(&a, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn lstsq_wide_system_interpolates_with_minimum_norm() {
        let mut r = rng();
        let a = sample_gaussian_matrix(&mut r, 4, 8, 0.0, 1.0);
        let b = sample_gaussian_vec(&mut r, 4);
        let x = min_norm_lstsq(&a, &b).unwrap();
        let resid: f64 = a
            .matvec(&x)
            .unwrap()
            .iter()
            .zip(&b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(resid < 1e-9);
        let via_pinv = pinv(&a, DEFAULT_PINV_TOL).unwrap().matvec(&b).unwrap();
        for (p, q) in x.iter().zip(&via_pinv) {
            assert!((p - q).abs() < 1e-9);
        }
        // adding any null-space direction only increases the norm
        let p = pinv(&a, DEFAULT_PINV_TOL).unwrap();
        let proj = p.matmul(&a).unwrap();
        for _ in 0..10 {
            let z = sample_gaussian_vec(&mut r, 8);
            let pz = proj.matvec(&z).unwrap();
            let null: Vec<f64> = z.iter().zip(&pz).map(|(a, b)| a - b).collect();
            let other: Vec<f64> = x.iter().zip(&null).map(|(a, b)| a + b).collect();
            assert!(norm2(&other) >= norm2(&x) - 1e-12);
        }
    }

    #[test]
    fn pinv_frobenius_matches_svd_route() {
        let mut r = rng();
        for (rows, cols) in [(6, 3), (3, 6), (5, 5)] {
            let m = sample_gaussian_matrix(&mut r, rows, cols, 0.0, 1.0);
            let direct = pinv(&m, DEFAULT_PINV_TOL).unwrap().frobenius_norm().powi(2);
            let fast = pinv_frobenius_sq(&m).unwrap();
            assert!((direct - fast).abs() < 1e-9 * direct);
        }
    }
}
