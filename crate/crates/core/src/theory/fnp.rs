use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numerics::{pinv_frobenius_sq, sample_gaussian_matrix, RngStream};

/// Number of groups in the median-of-means estimator.
pub const MOM_GROUPS: usize = 20;

/// Monte Carlo settings for the near-square regime of `F(n, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub trials: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            trials: 10_000,
            seed: 0,
        }
    }
}

/// `min(n,p) / (|n-p| - 1)`, valid when `|n - p| ≥ 2`. Accepts real
/// arguments so effective parameter counts need not be integers.
pub fn f_np_closed(n: f64, p: f64) -> Option<f64> {
    let gap = (n - p).abs();
    (gap >= 2.0).then(|| n.min(p) / (gap - 1.0))
}

/// Median-of-means estimate of `E‖R†‖_F²` for an `n×p` standard Gaussian
/// `R`. Trial `t` draws from substream `t` of `rng`, so the result does not
/// depend on how trials are scheduled across threads.
pub fn f_np_monte_carlo(n: usize, p: usize, trials: usize, rng: &RngStream) -> Result<f64> {
    if n == 0 || p == 0 || trials == 0 {
        return Ok(0.0);
    }
    let values = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.substream(t as u64);
            let m = sample_gaussian_matrix(&mut r, n, p, 0.0, 1.0);
            pinv_frobenius_sq(&m)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(median_of_means(&values, MOM_GROUPS))
}

/// Splits `values` into `groups` contiguous blocks and returns the median of
/// the block means. Falls back to the plain median when there are fewer
/// values than groups.
pub fn median_of_means(values: &[f64], groups: usize) -> f64 {
    let groups = groups.clamp(1, values.len().max(1));
    let per = values.len() / groups;
    let mut means: Vec<f64> = (0..groups)
        .map(|g| {
            let block = &values[g * per..(g + 1) * per];
            block.iter().sum::<f64>() / per as f64
        })
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let k = means.len();
    if k % 2 == 1 {
        means[k / 2]
    } else {
        0.5 * (means[k / 2 - 1] + means[k / 2])
    }
}

/// Evaluates `F(n, p)`: closed form when `|n - p| ≥ 2`, otherwise a cached
/// Monte Carlo estimate at the nearest integer arguments. `F(0, p)` and
/// `F(n, 0)` are defined as 0 (the pseudoinverse of an empty matrix).
#[derive(Debug, Default)]
pub struct FEvaluator {
    mc: McConfig,
    cache: Mutex<HashMap<(u64, u64), f64>>,
}

impl FEvaluator {
    pub fn new(mc: McConfig) -> Self {
        FEvaluator {
            mc,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn config(&self) -> McConfig {
        self.mc
    }

    pub fn eval(&self, n: f64, p: f64) -> Result<f64> {
        if n <= 0.0 || p <= 0.0 {
            return Ok(0.0);
        }
        if let Some(v) = f_np_closed(n, p) {
            return Ok(v);
        }
        let key = (n.round().max(1.0) as u64, p.round().max(1.0) as u64);
        if let Some(&v) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(v);
        }
        let rng = RngStream::new(self.mc.seed, 0).keyed(&[key.0, key.1]);
        let v = f_np_monte_carlo(key.0 as usize, key.1 as usize, self.mc.trials, &rng)?;
        self.cache.lock().expect("cache poisoned").insert(key, v);
        Ok(v)
    }
}

/// `F(n, p)` for integer arguments with a fresh evaluator.
pub fn f_np(n: u64, p: u64, mc: McConfig) -> Result<f64> {
    FEvaluator::new(mc).eval(n as f64, p as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let mc = McConfig::default();
        assert!((f_np(10, 4, mc).unwrap() - 0.8).abs() < 1e-15);
        assert!((f_np(4, 10, mc).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(f_np(0, 5, mc).unwrap(), 0.0);
        assert_eq!(f_np(5, 0, mc).unwrap(), 0.0);
    }

    #[test]
    fn median_of_means_basics() {
        assert_eq!(median_of_means(&[1.0, 2.0, 3.0], 20), 2.0);
        let v: Vec<f64> = (0..40).map(|i| if i == 0 { 1e9 } else { 1.0 }).collect();
        assert_eq!(median_of_means(&v, 20), 1.0);
    }

    #[test]
    fn monte_carlo_matches_closed_form_away_from_diagonal() {
        let rng = RngStream::new(3, 0);
        let mc = f_np_monte_carlo(12, 4, 2000, &rng).unwrap();
        let exact = f_np_closed(12.0, 4.0).unwrap();
        assert!((mc - exact).abs() < 0.1 * exact, "{mc} vs {exact}");
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let rng = RngStream::new(9, 1);
        let a = f_np_monte_carlo(5, 5, 200, &rng).unwrap();
        let b = f_np_monte_carlo(5, 5, 200, &rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn evaluator_caches_near_diagonal() {
        let f = FEvaluator::new(McConfig { trials: 100, seed: 1 });
        let a = f.eval(6.0, 5.0).unwrap();
        let b = f.eval(6.2, 4.9).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0 && a.is_finite());
    }
}
