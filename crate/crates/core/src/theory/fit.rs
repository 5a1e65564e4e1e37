use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{monolithic_losses_real, FEvaluator, LossPair, SpectrumSpec};
use crate::error::{Error, Result};

/// One observed (train, test) loss pair for a monolithic network with input
/// dimension `m`, `p_prime` trainable parameters and `n` training samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub m: u32,
    pub p_prime: f64,
    pub n: u64,
    #[serde(default = "one")]
    pub d: u64,
    pub train: f64,
    pub test: f64,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub c: f64,
    pub omega: f64,
    /// Effective parameter count is `alpha · p′`.
    pub alpha: f64,
    /// Mean squared error of `ln(1 + loss)` at the optimum.
    pub objective: f64,
}

const C_RANGE: (f64, f64) = (0.1, 5.0);
const OMEGA_RANGE: (f64, f64) = (1.05, 3.0);
const ALPHA_RANGE: (f64, f64) = (0.1, 2.0);
const GRID_POINTS: usize = 20;

/// Predicted losses for `record` under `(c, Ω, α)`.
pub fn predict(record: &FitRecord, c: f64, omega: f64, alpha: f64, f: &FEvaluator) -> Result<LossPair> {
    let spectrum = SpectrumSpec::new(c, omega, record.m)?;
    monolithic_losses_real(
        &spectrum,
        record.n as f64,
        alpha * record.p_prime,
        record.d as f64,
        f,
    )
}

fn objective(records: &[FitRecord], x: [f64; 3], f: &FEvaluator) -> Result<f64> {
    let mut total = 0.0;
    for r in records {
        let pred = predict(r, x[0], x[1], x[2], f)?;
        total += (pred.train.ln_1p() - r.train.ln_1p()).powi(2);
        total += (pred.test.ln_1p() - r.test.ln_1p()).powi(2);
    }
    Ok(total / records.len() as f64)
}

fn linspace((lo, hi): (f64, f64), k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Fits `(c, Ω, α)` by minimizing the mean squared error of `ln(1 + loss)`
/// over train and test losses: a 20-point-per-axis grid over
/// `c ∈ [0.1, 5]`, `Ω ∈ [1.05, 3]`, `α ∈ [0.1, 2]`, then coordinate descent
/// with step halving inside the same box. A single `α` is shared by all
/// records.
pub fn fit_theory_params(records: &[FitRecord], f: &FEvaluator) -> Result<FitResult> {
    let distinct: HashSet<(u32, u64, u64)> = records
        .iter()
        .map(|r| (r.m, r.p_prime.to_bits(), r.n))
        .collect();
    if distinct.len() < 3 {
        return Err(Error::Fit(format!(
            "need at least 3 records with distinct (m, p', n); got {}",
            distinct.len()
        )));
    }
    for (i, r) in records.iter().enumerate() {
        let ok = r.train.is_finite() && r.test.is_finite() && r.train >= 0.0 && r.test >= 0.0;
        if !ok || !(r.p_prime > 0.0) || r.d == 0 {
            return Err(Error::Fit(format!("record {i} is invalid: {r:?}")));
        }
    }

    let ranges = [C_RANGE, OMEGA_RANGE, ALPHA_RANGE];
    let axes: Vec<Vec<f64>> = ranges.iter().map(|&r| linspace(r, GRID_POINTS)).collect();
    let mut grid: Vec<[f64; 3]> = Vec::with_capacity(GRID_POINTS.pow(3));
    for &c in &axes[0] {
        for &o in &axes[1] {
            for &a in &axes[2] {
                grid.push([c, o, a]);
            }
        }
    }
    let scores = grid
        .par_iter()
        .map(|&x| objective(records, x, f))
        .collect::<Result<Vec<f64>>>()?;
    let (best_idx, mut best) = scores
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    let mut x = grid[best_idx];

    let mut step: Vec<f64> = ranges
        .iter()
        .map(|&(lo, hi)| (hi - lo) / (GRID_POINTS - 1) as f64)
        .collect();
    for _ in 0..500 {
        let mut improved = false;
        for k in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut y = x;
                y[k] = (x[k] + dir * step[k]).clamp(ranges[k].0, ranges[k].1);
                if y[k] == x[k] {
                    continue;
                }
                let s = objective(records, y, f)?;
                if s < best {
                    best = s;
                    x = y;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step.iter_mut().for_each(|s| *s *= 0.5);
            let tiny = step
                .iter()
                .zip(&ranges)
                .all(|(s, (lo, hi))| *s < 1e-9 * (hi - lo));
            if tiny {
                break;
            }
        }
    }
    Ok(FitResult {
        c: x[0],
        omega: x[1],
        alpha: x[2],
        objective: best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::McConfig;

    fn f() -> FEvaluator {
        FEvaluator::new(McConfig {
            trials: 200,
            seed: 0,
        })
    }

    fn synthetic(c: f64, omega: f64, alpha: f64, ev: &FEvaluator) -> Vec<FitRecord> {
        let mut out = Vec::new();
        for m in [1, 3, 5] {
            for p_prime in [97.0, 400.0] {
                for n in [20, 1000, 5000] {
                    let mut r = FitRecord {
                        m,
                        p_prime,
                        n,
                        d: 1,
                        train: 0.0,
                        test: 0.0,
                    };
                    let l = predict(&r, c, omega, alpha, ev).unwrap();
                    r.train = l.train;
                    r.test = l.test;
                    out.push(r);
                }
            }
        }
        out
    }

    #[test]
    fn recovers_generating_parameters() {
        let ev = f();
        let recs = synthetic(1.15, 1.57, 0.85, &ev);
        let fit = fit_theory_params(&recs, &ev).unwrap();
        assert!((fit.c - 1.15).abs() < 0.05 * 1.15, "{fit:?}");
        assert!((fit.omega - 1.57).abs() < 0.05 * 1.57, "{fit:?}");
        assert!((fit.alpha - 0.85).abs() < 0.05 * 0.85, "{fit:?}");
    }

    #[test]
    fn alpha_and_parameter_count_trade_off_exactly() {
        let ev = f();
        let r = FitRecord {
            m: 3,
            p_prime: 200.0,
            n: 50,
            d: 1,
            train: 0.0,
            test: 0.0,
        };
        let r2 = FitRecord { p_prime: 400.0, ..r };
        let a = predict(&r, 1.15, 1.57, 0.85, &ev).unwrap();
        let b = predict(&r2, 1.15, 1.57, 0.425, &ev).unwrap();
        assert!((a.test - b.test).abs() < 1e-12 && (a.train - b.train).abs() < 1e-12);
    }

    #[test]
    fn doubling_losses_doubles_c() {
        let ev = f();
        let recs = synthetic(1.15, 1.57, 0.85, &ev);
        let doubled: Vec<FitRecord> = recs
            .iter()
            .map(|r| FitRecord {
                train: 2.0 * r.train,
                test: 2.0 * r.test,
                ..*r
            })
            .collect();
        let a = fit_theory_params(&recs, &ev).unwrap();
        let b = fit_theory_params(&doubled, &ev).unwrap();
        assert!((b.c - 2.0 * a.c).abs() < 0.02 * b.c, "{a:?} {b:?}");
    }

    #[test]
    fn degenerate_records_rejected() {
        let r = FitRecord {
            m: 1,
            p_prime: 10.0,
            n: 5,
            d: 1,
            train: 0.1,
            test: 0.2,
        };
        assert!(matches!(fit_theory_params(&[r; 5], &f()), Err(Error::Fit(_))));
        assert!(matches!(fit_theory_params(&[], &f()), Err(Error::Fit(_))));
    }
}
