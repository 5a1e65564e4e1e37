use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::compensated_sum;

/// Power-law feature covariance `λ_i = c[i^{-s} - (i+1)^{-s}]` with
/// `s = Ω^{-dim}`. The eigenvalues telescope to a total trace of `c`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumSpec {
    pub c: f64,
    pub omega: f64,
    pub dim: u32,
}

impl SpectrumSpec {
    pub fn new(c: f64, omega: f64, dim: u32) -> Result<Self> {
        let spec = SpectrumSpec { c, omega, dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::Precondition(format!("spectrum c must be > 0, got {}", self.c)));
        }
        if !(self.omega.is_finite() && self.omega > 1.0) {
            return Err(Error::Precondition(format!(
                "spectrum omega must be > 1, got {}",
                self.omega
            )));
        }
        Ok(())
    }

    /// Decay exponent `s = Ω^{-dim}`.
    pub fn exponent(&self) -> f64 {
        self.omega.powf(-(self.dim as f64))
    }

    /// The i-th eigenvalue, 1-based.
    pub fn lambda(&self, i: u64) -> Result<f64> {
        if i == 0 {
            return Err(Error::Precondition("eigenvalue index starts at 1".into()));
        }
        Ok(self.lambda_unchecked(i as f64))
    }

    fn lambda_unchecked(&self, i: f64) -> f64 {
        let s = self.exponent();
        // i^{-s}(1 - (1 + 1/i)^{-s}) avoids cancellation for large i
        self.c * i.powf(-s) * -(-s * (1.0 / i).ln_1p()).exp_m1()
    }

    /// First `count` eigenvalues.
    pub fn lambdas(&self, count: usize) -> Vec<f64> {
        (1..=count).map(|i| self.lambda_unchecked(i as f64)).collect()
    }

    /// `Σ_{i>p} λ_i = c(p+1)^{-s}`. Accepts a real `p` so that effective
    /// parameter counts `α·p′` can be used directly.
    pub fn trace_tail(&self, p: f64) -> f64 {
        self.c * (p + 1.0).powf(-self.exponent())
    }

    /// `Σ_{i≤p} λ_i`.
    pub fn trace_head(&self, p: f64) -> f64 {
        self.c - self.trace_tail(p)
    }

    /// `(Σλ)² / Σλ²`. The sum of squares is accumulated term by term and
    /// the remainder is bracketed with integral bounds; summation stops once
    /// the bracket is narrower than `1e-9` of the running total.
    pub fn effective_dim(&self) -> f64 {
        let s = self.exponent();
        let cs2 = (self.c * s).powi(2);
        let q = 1.0 + 2.0 * s;
        let mut acc = 0.0;
        let mut comp = 0.0;
        let mut n: u64 = 0;
        let mut chunk: u64 = 256;
        loop {
            for i in n + 1..=n + chunk {
                let l = self.lambda_unchecked(i as f64);
                // Neumaier compensation
                let x = l * l;
                let t = acc + x;
                if acc.abs() >= x.abs() {
                    comp += (acc - t) + x;
                } else {
                    comp += (x - t) + acc;
                }
                acc = t;
            }
            n += chunk;
            // s·c·(i+1)^{-1-s} ≤ λ_i ≤ s·c·i^{-1-s}
            let nf = n as f64;
            let upper = cs2 * nf.powf(-q) / q;
            let lower = cs2 * (nf + 2.0).powf(-q) / q;
            let total = acc + comp;
            if upper - lower < 1e-9 * total || n > 1 << 32 {
                let sum_sq = total + 0.5 * (upper + lower);
                return self.c * self.c / sum_sq;
            }
            chunk = chunk.saturating_mul(2);
        }
    }
}

/// `(Σv)² / Σv²` for an explicit list of eigenvalues.
pub fn effective_dim_of(values: &[f64]) -> Result<f64> {
    let sum_sq = compensated_sum(values.iter().map(|v| v * v));
    if values.is_empty() || sum_sq <= 0.0 {
        return Err(Error::Precondition("spectrum must contain a nonzero entry".into()));
    }
    let sum = compensated_sum(values.iter().copied());
    Ok(sum * sum / sum_sq)
}
