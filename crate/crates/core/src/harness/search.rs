//! Binary search over base-2 exponents for the smallest training-set size
//! whose test loss reaches a target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    /// Starting exponent.
    pub c0: f64,
    /// Maximum number of probes.
    pub max_iters: usize,
    /// Stop once `r − l` falls below this.
    pub stop_gap: f64,
    /// Give up once the exponent reaches this cap.
    pub c_max: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c0: 12.0,
            max_iters: 18,
            stop_gap: 0.3,
            c_max: 22.0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.c0 >= 0.0 && self.c0 <= self.c_max) {
            errs.push(format!("c0 must lie in [0, c_max], got {}", self.c0));
        }
        if self.max_iters == 0 {
            errs.push("max_iters must be positive".into());
        }
        if !(self.stop_gap > 0.0) {
            errs.push(format!("stop_gap must be positive, got {}", self.stop_gap));
        }
        if !(self.c_max.is_finite() && self.c_max < 63.0) {
            errs.push(format!("c_max must be finite and below 63, got {}", self.c_max));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub c: f64,
    pub n: u64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// `2^c` rounded to the nearest integer.
    pub n: u64,
    pub c: f64,
    pub l: f64,
    /// `None` while no probe has met the target.
    pub r: Option<f64>,
    /// The exponent reached `c_max` without meeting the target.
    pub exceeded: bool,
    pub probes: Vec<Probe>,
    /// Set when the training function failed; the other fields hold the
    /// state at the time of failure.
    pub failure: Option<String>,
}

pub fn samples_for(c: f64) -> u64 {
    c.exp2().round().max(1.0) as u64
}

/// Exponent search: a probe whose loss exceeds `eps` raises the lower bound
/// and moves up (by 2 while unbounded, else to the midpoint with `r`);
/// otherwise the upper bound drops to `c` and `c` halves toward `l`.
pub fn binary_search_sample_complexity<F>(mut train_fn: F, eps: f64, cfg: &SearchConfig) -> Result<SearchResult>
where
    F: FnMut(u64) -> Result<f64>,
{
    cfg.validate()?;
    let mut l = 0.0;
    let mut r: Option<f64> = None;
    let mut c = cfg.c0;
    let mut probes = Vec::new();
    let mut exceeded = false;
    let mut failure = None;
    for _ in 0..cfg.max_iters {
        let n = samples_for(c);
        let e = match train_fn(n) {
            Ok(e) => e,
            Err(err) => {
                failure = Some(err.to_string());
                break;
            }
        };
        probes.push(Probe { c, n, loss: e });
        if e > eps || e.is_nan() {
            l = c;
            c = match r {
                None => c + 2.0,
                Some(r) => (c + r) / 2.0,
            };
        } else {
            r = Some(c);
            c = (l + c) / 2.0;
        }
        if c >= cfg.c_max {
            c = cfg.c_max;
            exceeded = true;
            break;
        }
        if matches!(r, Some(r) if r - l < cfg.stop_gap) {
            break;
        }
    }
    Ok(SearchResult {
        n: samples_for(c),
        c,
        l,
        r,
        exceeded,
        probes,
        failure,
    })
}
