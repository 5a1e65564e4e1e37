use serde::{Deserialize, Serialize};

use super::{modular_losses, monolithic_losses_real, FEvaluator, ModularConfig, SpectrumSpec};
use crate::error::{Error, Result};

/// A family of theoretical test-loss curves indexed by the sample count `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LossCurve {
    Monolithic {
        spectrum: SpectrumSpec,
        p: f64,
        d: u64,
    },
    Modular {
        spectrum: SpectrumSpec,
        p: u64,
        d: u64,
        m: u64,
        b: u64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum SampleComplexity {
    Reached { n: u64 },
    /// `eps` is at or below the large-`n` limit of the curve.
    Unreachable { floor: f64 },
}

impl LossCurve {
    fn p(&self) -> f64 {
        match *self {
            LossCurve::Monolithic { p, .. } => p,
            LossCurve::Modular { p, .. } => p as f64,
        }
    }

    fn d(&self) -> u64 {
        match *self {
            LossCurve::Monolithic { d, .. } | LossCurve::Modular { d, .. } => d,
        }
    }

    fn spectrum(&self) -> &SpectrumSpec {
        match self {
            LossCurve::Monolithic { spectrum, .. } | LossCurve::Modular { spectrum, .. } => spectrum,
        }
    }

    pub fn test_loss(&self, n: u64, f: &FEvaluator) -> Result<f64> {
        match *self {
            LossCurve::Monolithic { spectrum, p, d } => {
                Ok(monolithic_losses_real(&spectrum, n as f64, p, d as f64, f)?.test)
            }
            LossCurve::Modular {
                spectrum,
                p,
                d,
                m,
                b,
            } => {
                let cfg = ModularConfig {
                    spectrum,
                    n,
                    p,
                    d,
                    m,
                    b,
                };
                Ok(modular_losses(&cfg, f)?.test)
            }
        }
    }

    /// Limit of the test loss as `n → ∞`: `d·Tr(Λ₂)`.
    pub fn floor(&self) -> f64 {
        self.d() as f64 * self.spectrum().trace_tail(self.p())
    }

    /// First `n` with `dn ≥ p + 2`. From there on the curve is given in
    /// closed form and decreases strictly in `n`.
    pub fn monotone_start(&self) -> u64 {
        (((self.p() + 2.0) / self.d() as f64).ceil() as u64).max(1)
    }
}

/// Smallest `n` in the decreasing tail of `curve` whose test loss is at most
/// `eps`. Sample counts left of the interpolation spike are not considered,
/// so the answer is `1` only when the tail itself starts at `n = 1`.
pub fn invert_sample_complexity(
    curve: &LossCurve,
    eps: f64,
    f: &FEvaluator,
) -> Result<SampleComplexity> {
    if !eps.is_finite() {
        return Err(Error::NonFinite("target loss".into()));
    }
    let floor = curve.floor();
    if eps <= floor {
        return Ok(SampleComplexity::Unreachable { floor });
    }
    let start = curve.monotone_start();
    if curve.test_loss(start, f)? <= eps {
        return Ok(SampleComplexity::Reached { n: start });
    }
    let (mut lo, mut hi) = (start, start);
    while curve.test_loss(hi, f)? > eps {
        lo = hi;
        hi = match hi.checked_mul(2) {
            Some(h) if h < 1 << 62 => h,
            _ => return Ok(SampleComplexity::Unreachable { floor }),
        };
    }
    // loss(lo) > eps >= loss(hi)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if curve.test_loss(mid, f)? <= eps {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SampleComplexity::Reached { n: hi })
}
