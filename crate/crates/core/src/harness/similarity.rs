use crate::error::{Error, Result};
use crate::numerics::{dot, norm2};

/// Mean over learned directions of the largest absolute cosine similarity
/// with any target direction.
pub fn similarity_score(learned: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if learned.is_empty() || targets.is_empty() {
        return Err(Error::Precondition("similarity needs nonempty lists".into()));
    }
    let dim = targets[0].len();
    let norms = |vs: &[Vec<f64>]| -> Result<Vec<f64>> {
        vs.iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(Error::shape(dim, v.len()));
                }
                let n = norm2(v);
                if n == 0.0 || !n.is_finite() {
                    return Err(Error::Precondition("similarity of a zero or non-finite vector".into()));
                }
                Ok(n)
            })
            .collect()
    };
    let ln = norms(learned)?;
    let tn = norms(targets)?;
    let total: f64 = learned
        .iter()
        .zip(&ln)
        .map(|(u, nu)| {
            targets
                .iter()
                .zip(&tn)
                .map(|(t, nt)| (dot(u, t) / (nu * nt)).abs().min(1.0))
                .fold(0.0, f64::max)
        })
        .sum();
    Ok(total / learned.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{sample_unit_sphere, RngStream};

    #[test]
    fn identical_sets_score_one() {
        let mut rng = RngStream::new(0, 0);
        let t: Vec<Vec<f64>> = (0..4).map(|_| sample_unit_sphere(&mut rng, 6).unwrap()).collect();
        let mut l: Vec<Vec<f64>> = t.iter().rev().cloned().collect();
        l[0].iter_mut().for_each(|v| *v *= -3.0);
        assert!((similarity_score(&l, &t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_sets_score_zero() {
        let l = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 2.0, 0.0, 0.0]];
        let t = vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, -1.0]];
        assert_eq!(similarity_score(&l, &t).unwrap(), 0.0);
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(similarity_score(&[vec![0.0, 0.0]], &[vec![1.0, 0.0]]).is_err());
        assert!(similarity_score(&[], &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn random_baseline_matches_monte_carlo() {
        // Expected max |cos| between a random direction and 10 random
        // targets in R^10, against the score averaged over many draws.
        let mut rng = RngStream::new(1, 0);
        let targets: Vec<Vec<f64>> = (0..10).map(|_| sample_unit_sphere(&mut rng, 10).unwrap()).collect();
        let draws = 10_000;
        let samples: Vec<f64> = (0..draws)
            .map(|_| similarity_score(&[sample_unit_sphere(&mut rng, 10).unwrap()], &targets).unwrap())
            .collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let sd = (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        let learned: Vec<Vec<f64>> = (0..2000).map(|_| sample_unit_sphere(&mut rng, 10).unwrap()).collect();
        let score = similarity_score(&learned, &targets).unwrap();
        assert!((score - mean).abs() < 4.0 * sd / (2000f64).sqrt(), "{score} vs {mean}");
        assert!(mean > 0.4 && mean < 0.8);
    }
}
