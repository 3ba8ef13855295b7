use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::{Error, Result};

use super::prob::ProbVector;

/// Draws `phi ~ Beta(alpha, alpha)` and returns `max(phi, 1 - phi)`, the
/// weight given to the first MixUp argument. Always in [0.5, 1].
pub fn mix_weight<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::validation("alpha", format!("{alpha}: {e}")))?;
    let phi: f64 = beta.sample(rng);
    Ok(phi.max(1.0 - phi))
}

/// `out = weight * a + (1 - weight) * b`, elementwise.
pub fn mix_pair(weight: f64, a: &[f64], b: &[f64], out: &mut [f64]) {
    debug_assert!(a.len() == b.len() && a.len() == out.len());
    let rest = 1.0 - weight;
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = weight * x + rest * y;
    }
}

/// Interpolates two labeled samples, weighting the result toward `a`.
pub fn mixup<R: Rng + ?Sized>(
    a: (&[f64], &ProbVector),
    b: (&[f64], &ProbVector),
    alpha: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ProbVector)> {
    if a.0.len() != b.0.len() {
        return Err(Error::Shape(format!(
            "cannot mix inputs of {} and {} values",
            a.0.len(),
            b.0.len()
        )));
    }
    if a.1.len() != b.1.len() {
        return Err(Error::Shape(format!(
            "cannot mix targets over {} and {} classes",
            a.1.len(),
            b.1.len()
        )));
    }
    let weight = mix_weight(alpha, rng)?;
    let mut x = vec![0.0; a.0.len()];
    mix_pair(weight, a.0, b.0, &mut x);
    let mut y = vec![0.0; a.1.len()];
    mix_pair(weight, a.1.values(), b.1.values(), &mut y);
    Ok((x, ProbVector::new(y)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};

    #[test]
    fn mixing_equal_points_is_a_fixed_point() {
        let x = [0.25, -0.5, 1.0];
        let y = ProbVector::new(vec![0.2, 0.8]).unwrap();
        let mut rng = RngStream::new(0, StreamId::Mixup).rng();
        for _ in 0..100 {
            let (x3, y3) = mixup((&x, &y), (&x, &y), 0.75, &mut rng).unwrap();
            for (a, b) in x3.iter().zip(&x) {
                assert!((a - b).abs() < 1e-15);
            }
            for (a, b) in y3.values().iter().zip(y.values()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fixed_weight_hand_evaluation() {
        // phi = 0.3 gives phi' = 0.7.
        let phi: f64 = 0.3;
        let weight = phi.max(1.0 - phi);
        let mut out = [0.0; 2];
        mix_pair(weight, &[1.0, 0.0], &[0.0, 1.0], &mut out);
        assert!((out[0] - 0.7).abs() < 1e-15);
        assert!((out[1] - 0.3).abs() < 1e-15);
        mix_pair(weight, &[2.0, -1.0], &[4.0, 1.0], &mut out);
        assert!((out[0] - (0.7 * 2.0 + 0.3 * 4.0)).abs() < 1e-15);
        assert!((out[1] - (-0.7 + 0.3)).abs() < 1e-15);
    }

    #[test]
    fn weight_distribution_monte_carlo() {
        let mut means = Vec::new();
        for (i, alpha) in [0.25, 0.75, 1.0, 4.0, 16.0].into_iter().enumerate() {
            let mut rng = RngStream::new(9, StreamId::Mixup).derive(i as u64).rng();
            let draws: Vec<f64> = (0..10_000)
                .map(|_| mix_weight(alpha, &mut rng).unwrap())
                .collect();
            assert!(draws.iter().all(|&w| (0.5..=1.0).contains(&w)));
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            if alpha == 1.0 {
                // E[max(U, 1 - U)] = 3/4 for U uniform.
                assert!((mean - 0.75).abs() < 0.01, "mean {mean}");
            }
            means.push(mean);
        }
        assert!(means.windows(2).all(|w| w[0] > w[1]), "{means:?}");
    }

    #[test]
    fn errors() {
        let mut rng = RngStream::new(0, StreamId::Mixup).rng();
        let y = ProbVector::uniform(2);
        assert!(mixup((&[0.0, 1.0], &y), (&[0.0], &y), 0.75, &mut rng).is_err());
        assert!(mix_weight(0.0, &mut rng).is_err());
        assert!(mix_weight(-1.0, &mut rng).is_err());
    }
}
