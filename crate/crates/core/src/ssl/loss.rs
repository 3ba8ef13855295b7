use crate::error::{Error, Result};

use super::prob::Probs;

/// Predictions are clamped to at least this value before taking logs.
pub const LOG_EPS: f64 = 1e-12;

fn check_aligned(predicted: &Probs, targets: &Probs) -> Result<()> {
    if predicted.len() != targets.len() || predicted.num_classes() != targets.num_classes() {
        return Err(Error::Shape(format!(
            "predictions {}x{} vs targets {}x{}",
            predicted.len(),
            predicted.num_classes(),
            targets.len(),
            targets.num_classes()
        )));
    }
    Ok(())
}

/// Cross-entropy against soft targets, `-sum_c y_c ln max(p_c, eps)`.
/// Returns per-sample losses and their mean (0 for an empty batch).
pub fn supervised_loss(predicted: &Probs, targets: &Probs) -> Result<(Vec<f64>, f64)> {
    check_aligned(predicted, targets)?;
    let per_sample: Vec<f64> = predicted
        .rows()
        .zip(targets.rows())
        .map(|(p, y)| {
            -p.iter()
                .zip(y)
                .map(|(&p, &y)| y * p.max(LOG_EPS).ln())
                .sum::<f64>()
        })
        .collect();
    let mean = if per_sample.is_empty() {
        0.0
    } else {
        per_sample.iter().sum::<f64>() / per_sample.len() as f64
    };
    Ok((per_sample, mean))
}

/// Squared error averaged over classes, `(1/K) sum_c (p_c - q_c)^2`.
pub fn unsupervised_loss(predicted: &Probs, targets: &Probs) -> Result<Vec<f64>> {
    check_aligned(predicted, targets)?;
    let k = predicted.num_classes() as f64;
    Ok(predicted
        .rows()
        .zip(targets.rows())
        .map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / k)
        .collect())
}

/// `L = sup + lambda * unsup`.
pub fn total_loss(sup_mean: f64, unsup_mean: f64, lambda: f64) -> Result<f64> {
    let total = sup_mean + lambda * unsup_mean;
    if !total.is_finite() {
        return Err(Error::InvalidDistribution(format!(
            "non-finite loss: sup={sup_mean} unsup={unsup_mean} lambda={lambda}"
        )));
    }
    Ok(total)
}

/// Consistency weight at `step`: a linear ramp from 0 to `lambda_max`
/// over `rampup_steps` (no ramp when `rampup_steps` is 0).
pub fn lambda_at(lambda_max: f64, step: u64, rampup_steps: u64) -> f64 {
    if rampup_steps == 0 {
        return lambda_max;
    }
    lambda_max * (step as f64 / rampup_steps as f64).min(1.0)
}

/// Gradient of `sum_i w_i CE_i` with respect to the predicted probabilities.
pub fn cross_entropy_grad(predicted: &Probs, targets: &Probs, weights: &[f64]) -> Vec<f64> {
    let k = predicted.num_classes();
    let mut grad = vec![0.0; predicted.data().len()];
    for (i, (p, y)) in predicted.rows().zip(targets.rows()).enumerate() {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        for c in 0..k {
            if p[c] > LOG_EPS {
                grad[i * k + c] = -w * y[c] / p[c];
            }
        }
    }
    grad
}

/// Gradient of `sum_i w_i MSE_i` with respect to the predicted probabilities.
pub fn mse_grad(predicted: &Probs, targets: &Probs, weights: &[f64]) -> Vec<f64> {
    let k = predicted.num_classes();
    let scale = 2.0 / k as f64;
    let mut grad = vec![0.0; predicted.data().len()];
    for (i, (p, q)) in predicted.rows().zip(targets.rows()).enumerate() {
        let w = weights[i] * scale;
        for c in 0..k {
            grad[i * k + c] = w * (p[c] - q[c]);
        }
    }
    grad
}
