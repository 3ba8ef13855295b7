use crate::config::TsaSchedule;
use crate::error::{Error, Result};

use super::prob::Probs;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TsaState {
    pub step: u64,
    pub total_steps: u64,
    pub schedule: TsaSchedule,
    pub num_classes: usize,
}

/// Confidence above which labeled samples stop contributing to the
/// supervised loss. Starts near `1/K` and rises to 1:
///
/// * linear: `1/K + t (1 - 1/K)`
/// * log:    `1/K + (1 - exp(-5t)) (1 - 1/K)`
/// * exp:    `1/K + exp(5 (t - 1)) (1 - 1/K)`
///
/// with `t = step / total_steps`. The `none` schedule always returns 1.
/// The log schedule tops out at `1 - exp(-5)` of the way, so the final value
/// is rounded up to exactly 1 at `step == total_steps`.
pub fn tsa_threshold(state: &TsaState) -> Result<f64> {
    if state.step > state.total_steps {
        return Err(Error::validation(
            "step",
            format!("{} exceeds total_steps {}", state.step, state.total_steps),
        ));
    }
    if state.num_classes < 2 {
        return Err(Error::validation("num_classes", "must be >= 2"));
    }
    let t = if state.total_steps == 0 {
        1.0
    } else {
        state.step as f64 / state.total_steps as f64
    };
    let floor = 1.0 / state.num_classes as f64;
    let alpha = match state.schedule {
        TsaSchedule::None => return Ok(1.0),
        TsaSchedule::Linear => t,
        TsaSchedule::Log => {
            if t >= 1.0 {
                1.0
            } else {
                1.0 - (-5.0 * t).exp()
            }
        }
        TsaSchedule::Exp => (5.0 * (t - 1.0)).exp(),
    };
    Ok((floor + alpha * (1.0 - floor)).min(1.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsaMasked {
    pub losses: Vec<f64>,
    pub kept: Vec<bool>,
    /// Mean over kept samples; 0 when none are kept.
    pub mean: f64,
}

impl TsaMasked {
    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }
}

/// Drops samples whose predicted probability for their label already
/// exceeds `threshold`.
pub fn tsa_mask(
    sup_losses: &[f64],
    predicted: &Probs,
    labels: &[usize],
    threshold: f64,
) -> Result<TsaMasked> {
    if sup_losses.len() != predicted.len() || labels.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} losses, {} predictions, {} labels",
            sup_losses.len(),
            predicted.len(),
            labels.len()
        )));
    }
    let k = predicted.num_classes();
    let mut losses = Vec::with_capacity(labels.len());
    let mut kept = Vec::with_capacity(labels.len());
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, (&loss, &label)) in sup_losses.iter().zip(labels).enumerate() {
        if label >= k {
            return Err(Error::validation(
                "labels",
                format!("label {label} out of range for {k} classes"),
            ));
        }
        let keep = predicted.row(i)[label] <= threshold;
        kept.push(keep);
        if keep {
            losses.push(loss);
            total += loss;
            count += 1;
        } else {
            losses.push(0.0);
        }
    }
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    Ok(TsaMasked { losses, kept, mean })
}
