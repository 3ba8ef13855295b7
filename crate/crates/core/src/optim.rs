//! Adam with decoupled weight decay, and the parameter EMA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates plus the update count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam step followed by `theta *= 1 - weight_decay`.
pub fn adamw_step(
    params: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if grad.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} params, {} gradients, {} moments",
            params.len(),
            grad.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let decay = 1.0 - weight_decay;
    for i in 0..params.len() {
        let g = grad[i];
        let m = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        let v = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        let update = (m / c1) / ((v / c2).sqrt() + ADAM_EPS);
        params[i] = (params[i] - learning_rate * update) * decay;
    }
    Ok(())
}

/// `shadow = decay * shadow + (1 - decay) * params`, elementwise.
pub fn ema_update(params: &[f64], shadow: &mut [f64], decay: f64) -> Result<()> {
    if params.len() != shadow.len() {
        return Err(Error::Shape(format!(
            "{} params but {} shadow values",
            params.len(),
            shadow.len()
        )));
    }
    if !(0.0..=1.0).contains(&decay) {
        return Err(Error::validation("ema_decay", "must lie in [0, 1]"));
    }
    let rest = 1.0 - decay;
    for (s, &p) in shadow.iter_mut().zip(params) {
        *s = decay * *s + rest * p;
    }
    Ok(())
}
