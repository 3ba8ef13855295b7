//! One training step: batch preparation followed by the differentiable loss.
//!
//! Random draws for step `s` come from step-derived streams:
//! labeled sample `i` is augmented with `LabeledAug/s/i`, target generation
//! uses `TargetAug/s`, and `Mixup/s` first shuffles the union and then draws
//! one weight per labeled sample followed by one per unlabeled sample.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::augment;
use crate::config::Config;
use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::nn::Classifier;
use crate::optim::{adamw_step, ema_update};
use crate::rng::{RngStream, StreamId};
use crate::ssl::{
    cross_entropy_grad, generate_targets, lambda_at, mix_pair, mix_weight, mse_grad, ood_mask,
    supervised_loss, total_loss, tsa_mask, tsa_threshold, unsupervised_loss, Probs, TsaState,
};

use super::TrainState;

/// Raw labeled images `[B, H, W, C]` and their classes.
#[derive(Clone, Copy, Debug)]
pub struct LabeledBatch<'a> {
    pub images: &'a [f32],
    pub labels: &'a [usize],
}

/// Images `[U, H, W, C]` drawn from the extended unlabeled pool.
#[derive(Clone, Copy, Debug)]
pub struct UnlabeledBatch<'a> {
    pub images: &'a [f32],
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// Number of completed steps after this one.
    pub step: u64,
    pub sup_loss: f64,
    pub unsup_loss: f64,
    pub total_loss: f64,
    pub tsa_threshold: f64,
    pub ood_kept_fraction: f64,
    pub lambda_t: f64,
}

/// Everything the step loss needs besides the parameters. Targets and
/// confidences are constants with respect to the gradient.
#[derive(Clone, Debug)]
pub struct PreparedStep {
    /// Mixed labeled rows followed by mixed unlabeled rows.
    pub inputs: Vec<f64>,
    pub targets: Probs,
    pub num_labeled: usize,
    /// Classes of the labeled rows, used by the TSA mask.
    pub labels: Vec<usize>,
    /// Confidence of each unlabeled target before mixing.
    pub confidences: Vec<f64>,
    pub lambda: f64,
    pub tsa_threshold: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug)]
pub struct StepLoss {
    pub sup: f64,
    pub unsup: f64,
    pub total: f64,
    pub ood_kept_fraction: f64,
    pub grad: Vec<f64>,
}

fn to_f64(values: &[f32]) -> impl Iterator<Item = f64> + '_ {
    values.iter().map(|&v| f64::from(v))
}

/// Augments the labeled batch, guesses targets for the unlabeled batch with
/// the current parameters and mixes both halves against the shuffled union.
pub fn prepare_step<M: Classifier>(
    model: &M,
    params: &[f64],
    labeled: LabeledBatch<'_>,
    unlabeled: UnlabeledBatch<'_>,
    config: &Config,
    step: u64,
) -> Result<PreparedStep> {
    let shape = model.input_shape();
    let len = shape.len();
    let k = model.num_classes();
    let b = labeled.labels.len();
    if labeled.images.len() != b * len || !unlabeled.images.len().is_multiple_of(len) {
        return Err(Error::Shape(format!(
            "batches of {} and {} values do not hold whole {shape:?} images",
            labeled.images.len(),
            unlabeled.images.len()
        )));
    }
    let u = unlabeled.images.len() / len;

    let aug = RngStream::new(config.seed, StreamId::LabeledAug).derive(step);
    let mut x = Vec::with_capacity((b + u) * len);
    for (i, image) in labeled.images.chunks_exact(len).enumerate() {
        let mut rng = aug.derive(i as u64).rng();
        x.extend(to_f64(&augment(image, shape, &config.augment_policy, &mut rng)?));
    }
    let mut y = Probs::one_hot(k, labeled.labels).into_data();

    let guessed = generate_targets(
        |inputs| model.forward(params, inputs),
        unlabeled.images,
        shape,
        &config.augment_policy,
        config.temperature,
        &RngStream::new(config.seed, StreamId::TargetAug).derive(step),
    )?;
    let confidences = guessed.confidences();
    x.extend_from_slice(&guessed.inputs);
    y.extend_from_slice(guessed.targets.data());

    let (inputs, targets) = if config.mixup {
        let mut rng = RngStream::new(config.seed, StreamId::Mixup).derive(step).rng();
        let mut perm: Vec<usize> = (0..b + u).collect();
        perm.shuffle(&mut rng);
        let mut mixed_x = vec![0.0; x.len()];
        let mut mixed_y = vec![0.0; y.len()];
        for (i, &j) in perm.iter().enumerate() {
            let w = mix_weight(config.alpha, &mut rng)?;
            mix_pair(
                w,
                &x[i * len..(i + 1) * len],
                &x[j * len..(j + 1) * len],
                &mut mixed_x[i * len..(i + 1) * len],
            );
            mix_pair(
                w,
                &y[i * k..(i + 1) * k],
                &y[j * k..(j + 1) * k],
                &mut mixed_y[i * k..(i + 1) * k],
            );
        }
        (mixed_x, mixed_y)
    } else {
        (x, y)
    };

    let threshold = if config.tsa_enabled {
        tsa_threshold(&TsaState {
            step,
            total_steps: config.total_steps,
            schedule: config.tsa_schedule,
            num_classes: k,
        })?
    } else {
        1.0
    };
    Ok(PreparedStep {
        inputs,
        targets: Probs::new_unchecked(k, targets)?,
        num_labeled: b,
        labels: labeled.labels.to_vec(),
        confidences,
        lambda: lambda_at(config.lambda_max, step, config.lambda_rampup_steps),
        tsa_threshold: threshold,
        gamma: config.gamma,
    })
}

struct Split {
    sup_pred: Probs,
    sup_target: Probs,
    unsup_pred: Probs,
    unsup_target: Probs,
}

fn split_rows(pred: &Probs, prep: &PreparedStep) -> Result<Split> {
    let k = pred.num_classes();
    let cut = prep.num_labeled * k;
    Ok(Split {
        sup_pred: Probs::new_unchecked(k, pred.data()[..cut].to_vec())?,
        sup_target: Probs::new_unchecked(k, prep.targets.data()[..cut].to_vec())?,
        unsup_pred: Probs::new_unchecked(k, pred.data()[cut..].to_vec())?,
        unsup_target: Probs::new_unchecked(k, prep.targets.data()[cut..].to_vec())?,
    })
}

struct Terms {
    sup: f64,
    unsup: f64,
    total: f64,
    kept_fraction: f64,
    sup_weights: Vec<f64>,
    unsup_weights: Vec<f64>,
}

fn loss_terms(s: &Split, prep: &PreparedStep) -> Result<Terms> {
    let (ce, _) = supervised_loss(&s.sup_pred, &s.sup_target)?;
    let tsa = tsa_mask(&ce, &s.sup_pred, &prep.labels, prep.tsa_threshold)?;
    let kept = tsa.kept_count();
    let sup_weights = tsa
        .kept
        .iter()
        .map(|&k| if k { 1.0 / kept as f64 } else { 0.0 })
        .collect();

    let mse = unsupervised_loss(&s.unsup_pred, &s.unsup_target)?;
    let ood = ood_mask(&mse, &prep.confidences, prep.gamma)?;
    let n = mse.len();
    let unsup = if n == 0 {
        0.0
    } else {
        ood.masked_losses.iter().sum::<f64>() / n as f64
    };
    let unsup_weights = ood
        .kept
        .iter()
        .map(|&k| if k { prep.lambda / n as f64 } else { 0.0 })
        .collect();

    let total = total_loss(tsa.mean, unsup, prep.lambda)?;
    Ok(Terms {
        sup: tsa.mean,
        unsup,
        total,
        kept_fraction: ood.kept_fraction(),
        sup_weights,
        unsup_weights,
    })
}

/// Value of the step loss at `params` (no gradient).
pub fn step_objective<M: Classifier>(model: &M, params: &[f64], prep: &PreparedStep) -> Result<f64> {
    let pred = model.forward(params, &prep.inputs)?;
    Ok(loss_terms(&split_rows(&pred, prep)?, prep)?.total)
}

/// Step loss and its gradient with respect to `params`.
///
/// The supervised term is the TSA-masked cross-entropy averaged over kept
/// labeled rows; the consistency term is the OOD-masked squared error
/// averaged over all unlabeled rows.
pub fn step_loss<M: Classifier>(model: &M, params: &[f64], prep: &PreparedStep) -> Result<StepLoss> {
    let (pred, tape) = model.forward_train(params, &prep.inputs)?;
    let s = split_rows(&pred, prep)?;
    let t = loss_terms(&s, prep)?;
    let mut d_probs = cross_entropy_grad(&s.sup_pred, &s.sup_target, &t.sup_weights);
    d_probs.extend(mse_grad(&s.unsup_pred, &s.unsup_target, &t.unsup_weights));
    let grad = model.backward(params, &tape, &d_probs)?;
    Ok(StepLoss {
        sup: t.sup,
        unsup: t.unsup,
        total: t.total,
        ood_kept_fraction: t.kept_fraction,
        grad,
    })
}

fn check_finite(step: u64, loss: f64, grad: &[f64]) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::InvalidDistribution(format!(
            "loss {loss} at step {step}"
        )));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidDistribution(format!(
            "non-finite gradient at step {step}"
        )));
    }
    Ok(())
}

/// Runs one full step on `state`: prepare, loss and gradient, AdamW, EMA,
/// step counter.
pub fn train_step<M: Classifier>(
    model: &M,
    state: &mut TrainState,
    labeled: LabeledBatch<'_>,
    unlabeled: UnlabeledBatch<'_>,
    config: &Config,
) -> Result<StepMetrics> {
    let prep = prepare_step(model, &state.params, labeled, unlabeled, config, state.step)?;
    let loss = step_loss(model, &state.params, &prep)?;
    check_finite(state.step, loss.total, &loss.grad)?;
    apply_update(state, &loss.grad, config)?;
    Ok(StepMetrics {
        step: state.step,
        sup_loss: loss.sup,
        unsup_loss: loss.unsup,
        total_loss: loss.total,
        tsa_threshold: prep.tsa_threshold,
        ood_kept_fraction: loss.ood_kept_fraction,
        lambda_t: prep.lambda,
    })
}

pub(crate) fn apply_update(state: &mut TrainState, grad: &[f64], config: &Config) -> Result<()> {
    adamw_step(
        &mut state.params,
        grad,
        &mut state.adam,
        config.learning_rate,
        config.weight_decay,
    )?;
    ema_update(&state.params, &mut state.ema, config.ema_decay)?;
    state.step += 1;
    Ok(())
}

/// One step of plain supervised training: augment the labeled batch, take
/// the cross-entropy against its one-hot labels, update.
pub fn supervised_step<M: Classifier>(
    model: &M,
    state: &mut TrainState,
    labeled: LabeledBatch<'_>,
    config: &Config,
) -> Result<StepMetrics> {
    let shape: ImageShape = model.input_shape();
    let len = shape.len();
    let aug = RngStream::new(config.seed, StreamId::LabeledAug).derive(state.step);
    let mut x = Vec::with_capacity(labeled.images.len());
    for (i, image) in labeled.images.chunks_exact(len).enumerate() {
        let mut rng = aug.derive(i as u64).rng();
        x.extend(to_f64(&augment(image, shape, &config.augment_policy, &mut rng)?));
    }
    let targets = Probs::one_hot(model.num_classes(), labeled.labels);
    let (pred, tape) = model.forward_train(&state.params, &x)?;
    let (_, mean) = supervised_loss(&pred, &targets)?;
    let n = labeled.labels.len() as f64;
    let d_probs = cross_entropy_grad(&pred, &targets, &vec![1.0 / n; labeled.labels.len()]);
    let grad = model.backward(&state.params, &tape, &d_probs)?;
    check_finite(state.step, mean, &grad)?;
    apply_update(state, &grad, config)?;
    Ok(StepMetrics {
        step: state.step,
        sup_loss: mean,
        unsup_loss: 0.0,
        total_loss: mean,
        tsa_threshold: 1.0,
        ood_kept_fraction: 1.0,
        lambda_t: 0.0,
    })
}
