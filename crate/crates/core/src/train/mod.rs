//! Training: the per-step update, the outer loop with periodic evaluation
//! and checkpoints, and a labeled-only baseline trainer.

mod checkpoint;
mod eval;
mod sampler;
mod step;

pub use checkpoint::{
    checkpoint_path, latest_checkpoint, load_checkpoint, resolve_checkpoint, save_checkpoint,
    Checkpoint,
};
pub use eval::{error_rate, evaluate, predict_labels};
pub use sampler::BatchSampler;
pub use step::{
    prepare_step, step_loss, step_objective, supervised_step, train_step, LabeledBatch,
    PreparedStep, StepLoss, StepMetrics, UnlabeledBatch,
};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::extend_cached;
use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{reference_model, Classifier, Sequential};
use crate::optim::AdamState;
use crate::rng::{RngStream, StreamId};
use crate::split::SplitSpec;

/// Parameters, their EMA shadow, optimizer moments and the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: Vec<f64>,
    pub ema: Vec<f64>,
    pub adam: AdamState,
    pub step: u64,
}

impl TrainState {
    pub fn new(params: Vec<f64>) -> Self {
        TrainState {
            ema: params.clone(),
            adam: AdamState::new(params.len()),
            params,
            step: 0,
        }
    }
}

/// Which parameters evaluation uses. EMA is the default; raw parameters
/// must be asked for explicitly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    #[default]
    Ema,
    Raw,
}

/// One metrics row, written at every evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub step: u64,
    pub sup_loss: f64,
    pub unsup_loss: f64,
    pub tsa_threshold: f64,
    pub ood_kept_fraction: f64,
    pub lambda_t: f64,
    /// Error on the (unaugmented) labeled training images.
    pub train_error: f64,
    pub test_error: Option<f64>,
}

/// Column order of the metrics CSV. The last column is named after the
/// evaluation mode.
pub fn metrics_header(mode: EvalMode) -> String {
    let last = match mode {
        EvalMode::Ema => "test_error_ema",
        EvalMode::Raw => "test_error_raw",
    };
    format!("step,sup_loss,unsup_loss,tsa_threshold,ood_kept_fraction,lambda_t,train_error,{last}")
}

pub fn metrics_csv(rows: &[EvalRow], mode: EvalMode) -> String {
    let mut out = metrics_header(mode);
    out.push('\n');
    for r in rows {
        let test = r.test_error.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            r.sup_loss,
            r.unsup_loss,
            r.tsa_threshold,
            r.ood_kept_fraction,
            r.lambda_t,
            r.train_error,
            test
        );
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where periodic checkpoints go.
    pub checkpoint_dir: Option<PathBuf>,
    /// A checkpoint, or a directory of checkpoints, to continue from.
    pub resume_from: Option<PathBuf>,
    /// Cache directory for extended unlabeled pools.
    pub extend_cache: Option<PathBuf>,
    pub metrics_csv: Option<PathBuf>,
    /// Starting parameters instead of a fresh initialization.
    pub init_params: Option<Vec<f64>>,
    /// Stop once this many steps are complete, as if interrupted.
    pub stop_after: Option<u64>,
    pub eval_mode: EvalMode,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Metrics of every step taken, including steps restored from a checkpoint.
    pub history: Vec<StepMetrics>,
    pub evals: Vec<EvalRow>,
    /// Test error of the last evaluation.
    pub final_error: Option<f64>,
    /// Unlabeled batches consumed; always 0 for the labeled-only trainer.
    pub unlabeled_batches: u64,
    pub last_checkpoint: Option<PathBuf>,
}

/// The labeled half of a split as its own dataset, plus the raw unlabeled
/// images (their labels are never handed to training).
pub fn split_data(dataset: &Dataset, split: &SplitSpec) -> Result<(Dataset, Vec<f32>)> {
    split.validate(dataset.len())?;
    let labeled = dataset.subset(&split.labeled)?;
    let mut unlabeled = Vec::with_capacity(split.unlabeled.len() * dataset.shape().len());
    for &i in &split.unlabeled {
        unlabeled.extend_from_slice(dataset.image(i));
    }
    Ok((labeled, unlabeled))
}

/// The reference network sized by `config` for images of `dataset`.
pub fn model_for(config: &Config, dataset: &Dataset) -> Result<Sequential> {
    reference_model(dataset.shape(), config.num_classes, config.model_width)
}

/// Trains with the full semi-supervised objective.
pub fn train<M: Classifier>(
    model: &M,
    config: &Config,
    labeled: &Dataset,
    unlabeled: &[f32],
    test: Option<&Dataset>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    if unlabeled.is_empty() && config.total_steps > 0 {
        return Err(Error::validation("unlabeled", "semi-supervised training needs unlabeled data"));
    }
    run(model, config, labeled, Some(unlabeled), test, options)
}

/// Trains on the labeled set alone with the same budget, augmentation,
/// optimizer and EMA. Never touches unlabeled data.
pub fn train_supervised<M: Classifier>(
    model: &M,
    config: &Config,
    labeled: &Dataset,
    test: Option<&Dataset>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    run(model, config, labeled, None, test, options)
}

fn check_setup<M: Classifier>(model: &M, config: &Config, labeled: &Dataset) -> Result<()> {
    let mut probe = config.clone();
    probe.total_steps = probe.total_steps.max(1);
    probe.validate()?;
    if config.num_classes != model.num_classes() || labeled.num_classes() != model.num_classes() {
        return Err(Error::validation(
            "num_classes",
            format!(
                "config says {}, model has {}, labeled data has {}",
                config.num_classes,
                model.num_classes(),
                labeled.num_classes()
            ),
        ));
    }
    if labeled.shape() != model.input_shape() {
        return Err(Error::Shape(format!(
            "model expects {:?}, data is {:?}",
            model.input_shape(),
            labeled.shape()
        )));
    }
    if labeled.is_empty() {
        return Err(Error::validation("n_labels", "the labeled set is empty"));
    }
    Ok(())
}

fn gather(dataset_images: &[f32], len: usize, idx: &[usize]) -> Vec<f32> {
    let mut out = Vec::with_capacity(idx.len() * len);
    for &i in idx {
        out.extend_from_slice(&dataset_images[i * len..(i + 1) * len]);
    }
    out
}

fn run<M: Classifier>(
    model: &M,
    config: &Config,
    labeled: &Dataset,
    unlabeled: Option<&[f32]>,
    test: Option<&Dataset>,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    check_setup(model, config, labeled)?;
    let hash = config.hash();
    let shape = model.input_shape();
    let len = shape.len();

    let mut state = match &options.init_params {
        Some(p) if p.len() != model.num_params() => {
            return Err(Error::Shape(format!(
                "initial parameters have {} values, model needs {}",
                p.len(),
                model.num_params()
            )))
        }
        Some(p) => TrainState::new(p.clone()),
        None => TrainState::new(model.init_params(config.seed)),
    };
    let mut history = Vec::new();
    let mut evals = Vec::new();
    let mut last_checkpoint = None;
    if let Some(from) = &options.resume_from {
        let path = resolve_checkpoint(from)?;
        let ckpt = load_checkpoint(&path)?;
        if ckpt.config_hash != hash {
            return Err(Error::validation(
                "resume",
                format!("{} was written with a different config", path.display()),
            ));
        }
        if ckpt.state.params.len() != model.num_params() {
            return Err(Error::Shape(format!(
                "{} holds {} parameters, model needs {}",
                path.display(),
                ckpt.state.params.len(),
                model.num_params()
            )));
        }
        log::info!("resuming from {} at step {}", path.display(), ckpt.state.step);
        state = ckpt.state;
        history = ckpt.history;
        evals = ckpt.evals;
        last_checkpoint = Some(path);
    }

    let end = options
        .stop_after
        .map_or(config.total_steps, |s| s.min(config.total_steps));
    let pool = match unlabeled {
        Some(images) if state.step < end => Some(extend_cached(
            options.extend_cache.as_deref(),
            images,
            shape,
            config.extend_copies,
            &config.extend_policy,
            &RngStream::new(config.seed, StreamId::Extend),
        )?),
        _ => None,
    };
    let mut labeled_sampler = BatchSampler::new(
        labeled.len(),
        RngStream::new(config.seed, StreamId::LabeledSampler),
    )?;
    let mut unlabeled_sampler = match &pool {
        Some(p) => Some(BatchSampler::new(
            p.len() / len,
            RngStream::new(config.seed, StreamId::UnlabeledSampler),
        )?),
        None => None,
    };
    let mut unlabeled_batches = if unlabeled.is_some() { state.step } else { 0 };

    while state.step < end {
        let idx = labeled_sampler.batch(state.step, config.batch_size);
        let images = gather(labeled.images(), len, &idx);
        let labels: Vec<usize> = idx.iter().map(|&i| labeled.label(i)).collect();
        let batch = LabeledBatch {
            images: &images,
            labels: &labels,
        };
        let result = match (&pool, &mut unlabeled_sampler) {
            (Some(pool), Some(sampler)) => {
                let uidx = sampler.batch(state.step, config.batch_size);
                let uimages = gather(pool, len, &uidx);
                unlabeled_batches += 1;
                train_step(
                    model,
                    &mut state,
                    batch,
                    UnlabeledBatch { images: &uimages },
                    config,
                )
            }
            _ => supervised_step(model, &mut state, batch, config),
        };
        let metrics = match result {
            Ok(m) => m,
            Err(Error::InvalidDistribution(detail)) => {
                return Err(Error::NonFinite {
                    step: state.step,
                    detail,
                    last_checkpoint,
                })
            }
            Err(e) => return Err(e),
        };
        let s = state.step;
        let eval_due = s == config.total_steps
            || (config.eval_interval > 0 && s % config.eval_interval == 0);
        if eval_due {
            let params = match options.eval_mode {
                EvalMode::Ema => &state.ema,
                EvalMode::Raw => &state.params,
            };
            let row = EvalRow {
                step: s,
                sup_loss: metrics.sup_loss,
                unsup_loss: metrics.unsup_loss,
                tsa_threshold: metrics.tsa_threshold,
                ood_kept_fraction: metrics.ood_kept_fraction,
                lambda_t: metrics.lambda_t,
                train_error: evaluate(model, params, labeled)?,
                test_error: test.map(|t| evaluate(model, params, t)).transpose()?,
            };
            log::info!(
                "METRIC step={} sup_loss={:.6} unsup_loss={:.6} tsa_threshold={:.4} ood_kept_fraction={:.4} lambda_t={:.4} train_error={:.4} test_error={}",
                row.step,
                row.sup_loss,
                row.unsup_loss,
                row.tsa_threshold,
                row.ood_kept_fraction,
                row.lambda_t,
                row.train_error,
                row.test_error.map(|e| format!("{e:.4}")).unwrap_or_else(|| "-".into())
            );
            evals.push(row);
        }
        history.push(metrics);
        if let Some(dir) = &options.checkpoint_dir {
            let due = s == config.total_steps
                || (config.checkpoint_interval > 0 && s % config.checkpoint_interval == 0);
            if due {
                let path = save_checkpoint(
                    dir,
                    &Checkpoint {
                        state: state.clone(),
                        config_hash: hash.clone(),
                        history: history.clone(),
                        evals: evals.clone(),
                    },
                )?;
                last_checkpoint = Some(path);
            }
        }
    }

    if let Some(path) = &options.metrics_csv {
        write_file(path, &metrics_csv(&evals, options.eval_mode))?;
    }
    Ok(TrainOutcome {
        final_error: evals.last().and_then(|r| r.test_error),
        state,
        history,
        evals,
        unlabeled_batches,
        last_checkpoint,
    })
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
