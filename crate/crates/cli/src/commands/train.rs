use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use realmix::nn::Classifier;
use realmix::tensor_io::write_tensor;
use realmix::train::{evaluate, model_for, split_data, train, train_supervised, EvalMode, TrainOptions};
use realmix::{Dataset, SplitSpec};
use serde::{Deserialize, Serialize};

use super::prepare::{Prepared, CONFIG_FILE, EXTEND_DIR, SPLIT_FILE};
use crate::manifest::RunManifest;
use crate::util::{ensure_fresh_dir, load_test, load_train, percent, require_exists, require_out, resolve_config, usage};
use crate::Global;

pub const RUN_FILE: &str = "run.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const EMA_TENSOR: &str = "model/ema";
pub const PARAMS_TENSOR: &str = "model/params";

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalWith {
    Ema,
    Raw,
}

impl From<EvalWith> for EvalMode {
    fn from(e: EvalWith) -> Self {
        match e {
            EvalWith::Ema => EvalMode::Ema,
            EvalWith::Raw => EvalMode::Raw,
        }
    }
}

impl EvalWith {
    pub fn label(self) -> &'static str {
        match self {
            EvalWith::Ema => "EMA",
            EvalWith::Raw => "raw",
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Output directory of `prepare` (split, config and extended pool).
    #[arg(long, conflicts_with_all = ["data", "split"])]
    pub prepared: Option<PathBuf>,
    /// Dataset root containing `train/` (with `--split`).
    #[arg(long, requires = "split")]
    pub data: Option<PathBuf>,
    /// Split file (with `--data`).
    #[arg(long, requires = "data")]
    pub split: Option<PathBuf>,
    /// Test set directory. Defaults to `<data>/test` when present.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Continue from a checkpoint directory or a directory of checkpoints.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Labeled-only baseline: same budget and augmentation, no unlabeled data.
    #[arg(long)]
    pub supervised: bool,
    /// Parameters used for evaluation.
    #[arg(long, value_enum, default_value_t = EvalWith::Ema)]
    pub eval_with: EvalWith,
    /// Stop after this many steps, leaving a resumable run.
    #[arg(long)]
    pub stop_after: Option<u64>,
}

/// Summary written next to the trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub data: PathBuf,
    pub test: Option<PathBuf>,
    pub labeled_classes: Option<Vec<usize>>,
    pub supervised: bool,
    pub eval_with: EvalWith,
    pub steps: u64,
    pub completed: bool,
    pub final_error: Option<f64>,
    pub last_checkpoint: Option<PathBuf>,
    pub config_hash: String,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        require_exists(&path, "run record")?;
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

struct Inputs {
    root: PathBuf,
    split: SplitSpec,
    labeled_classes: Option<Vec<usize>>,
    extend_cache: Option<PathBuf>,
    config_fallback: Option<PathBuf>,
}

fn inputs(args: &TrainArgs) -> Result<Inputs> {
    match (&args.prepared, &args.data, &args.split) {
        (Some(dir), _, _) => {
            let prepared = Prepared::load(dir)?;
            let split_path = dir.join(SPLIT_FILE);
            require_exists(&split_path, "split file")?;
            let cache = dir.join(EXTEND_DIR);
            Ok(Inputs {
                root: prepared.data,
                split: SplitSpec::load(&split_path)?,
                labeled_classes: prepared.labeled_classes,
                extend_cache: cache.exists().then_some(cache),
                config_fallback: Some(dir.join(CONFIG_FILE)),
            })
        }
        (None, Some(data), Some(split)) => {
            require_exists(split, "split file")?;
            Ok(Inputs {
                root: data.clone(),
                split: SplitSpec::load(split)?,
                labeled_classes: None,
                extend_cache: None,
                config_fallback: None,
            })
        }
        _ => Err(usage("train needs --prepared <DIR> or both --data and --split")),
    }
}

fn restrict(data: Dataset, classes: &Option<Vec<usize>>) -> Result<Dataset> {
    Ok(match classes {
        Some(c) => data.restrict_classes(c)?,
        None => data,
    })
}

/// An output directory may be reused only to resume an unfinished run.
fn check_out_dir(out: &Path, resuming: bool) -> Result<()> {
    if !resuming {
        return ensure_fresh_dir(out);
    }
    if let Ok(record) = RunRecord::load(out) {
        if record.completed {
            return Err(usage(format!("{} holds a finished run", out.display())));
        }
    }
    Ok(())
}

pub fn run(global: &Global, args: &TrainArgs) -> Result<()> {
    let out = require_out(global)?;
    let inputs = inputs(args)?;
    let (config, config_path) = resolve_config(global, inputs.config_fallback.as_deref())?;
    let data = load_train(&inputs.root)?;
    if inputs.split.source_checksum != data.checksum() {
        return Err(usage(format!(
            "the split was made for dataset {}, but {} has checksum {}",
            inputs.split.source_checksum,
            inputs.root.display(),
            data.checksum()
        )));
    }
    let test = load_test(&inputs.root, args.test.as_deref())?
        .map(|t| restrict(t, &inputs.labeled_classes))
        .transpose()?;
    let (labeled, unlabeled) = split_data(&data, &inputs.split)?;
    let labeled = restrict(labeled, &inputs.labeled_classes)?;
    let model = model_for(&config, &labeled)?;
    if let Some(resume) = &args.resume {
        require_exists(resume, "checkpoint")?;
    }
    check_out_dir(out, args.resume.is_some())?;

    let manifest = RunManifest::start("train", out, config_path.as_deref(), Some(config.hash()))?;
    let result = (|| {
        config.save(&out.join(CONFIG_FILE))?;
        let options = TrainOptions {
            checkpoint_dir: Some(out.join("checkpoints")),
            resume_from: args.resume.clone(),
            extend_cache: inputs.extend_cache.clone(),
            metrics_csv: Some(out.join(METRICS_FILE)),
            stop_after: args.stop_after,
            eval_mode: args.eval_with.into(),
            ..Default::default()
        };
        log::info!(
            "training {} for {} steps: {} labeled, {} unlabeled, {} parameters",
            if args.supervised { "labeled-only" } else { "semi-supervised" },
            config.total_steps,
            labeled.len(),
            unlabeled.len() / data.shape().len(),
            model.num_params()
        );
        let outcome = if args.supervised {
            train_supervised(&model, &config, &labeled, test.as_ref(), &options)?
        } else {
            train(&model, &config, &labeled, &unlabeled, test.as_ref(), &options)?
        };
        let n = outcome.state.params.len();
        write_tensor(&out.join(EMA_TENSOR), &[n], &outcome.state.ema)?;
        write_tensor(&out.join(PARAMS_TENSOR), &[n], &outcome.state.params)?;
        let completed = outcome.state.step >= config.total_steps;
        let eval_params = match args.eval_with {
            EvalWith::Ema => &outcome.state.ema,
            EvalWith::Raw => &outcome.state.params,
        };
        let final_error = match (&test, outcome.final_error) {
            (Some(_), Some(e)) if completed => Some(e),
            (Some(t), _) => Some(evaluate(&model, eval_params, t)?),
            (None, _) => None,
        };
        let record = RunRecord {
            data: inputs.root.clone(),
            test: test.as_ref().map(|_| args.test.clone().unwrap_or_else(|| crate::util::test_dir(&inputs.root))),
            labeled_classes: inputs.labeled_classes.clone(),
            supervised: args.supervised,
            eval_with: args.eval_with,
            steps: outcome.state.step,
            completed,
            final_error,
            last_checkpoint: outcome.last_checkpoint.clone(),
            config_hash: config.hash(),
        };
        let mut text = serde_json::to_string_pretty(&record).expect("record serializes");
        text.push('\n');
        std::fs::write(out.join(RUN_FILE), text)?;
        if !completed {
            println!(
                "stopped at step {} of {}; resume with --resume {}",
                outcome.state.step,
                config.total_steps,
                out.join("checkpoints").display()
            );
        }
        match final_error {
            Some(e) => println!("final test error ({}): {}", args.eval_with.label(), percent(e)),
            None => {
                let e = evaluate(&model, eval_params, &labeled)?;
                println!("no test set; final labeled-set error ({}): {}", args.eval_with.label(), percent(e));
            }
        }
        Ok(())
    })();
    manifest.finish(result)
}
