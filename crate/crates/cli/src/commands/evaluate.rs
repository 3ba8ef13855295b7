use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use realmix::load_config;
use realmix::tensor_io::read_tensor;
use realmix::train::{evaluate, model_for};
use realmix::Dataset;

use super::prepare::CONFIG_FILE;
use super::train::{EvalWith, RunRecord, EMA_TENSOR, PARAMS_TENSOR};
use crate::util::{percent, require_exists, usage};
use crate::Global;

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Output directory of `train`.
    #[arg(long)]
    pub run: PathBuf,
    /// Test set directory. Defaults to the one used during training.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EvalWith::Ema)]
    pub with: EvalWith,
}

pub fn run(_global: &Global, args: &EvaluateArgs) -> Result<()> {
    let record = RunRecord::load(&args.run)?;
    let config_path = args.run.join(CONFIG_FILE);
    require_exists(&config_path, "run config")?;
    let config = load_config(&config_path)?;
    let test_dir = args
        .test
        .clone()
        .or(record.test.clone())
        .ok_or_else(|| usage("the run had no test set; pass --test <DIR>"))?;
    require_exists(&test_dir.join("manifest.json"), "test set")?;
    let mut test = Dataset::load(&test_dir)?;
    if let Some(classes) = &record.labeled_classes {
        test = test.restrict_classes(classes)?;
    }
    let stem = args.run.join(match args.with {
        EvalWith::Ema => EMA_TENSOR,
        EvalWith::Raw => PARAMS_TENSOR,
    });
    let (_, params) = read_tensor::<f64>(&stem)?;
    let model = model_for(&config, &test)?;
    let error = evaluate(&model, &params, &test)?;
    println!(
        "test error ({}): {}  [{} samples, {}]",
        args.with.label(),
        percent(error),
        test.len(),
        test_dir.display()
    );
    Ok(())
}
