use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use clap::Args;
use realmix::experiments::{
    default_gamma_map, emit_report, run_ablation, run_label_sweep, run_mismatch_sweep, run_transfer,
    AblationSetup, ExperimentKind, MismatchSetup, RunCache, RunOptions, TransferSetup, Variant,
};

use super::report::print_table;
use crate::manifest::RunManifest;
use crate::util::{ensure_fresh_dir, load_test, load_train, require_out, resolve_classes, resolve_config, usage};
use crate::Global;

fn parse_kind(s: &str) -> Result<ExperimentKind, String> {
    s.parse().map_err(|e: realmix::Error| e.to_string())
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// labels, mismatch, ablation or transfer.
    #[arg(value_parser = parse_kind)]
    pub kind: ExperimentKind,
    /// Dataset root containing `train/` and `test/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Test set directory, if not `<data>/test`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Seeds; every arm runs once per seed on the same split.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Label counts (labels).
    #[arg(long, value_delimiter = ',')]
    pub counts: Vec<usize>,
    /// Add an arm trained on every label (labels).
    #[arg(long)]
    pub fully_supervised: bool,
    /// Mismatch percentages (mismatch).
    #[arg(long, value_delimiter = ',', default_values_t = [0u32, 25, 50, 75, 100])]
    pub levels: Vec<u32>,
    /// Mask fraction per level as `level=gamma` pairs (mismatch).
    #[arg(long, value_delimiter = ',', value_name = "LEVEL=GAMMA")]
    pub gammas: Vec<String>,
    /// Add a control arm with the OOD mask off (mismatch).
    #[arg(long)]
    pub control: bool,
    /// Labeled classes of mismatch runs: a class group or a list.
    #[arg(long, default_value = "animal")]
    pub labeled_classes: String,
    #[arg(long, default_value_t = 25)]
    pub labels_per_class: usize,
    /// Variants (ablation): presets such as `simple_aug`, `copies_half`,
    /// `no_mask`, or `key=value;key=value`. Repeatable.
    #[arg(long)]
    pub variants: Vec<String>,
    /// Where an ablation runs: `labels=N` or `mismatch=P` (ablation).
    #[arg(long, default_value = "labels=250")]
    pub setup: String,
    /// Pretraining classes (transfer).
    #[arg(long, default_value = "animal")]
    pub source_classes: String,
    /// Target classes (transfer).
    #[arg(long, default_value = "vehicle")]
    pub target_classes: String,
    /// Target labels (transfer).
    #[arg(long, default_value_t = 100)]
    pub transfer_labels: usize,
    /// Supervised pretraining steps (transfer).
    #[arg(long, default_value_t = 4000)]
    pub pretrain_steps: u64,
    /// Result cache shared across invocations; finished arms are skipped.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Keep every arm's metrics CSV under `<out>/runs`.
    #[arg(long)]
    pub save_runs: bool,
}

fn gamma_map(pairs: &[String]) -> Result<BTreeMap<u32, f64>> {
    if pairs.is_empty() {
        return Ok(default_gamma_map());
    }
    pairs
        .iter()
        .map(|p| {
            let (l, g) = p
                .split_once('=')
                .ok_or_else(|| usage(format!("expected LEVEL=GAMMA, got `{p}`")))?;
            let level = l.trim().parse().map_err(|_| usage(format!("bad level `{l}`")))?;
            let gamma = g.trim().parse().map_err(|_| usage(format!("bad gamma `{g}`")))?;
            Ok((level, gamma))
        })
        .collect()
}

pub fn run(global: &Global, args: &ExperimentArgs) -> Result<()> {
    let out = require_out(global)?;
    let (base, config_path) = resolve_config(global, None)?;
    let data = load_train(&args.data)?;
    let test = load_test(&args.data, args.test.as_deref())?
        .ok_or_else(|| usage(format!("no test set under {}; pass --test", args.data.display())))?;
    let seeds = match (&args.seeds[..], global.seed) {
        ([], Some(s)) => vec![s],
        ([], None) => vec![0, 1, 2],
        (s, _) => s.to_vec(),
    };
    let mismatch_setup = || -> Result<MismatchSetup> {
        Ok(MismatchSetup {
            labeled_classes: resolve_classes(&data, &args.labeled_classes)?,
            labels_per_class: args.labels_per_class,
        })
    };
    ensure_fresh_dir(out)?;
    let manifest = RunManifest::start("experiment", out, config_path.as_deref(), Some(base.hash()))?;
    let result = (|| {
        let cache = match &args.cache {
            Some(path) => RunCache::open(path.clone())?,
            None => RunCache::in_memory(),
        };
        let options = RunOptions {
            jobs: global.jobs.max(1),
            cache: Some(Arc::new(cache)),
            include_fully_supervised: args.fully_supervised,
            runs_dir: args.save_runs.then(|| out.join("runs")),
            ..Default::default()
        };
        let report = match args.kind {
            ExperimentKind::Labels => {
                let counts = if args.counts.is_empty() { vec![base.n_labels] } else { args.counts.clone() };
                run_label_sweep(&base, &data, &test, &counts, &seeds, &options)?
            }
            ExperimentKind::Mismatch => run_mismatch_sweep(
                &base,
                &data,
                &test,
                &mismatch_setup()?,
                &args.levels,
                &gamma_map(&args.gammas)?,
                &seeds,
                args.control,
                &options,
            )?,
            ExperimentKind::Ablation => {
                let setup = match args.setup.split_once('=') {
                    Some(("labels", n)) => AblationSetup::Labels {
                        n_labels: n.parse().map_err(|_| usage(format!("bad label count `{n}`")))?,
                    },
                    Some(("mismatch", p)) => AblationSetup::Mismatch {
                        setup: mismatch_setup()?,
                        level: p.parse().map_err(|_| usage(format!("bad mismatch level `{p}`")))?,
                    },
                    _ => return Err(usage("--setup must be labels=N or mismatch=P")),
                };
                // Mismatch ablations run at the level's own mask fraction.
                let mut base = base.clone();
                if let AblationSetup::Mismatch { level, .. } = &setup {
                    if let Some(g) = gamma_map(&args.gammas)?.get(level) {
                        base.gamma = *g;
                    }
                }
                let variants = args
                    .variants
                    .iter()
                    .flat_map(|v| v.split(','))
                    .map(|v| Variant::parse(v.trim(), &base))
                    .collect::<realmix::Result<Vec<_>>>()?;
                run_ablation(&base, &data, &test, &setup, &variants, &seeds, &options)?
            }
            ExperimentKind::Transfer => {
                let setup = TransferSetup {
                    source_classes: resolve_classes(&data, &args.source_classes)?,
                    target_classes: resolve_classes(&data, &args.target_classes)?,
                    n_labels: args.transfer_labels,
                    pretrain_steps: args.pretrain_steps,
                };
                run_transfer(&base, &data, &test, &setup, &seeds, &options)?
            }
        };
        for path in emit_report(&report, out)? {
            println!("wrote {}", path.display());
        }
        print_table(&report);
        Ok(())
    })();
    manifest.finish(result)
}
