use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use serde_json::json;

use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{reference_model, transfer_params, Classifier};
use crate::split::{make_label_split, make_mismatch_split, MISMATCH_LEVELS};
use crate::train::{evaluate, split_data, train_supervised, TrainOptions};

use super::exec::{execute, ArmJob, ArmKind, RunOptions};
use super::report::{ConditionResult, ExperimentKind, ExperimentReport, REPORT_SCHEMA_VERSION};

/// The OOD-mask fraction used at each mismatch level unless told otherwise.
pub fn default_gamma_map() -> BTreeMap<u32, f64> {
    [(0, 0.0), (25, 0.2), (50, 0.4), (75, 0.6), (100, 0.85)]
        .into_iter()
        .collect()
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::validation("seeds", "at least one seed is required"));
    }
    Ok(())
}

/// Groups per-job errors by (arm, condition), in first-appearance order.
fn assemble(jobs: &[ArmJob], errors: &[f64]) -> Vec<ConditionResult> {
    let mut order: Vec<(String, String, Option<f64>)> = Vec::new();
    let mut groups: BTreeMap<(String, String), (Vec<u64>, Vec<f64>)> = BTreeMap::new();
    for (job, &e) in jobs.iter().zip(errors) {
        let key = (job.arm.clone(), job.condition.clone());
        let entry = groups.entry(key.clone()).or_insert_with(|| {
            order.push((job.arm.clone(), job.condition.clone(), job.x));
            (Vec::new(), Vec::new())
        });
        entry.0.push(job.seed);
        entry.1.push(e);
    }
    order
        .into_iter()
        .map(|(arm, condition, x)| {
            let (seeds, errs) = groups.remove(&(arm.clone(), condition.clone())).expect("grouped");
            ConditionResult::new(&arm, &condition, x, seeds, errs)
        })
        .collect()
}

fn report(
    kind: ExperimentKind,
    base: &Config,
    data: &Dataset,
    seeds: &[u64],
    conditions: Vec<ConditionResult>,
    settings: BTreeMap<String, serde_json::Value>,
    start: Instant,
) -> ExperimentReport {
    let baselines: Vec<&ConditionResult> = conditions.iter().filter(|c| c.arm == "baseline").collect();
    let baseline_error = (baselines.len() == 1).then(|| baselines[0].mean);
    ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        baseline_error,
        conditions,
        config_hash: base.hash(),
        dataset_checksum: data.checksum(),
        seeds: seeds.to_vec(),
        settings,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    }
}

fn seeded(base: &Config, seed: u64) -> Config {
    Config {
        seed,
        ..base.clone()
    }
}

/// For every label count and seed: RealMix and the labeled-only baseline on
/// the same split, evaluated with EMA parameters.
pub fn run_label_sweep(
    base: &Config,
    data: &Dataset,
    test: &Dataset,
    counts: &[usize],
    seeds: &[u64],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    check_seeds(seeds)?;
    if counts.is_empty() {
        return Err(Error::validation("counts", "at least one label count is required"));
    }
    base.validate()?;
    let test = Arc::new(test.clone());
    let mut jobs = Vec::new();
    for &count in counts {
        for &seed in seeds {
            let split = make_label_split(data, count, seed)?;
            let (labeled, unlabeled) = split_data(data, &split)?;
            let labeled = Arc::new(labeled);
            let unlabeled = Arc::new(unlabeled);
            let config = Config {
                n_labels: count,
                ..seeded(base, seed)
            };
            let condition = format!("labels={count}");
            for (arm, kind) in [("realmix", ArmKind::RealMix), ("baseline", ArmKind::Supervised)] {
                jobs.push(ArmJob {
                    arm: arm.into(),
                    condition: condition.clone(),
                    x: Some(count as f64),
                    seed,
                    kind,
                    config: config.clone(),
                    labeled: labeled.clone(),
                    unlabeled: unlabeled.clone(),
                    test: test.clone(),
                    init: None,
                });
            }
        }
    }
    if options.include_fully_supervised {
        let all = Arc::new(data.clone());
        for &seed in seeds {
            jobs.push(ArmJob {
                arm: "fully_supervised".into(),
                condition: "all_labels".into(),
                x: None,
                seed,
                kind: ArmKind::Supervised,
                config: Config {
                    n_labels: data.len(),
                    ..seeded(base, seed)
                },
                labeled: all.clone(),
                unlabeled: Arc::new(Vec::new()),
                test: test.clone(),
                init: None,
            });
        }
    }
    let errors = execute(&jobs, options)?;
    let mut settings = BTreeMap::new();
    settings.insert("counts".into(), json!(counts));
    Ok(report(
        ExperimentKind::Labels,
        base,
        data,
        seeds,
        assemble(&jobs, &errors),
        settings,
        start,
    ))
}

/// The labeled side of the mismatch protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct MismatchSetup {
    pub labeled_classes: Vec<usize>,
    pub labels_per_class: usize,
}

impl MismatchSetup {
    /// Labeled classes are the dataset's `group` (e.g. `animal`).
    pub fn from_group(data: &Dataset, group: &str, labels_per_class: usize) -> Result<Self> {
        let classes = data
            .class_groups()
            .get(group)
            .cloned()
            .ok_or_else(|| Error::validation("labeled_group", format!("dataset has no class group `{group}`")))?;
        Ok(MismatchSetup {
            labeled_classes: classes,
            labels_per_class,
        })
    }
}

struct MismatchArmData {
    labeled: Arc<Dataset>,
    unlabeled: Arc<Vec<f32>>,
}

fn mismatch_data(data: &Dataset, setup: &MismatchSetup, level: u32, seed: u64) -> Result<MismatchArmData> {
    let split = make_mismatch_split(data, &setup.labeled_classes, setup.labels_per_class, level, seed)?;
    let (labeled, unlabeled) = split_data(data, &split)?;
    Ok(MismatchArmData {
        labeled: Arc::new(labeled.restrict_classes(&setup.labeled_classes)?),
        unlabeled: Arc::new(unlabeled),
    })
}

fn mismatch_config(base: &Config, setup: &MismatchSetup, seed: u64) -> Config {
    Config {
        num_classes: setup.labeled_classes.len(),
        n_labels: setup.labels_per_class * setup.labeled_classes.len(),
        ..seeded(base, seed)
    }
}

/// For every mismatch level and seed: RealMix with that level's mask
/// fraction, optionally a control with the mask off, plus one labeled-only
/// baseline per seed. Test data is restricted to the labeled classes.
#[allow(clippy::too_many_arguments)]
pub fn run_mismatch_sweep(
    base: &Config,
    data: &Dataset,
    test: &Dataset,
    setup: &MismatchSetup,
    levels: &[u32],
    gamma_map: &BTreeMap<u32, f64>,
    seeds: &[u64],
    with_control: bool,
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    check_seeds(seeds)?;
    if levels.is_empty() {
        return Err(Error::validation("levels", "at least one mismatch level is required"));
    }
    for level in levels {
        if !MISMATCH_LEVELS.contains(level) {
            return Err(Error::validation(
                "levels",
                format!("{level} is not one of {MISMATCH_LEVELS:?}"),
            ));
        }
        let gamma = gamma_map.get(level).ok_or_else(|| {
            Error::validation("gamma_map", format!("no gamma given for mismatch level {level}"))
        })?;
        let mut probe = base.clone();
        probe.gamma = *gamma;
        probe.validate()?;
    }
    let test = Arc::new(test.restrict_classes(&setup.labeled_classes)?);
    let mut jobs = Vec::new();
    let mut baseline_jobs = Vec::new();
    for &level in levels {
        for &seed in seeds {
            let arm_data = mismatch_data(data, setup, level, seed)?;
            let config = mismatch_config(base, setup, seed);
            let condition = format!("mismatch={level}");
            let mut arms = vec![("realmix", gamma_map[&level])];
            if with_control {
                arms.push(("gamma0_control", 0.0));
            }
            for (arm, gamma) in arms {
                jobs.push(ArmJob {
                    arm: arm.into(),
                    condition: condition.clone(),
                    x: Some(level as f64),
                    seed,
                    kind: ArmKind::RealMix,
                    config: Config {
                        gamma,
                        ..config.clone()
                    },
                    labeled: arm_data.labeled.clone(),
                    unlabeled: arm_data.unlabeled.clone(),
                    test: test.clone(),
                    init: None,
                });
            }
            if level == levels[0] {
                baseline_jobs.push(ArmJob {
                    arm: "baseline".into(),
                    condition: "labeled_only".into(),
                    x: None,
                    seed,
                    kind: ArmKind::Supervised,
                    config: config.clone(),
                    labeled: arm_data.labeled.clone(),
                    unlabeled: Arc::new(Vec::new()),
                    test: test.clone(),
                    init: None,
                });
            }
        }
    }
    jobs.extend(baseline_jobs);
    let errors = execute(&jobs, options)?;
    let mut settings = BTreeMap::new();
    settings.insert("levels".into(), json!(levels));
    settings.insert("gamma_map".into(), json!(gamma_map));
    settings.insert("labeled_classes".into(), json!(setup.labeled_classes));
    settings.insert("labels_per_class".into(), json!(setup.labels_per_class));
    Ok(report(
        ExperimentKind::Mismatch,
        base,
        data,
        seeds,
        assemble(&jobs, &errors),
        settings,
        start,
    ))
}

/// A named set of config overrides compared against the unmodified control.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub name: String,
    pub overrides: Vec<String>,
}

impl Variant {
    /// Resolves a preset name or an explicit `key=value[;key=value...]` list.
    ///
    /// Presets: `simple_aug` (extend without cutout), `copies_half`,
    /// `copies_<n>`, `no_mask` (gamma 0), `gamma=<g>`, `no_tsa`, `tsa`.
    pub fn parse(spec: &str, base: &Config) -> Result<Variant> {
        let overrides: Vec<String> = match spec {
            "simple_aug" => vec!["extend_policy.cutout_size=0".into()],
            "copies_half" => vec![format!("extend_copies={}", (base.extend_copies / 2).max(1))],
            "no_mask" => vec!["gamma=0".into()],
            "no_tsa" => vec!["tsa_enabled=false".into()],
            "tsa" => vec!["tsa_enabled=true".into()],
            s if s.starts_with("copies_") => vec![format!("extend_copies={}", &s[7..])],
            s if s.contains('=') => s.split(';').map(str::to_string).collect(),
            other => {
                return Err(Error::validation(
                    "variants",
                    format!("unknown variant `{other}`"),
                ))
            }
        };
        let variant = Variant {
            name: spec.to_string(),
            overrides,
        };
        variant.apply(base)?;
        Ok(variant)
    }

    pub fn apply(&self, base: &Config) -> Result<Config> {
        let mut config = base.clone();
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Where an ablation runs: a standard label split or one mismatch level.
#[derive(Clone, Debug, PartialEq)]
pub enum AblationSetup {
    Labels { n_labels: usize },
    Mismatch { setup: MismatchSetup, level: u32 },
}

/// Trains the control and every variant on identical splits and seeds.
pub fn run_ablation(
    base: &Config,
    data: &Dataset,
    test: &Dataset,
    setup: &AblationSetup,
    variants: &[Variant],
    seeds: &[u64],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    check_seeds(seeds)?;
    base.validate()?;
    let configs: Vec<(String, Config)> = std::iter::once(Ok(("control".to_string(), base.clone())))
        .chain(variants.iter().map(|v| v.apply(base).map(|c| (v.name.clone(), c))))
        .collect::<Result<_>>()?;
    let (condition, x, test) = match setup {
        AblationSetup::Labels { n_labels } => (format!("labels={n_labels}"), *n_labels as f64, test.clone()),
        AblationSetup::Mismatch { setup, level } => (
            format!("mismatch={level}"),
            *level as f64,
            test.restrict_classes(&setup.labeled_classes)?,
        ),
    };
    let test = Arc::new(test);
    let mut jobs = Vec::new();
    for &seed in seeds {
        let (labeled, unlabeled, fix): (Arc<Dataset>, Arc<Vec<f32>>, Box<dyn Fn(Config) -> Config>) = match setup {
            AblationSetup::Labels { n_labels } => {
                let split = make_label_split(data, *n_labels, seed)?;
                let (l, u) = split_data(data, &split)?;
                let n = *n_labels;
                (
                    Arc::new(l),
                    Arc::new(u),
                    Box::new(move |c| Config {
                        n_labels: n,
                        seed,
                        ..c
                    }),
                )
            }
            AblationSetup::Mismatch { setup, level } => {
                let d = mismatch_data(data, setup, *level, seed)?;
                let classes = setup.labeled_classes.len();
                let n = setup.labels_per_class * classes;
                (
                    d.labeled,
                    d.unlabeled,
                    Box::new(move |c| Config {
                        num_classes: classes,
                        n_labels: n,
                        seed,
                        ..c
                    }),
                )
            }
        };
        for (name, config) in &configs {
            jobs.push(ArmJob {
                arm: name.clone(),
                condition: condition.clone(),
                x: Some(x),
                seed,
                kind: ArmKind::RealMix,
                config: fix(config.clone()),
                labeled: labeled.clone(),
                unlabeled: unlabeled.clone(),
                test: test.clone(),
                init: None,
            });
        }
    }
    let errors = execute(&jobs, options)?;
    let mut settings = BTreeMap::new();
    settings.insert(
        "variants".into(),
        json!(variants
            .iter()
            .map(|v| (v.name.clone(), v.overrides.clone()))
            .collect::<BTreeMap<_, _>>()),
    );
    settings.insert("condition".into(), json!(condition));
    Ok(report(
        ExperimentKind::Ablation,
        base,
        data,
        seeds,
        assemble(&jobs, &errors),
        settings,
        start,
    ))
}

/// Source and target class sets of the transfer comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferSetup {
    pub source_classes: Vec<usize>,
    pub target_classes: Vec<usize>,
    /// Labels kept from the target classes.
    pub n_labels: usize,
    /// Supervised steps on the fully labeled source classes.
    pub pretrain_steps: u64,
}

fn check_classes(name: &str, classes: &[usize], k: usize) -> Result<()> {
    if classes.len() < 2 {
        return Err(Error::validation(name, "need at least 2 classes"));
    }
    let set: BTreeSet<usize> = classes.iter().copied().collect();
    if set.len() != classes.len() {
        return Err(Error::validation(name, "duplicate class"));
    }
    if let Some(bad) = classes.iter().find(|&&c| c >= k) {
        return Err(Error::validation(name, format!("class {bad} out of range for {k} classes")));
    }
    Ok(())
}

/// Four arms per seed: (a) supervised pretraining on the source classes,
/// (b) fine-tuning the pretrained body on the target labels alone,
/// (c) RealMix from scratch on the target classes and (d) RealMix starting
/// from the pretrained body. Only the classifier head is reinitialized.
pub fn run_transfer(
    base: &Config,
    data: &Dataset,
    test: &Dataset,
    setup: &TransferSetup,
    seeds: &[u64],
    options: &RunOptions,
) -> Result<ExperimentReport> {
    let start = Instant::now();
    check_seeds(seeds)?;
    check_classes("source_classes", &setup.source_classes, data.num_classes())?;
    check_classes("target_classes", &setup.target_classes, data.num_classes())?;
    base.validate()?;
    let source = data.restrict_classes(&setup.source_classes)?;
    let source_test = test.restrict_classes(&setup.source_classes)?;
    let target = data.restrict_classes(&setup.target_classes)?;
    let target_test = Arc::new(test.restrict_classes(&setup.target_classes)?);
    let ks = setup.source_classes.len();
    let kt = setup.target_classes.len();

    let mut pretrain_errors = Vec::new();
    let mut jobs = Vec::new();
    for &seed in seeds {
        let source_config = Config {
            num_classes: ks,
            n_labels: source.len(),
            total_steps: setup.pretrain_steps,
            ..seeded(base, seed)
        };
        let source_model = reference_model(source.shape(), ks, base.model_width)?;
        let pre = train_supervised(&source_model, &source_config, &source, None, &TrainOptions::default())?;
        pretrain_errors.push(evaluate(&source_model, &pre.state.ema, &source_test)?);

        let config = Config {
            num_classes: kt,
            n_labels: setup.n_labels,
            ..seeded(base, seed)
        };
        let target_model = reference_model(target.shape(), kt, base.model_width)?;
        let mut init = target_model.init_params(seed);
        let copied = transfer_params(
            source_model.layout(),
            &pre.state.ema,
            target_model.layout(),
            &mut init,
            &["head"],
        );
        log::debug!("seed {seed}: transferred {copied:?}");
        let init = Arc::new(init);

        let split = make_label_split(&target, setup.n_labels, seed)?;
        let (labeled, unlabeled) = split_data(&target, &split)?;
        let labeled = Arc::new(labeled);
        let unlabeled = Arc::new(unlabeled);
        let condition = format!("labels={}", setup.n_labels);
        let arms = [
            ("finetune_labeled", ArmKind::Supervised, Some(init.clone())),
            ("realmix_scratch", ArmKind::RealMix, None),
            ("realmix_pretrained", ArmKind::RealMix, Some(init.clone())),
        ];
        for (arm, kind, init) in arms {
            jobs.push(ArmJob {
                arm: arm.into(),
                condition: condition.clone(),
                x: None,
                seed,
                kind,
                config: config.clone(),
                labeled: labeled.clone(),
                unlabeled: unlabeled.clone(),
                test: target_test.clone(),
                init,
            });
        }
    }
    let errors = execute(&jobs, options)?;
    let mut conditions = vec![ConditionResult::new(
        "pretrain_source",
        &format!("steps={}", setup.pretrain_steps),
        None,
        seeds.to_vec(),
        pretrain_errors,
    )];
    conditions.extend(assemble(&jobs, &errors));
    let mut settings = BTreeMap::new();
    settings.insert("source_classes".into(), json!(setup.source_classes));
    settings.insert("target_classes".into(), json!(setup.target_classes));
    settings.insert("n_labels".into(), json!(setup.n_labels));
    settings.insert("pretrain_steps".into(), json!(setup.pretrain_steps));
    Ok(report(
        ExperimentKind::Transfer,
        base,
        data,
        seeds,
        conditions,
        settings,
        start,
    ))
}
