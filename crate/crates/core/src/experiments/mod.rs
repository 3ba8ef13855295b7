//! Multi-seed experiment runners and their reports.
//!
//! Every runner builds a list of [`ArmJob`]s, hands them to [`execute`] and
//! groups the resulting EMA test errors by arm and condition.

mod exec;
mod report;
mod runners;


pub use exec::{execute, ArmJob, ArmKind, RunCache, RunOptions};
pub use report::{
    emit_report, mean_std, series_csv, summary_csv, ConditionResult, ExperimentKind, ExperimentReport,
    REPORT_SCHEMA_VERSION,
};
pub use runners::{
    default_gamma_map, run_ablation, run_label_sweep, run_mismatch_sweep, run_transfer, AblationSetup,
    MismatchSetup, TransferSetup, Variant,
};

use crate::config::{AugmentPolicy, Config};
use crate::synth::SynthSpec;

/// Hyperparameters scaled for the synthetic set on a CPU.
pub fn desk_config() -> Config {
    let learning_rate = 0.005;
    Config {
        lambda_max: 25.0,
        lambda_rampup_steps: 2400,
        alpha: 0.1,
        extend_copies: 8,
        extend_policy: AugmentPolicy::simple(1).with_cutout(2),
        augment_policy: AugmentPolicy::simple(1),
        ema_decay: 0.99,
        batch_size: 32,
        total_steps: 6000,
        learning_rate,
        weight_decay: 0.02 * learning_rate,
        model_width: 8,
        eval_interval: 1000,
        ..Config::default()
    }
}

/// The synthetic set used with [`desk_config`].
pub fn desk_synth_spec() -> SynthSpec {
    SynthSpec {
        noise: 0.1,
        point_jitter: 0.04,
        test_per_class: 500,
        max_rotation: 60.0,
        scale_jitter: 0.25,
        max_shift: 0.25,
        ..SynthSpec::default()
    }
}
