//! Hyperparameters and run settings.
//!
//! Configs are stored as flat JSON objects. Augmentation policy fields use
//! dotted keys (`extend_policy.cutout_size`), the same syntax accepted by
//! command-line overrides. Keys missing from a file take their defaults;
//! unknown keys are reported with a warning and ignored.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Schedule used by training signal annealing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsaSchedule {
    Linear,
    Log,
    Exp,
    None,
}

impl fmt::Display for TsaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TsaSchedule::Linear => "linear",
            TsaSchedule::Log => "log",
            TsaSchedule::Exp => "exp",
            TsaSchedule::None => "none",
        })
    }
}

impl FromStr for TsaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(TsaSchedule::Linear),
            "log" => Ok(TsaSchedule::Log),
            "exp" => Ok(TsaSchedule::Exp),
            "none" => Ok(TsaSchedule::None),
            other => Err(Error::validation(
                "tsa_schedule",
                format!("unknown schedule `{other}` (expected linear, log, exp or none)"),
            )),
        }
    }
}

/// Stochastic image perturbation settings.
///
/// Operations run in the order flip, translate, cutout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub horizontal_flip: bool,
    pub flip_prob: f64,
    /// Maximum shift in pixels along each axis; vacated pixels are zero.
    pub translate_max: usize,
    /// Side of the square cutout region; 0 disables cutout.
    pub cutout_size: usize,
    pub fill_value: f64,
}

impl AugmentPolicy {
    /// Flip and translate only.
    pub fn simple(translate_max: usize) -> Self {
        AugmentPolicy {
            horizontal_flip: true,
            flip_prob: 0.5,
            translate_max,
            cutout_size: 0,
            fill_value: 0.0,
        }
    }

    pub fn identity() -> Self {
        AugmentPolicy {
            horizontal_flip: false,
            flip_prob: 0.0,
            translate_max: 0,
            cutout_size: 0,
            fill_value: 0.0,
        }
    }

    pub fn with_cutout(mut self, size: usize) -> Self {
        self.cutout_size = size;
        self
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::validation(
                format!("{prefix}.flip_prob"),
                "must lie in [0, 1]",
            ));
        }
        if !self.fill_value.is_finite() {
            return Err(Error::validation(
                format!("{prefix}.fill_value"),
                "must be finite",
            ));
        }
        Ok(())
    }

    fn insert_into(&self, prefix: &str, map: &mut Map<String, Value>) {
        map.insert(
            format!("{prefix}.horizontal_flip"),
            self.horizontal_flip.into(),
        );
        map.insert(format!("{prefix}.flip_prob"), self.flip_prob.into());
        map.insert(format!("{prefix}.translate_max"), self.translate_max.into());
        map.insert(format!("{prefix}.cutout_size"), self.cutout_size.into());
        map.insert(format!("{prefix}.fill_value"), self.fill_value.into());
    }

    fn set(&mut self, prefix: &str, field: &str, value: &Value) -> Result<bool> {
        let key = format!("{prefix}.{field}");
        match field {
            "horizontal_flip" => self.horizontal_flip = as_bool(&key, value)?,
            "flip_prob" => self.flip_prob = as_f64(&key, value)?,
            "translate_max" => self.translate_max = as_u64(&key, value)? as usize,
            "cutout_size" => self.cutout_size = as_u64(&key, value)? as usize,
            "fill_value" => self.fill_value = as_f64(&key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// All hyperparameters of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Config {
    /// Beta(alpha, alpha) parameter for MixUp.
    pub alpha: f64,
    /// Fraction of each unlabeled batch masked out of the consistency loss.
    pub gamma: f64,
    pub lambda_max: f64,
    pub lambda_rampup_steps: u64,
    /// Sharpening temperature.
    pub temperature: f64,
    pub tsa_enabled: bool,
    pub tsa_schedule: TsaSchedule,
    /// When false, MixUp is skipped and batches pass through unmixed.
    pub mixup: bool,
    pub extend_copies: usize,
    pub extend_policy: AugmentPolicy,
    pub augment_policy: AugmentPolicy,
    pub ema_decay: f64,
    pub batch_size: usize,
    pub total_steps: u64,
    /// Decoupled weight decay, applied per step as `theta *= 1 - weight_decay`.
    pub weight_decay: f64,
    pub learning_rate: f64,
    pub num_classes: usize,
    pub seed: u64,
    /// Labeled examples kept by the label split.
    pub n_labels: usize,
    /// Base channel width of the reference network.
    pub model_width: usize,
    /// Steps between evaluations (metrics rows). 0 evaluates only at the end.
    pub eval_interval: u64,
    /// Steps between checkpoints. 0 disables periodic checkpoints.
    pub checkpoint_interval: u64,
}

impl Default for Config {
    fn default() -> Self {
        let learning_rate = 0.002;
        Config {
            alpha: 0.75,
            gamma: 0.0,
            lambda_max: 75.0,
            lambda_rampup_steps: 16_384,
            temperature: 0.5,
            tsa_enabled: false,
            tsa_schedule: TsaSchedule::Linear,
            mixup: true,
            extend_copies: 50,
            extend_policy: AugmentPolicy::simple(4).with_cutout(16),
            augment_policy: AugmentPolicy::simple(4),
            ema_decay: 0.999,
            batch_size: 64,
            total_steps: 20_000,
            weight_decay: 0.02 * learning_rate,
            learning_rate,
            num_classes: 10,
            seed: 0,
            n_labels: 250,
            model_width: 32,
            eval_interval: 1000,
            checkpoint_interval: 0,
        }
    }
}

const SCALAR_KEYS: &[&str] = &[
    "alpha",
    "gamma",
    "lambda_max",
    "lambda_rampup_steps",
    "temperature",
    "tsa_enabled",
    "tsa_schedule",
    "mixup",
    "extend_copies",
    "ema_decay",
    "batch_size",
    "total_steps",
    "weight_decay",
    "learning_rate",
    "num_classes",
    "seed",
    "n_labels",
    "model_width",
    "eval_interval",
    "checkpoint_interval",
];

impl Config {
    /// Names of every key accepted in config files and overrides.
    pub fn known_keys() -> Vec<String> {
        let mut keys: Vec<String> = SCALAR_KEYS.iter().map(|s| s.to_string()).collect();
        for prefix in ["extend_policy", "augment_policy"] {
            for field in [
                "horizontal_flip",
                "flip_prob",
                "translate_max",
                "cutout_size",
                "fill_value",
            ] {
                keys.push(format!("{prefix}.{field}"));
            }
        }
        keys
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, field: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(field, reason))
            }
        };
        check(self.alpha > 0.0 && self.alpha.is_finite(), "alpha", "must be > 0")?;
        check((0.0..1.0).contains(&self.gamma), "gamma", "must lie in [0, 1)")?;
        check(
            self.lambda_max >= 0.0 && self.lambda_max.is_finite(),
            "lambda_max",
            "must be >= 0",
        )?;
        check(
            self.temperature > 0.0 && self.temperature.is_finite(),
            "temperature",
            "must be > 0",
        )?;
        check(
            (0.0..=1.0).contains(&self.ema_decay),
            "ema_decay",
            "must lie in [0, 1]",
        )?;
        check(self.extend_copies >= 1, "extend_copies", "must be >= 1")?;
        check(self.num_classes >= 2, "num_classes", "must be >= 2")?;
        check(self.total_steps >= 1, "total_steps", "must be >= 1")?;
        check(self.batch_size >= 1, "batch_size", "must be >= 1")?;
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate",
            "must be > 0",
        )?;
        check(
            self.weight_decay >= 0.0 && self.weight_decay < 1.0,
            "weight_decay",
            "must lie in [0, 1)",
        )?;
        check(self.model_width >= 1, "model_width", "must be >= 1")?;
        self.extend_policy.validate("extend_policy")?;
        self.augment_policy.validate("augment_policy")?;
        Ok(())
    }

    /// Flat key/value view with sorted keys.
    pub fn to_flat_json(&self) -> Map<String, Value> {
        let mut map = Map::new();
        map.insert("alpha".into(), self.alpha.into());
        map.insert("gamma".into(), self.gamma.into());
        map.insert("lambda_max".into(), self.lambda_max.into());
        map.insert(
            "lambda_rampup_steps".into(),
            self.lambda_rampup_steps.into(),
        );
        map.insert("temperature".into(), self.temperature.into());
        map.insert("tsa_enabled".into(), self.tsa_enabled.into());
        map.insert(
            "tsa_schedule".into(),
            self.tsa_schedule.to_string().into(),
        );
        map.insert("mixup".into(), self.mixup.into());
        map.insert("extend_copies".into(), self.extend_copies.into());
        self.extend_policy.insert_into("extend_policy", &mut map);
        self.augment_policy.insert_into("augment_policy", &mut map);
        map.insert("ema_decay".into(), self.ema_decay.into());
        map.insert("batch_size".into(), self.batch_size.into());
        map.insert("total_steps".into(), self.total_steps.into());
        map.insert("weight_decay".into(), self.weight_decay.into());
        map.insert("learning_rate".into(), self.learning_rate.into());
        map.insert("num_classes".into(), self.num_classes.into());
        map.insert("seed".into(), self.seed.into());
        map.insert("n_labels".into(), self.n_labels.into());
        map.insert("model_width".into(), self.model_width.into());
        map.insert("eval_interval".into(), self.eval_interval.into());
        map.insert(
            "checkpoint_interval".into(),
            self.checkpoint_interval.into(),
        );
        map
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Value::Object(self.to_flat_json()))
            .expect("config serializes");
        s.push('\n');
        s
    }

    /// Hex SHA-256 of the canonical flat serialization.
    pub fn hash(&self) -> String {
        let canonical =
            serde_json::to_string(&Value::Object(self.to_flat_json())).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Applies one key. Returns `Ok(false)` if the key is unknown.
    pub fn set_value(&mut self, key: &str, value: &Value) -> Result<bool> {
        if let Some((prefix, field)) = key.split_once('.') {
            return match prefix {
                "extend_policy" => self.extend_policy.set(prefix, field, value),
                "augment_policy" => self.augment_policy.set(prefix, field, value),
                _ => Ok(false),
            };
        }
        match key {
            "alpha" => self.alpha = as_f64(key, value)?,
            "gamma" => self.gamma = as_f64(key, value)?,
            "lambda_max" => self.lambda_max = as_f64(key, value)?,
            "lambda_rampup_steps" => self.lambda_rampup_steps = as_u64(key, value)?,
            "temperature" => self.temperature = as_f64(key, value)?,
            "tsa_enabled" => self.tsa_enabled = as_bool(key, value)?,
            "tsa_schedule" => {
                let s = value
                    .as_str()
                    .ok_or_else(|| Error::validation(key, "expected a string"))?;
                self.tsa_schedule = s.parse()?;
            }
            "mixup" => self.mixup = as_bool(key, value)?,
            "extend_copies" => self.extend_copies = as_u64(key, value)? as usize,
            "ema_decay" => self.ema_decay = as_f64(key, value)?,
            "batch_size" => self.batch_size = as_u64(key, value)? as usize,
            "total_steps" => self.total_steps = as_u64(key, value)?,
            "weight_decay" => self.weight_decay = as_f64(key, value)?,
            "learning_rate" => self.learning_rate = as_f64(key, value)?,
            "num_classes" => self.num_classes = as_u64(key, value)? as usize,
            "seed" => self.seed = as_u64(key, value)?,
            "n_labels" => self.n_labels = as_u64(key, value)? as usize,
            "model_width" => self.model_width = as_u64(key, value)? as usize,
            "eval_interval" => self.eval_interval = as_u64(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = as_u64(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies a `key=value` override. Values are parsed as JSON, falling
    /// back to a bare string (so `tsa_schedule=log` works unquoted).
    /// Unlike config files, unknown keys are an error here.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (key, raw) = spec.split_once('=').ok_or_else(|| {
            Error::validation("override", format!("expected key=value, got `{spec}`"))
        })?;
        let key = key.trim();
        let raw = raw.trim();
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        if !self.set_value(key, &value)? {
            return Err(Error::validation(key, "unknown config key"));
        }
        Ok(())
    }

    /// Builds a config from a flat JSON object. Returns the config and the
    /// list of unknown keys that were ignored.
    pub fn from_json_str(text: &str) -> Result<(Config, Vec<String>)> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("config", e))?;
        let Value::Object(map) = value else {
            return Err(Error::parse("config", "top level must be a JSON object"));
        };
        let mut config = Config::default();
        let mut unknown = Vec::new();
        for (key, value) in &map {
            if !config.set_value(key, value)? {
                unknown.push(key.clone());
            }
        }
        config.validate()?;
        Ok((config, unknown))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }
}

/// Reads and validates a config file, warning about unknown keys.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (config, unknown) = Config::from_json_str(&text)?;
    for key in unknown {
        log::warn!("{}: ignoring unknown config key `{key}`", path.display());
    }
    Ok(config)
}

fn as_f64(key: &str, value: &Value) -> Result<f64> {
    value
        .as_f64()
        .ok_or_else(|| Error::validation(key, format!("expected a number, got {value}")))
}

fn as_u64(key: &str, value: &Value) -> Result<u64> {
    if let Some(v) = value.as_u64() {
        return Ok(v);
    }
    // Accept integral floats such as 1e4.
    match value.as_f64() {
        Some(f) if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 => Ok(f as u64),
        _ => Err(Error::validation(
            key,
            format!("expected a nonnegative integer, got {value}"),
        )),
    }
}

fn as_bool(key: &str, value: &Value) -> Result<bool> {
    value
        .as_bool()
        .ok_or_else(|| Error::validation(key, format!("expected true or false, got {value}")))
}
