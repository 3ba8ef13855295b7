//! Checkpoints: `<dir>/step-<N>/` holding `params`, `ema`, `adam_m` and
//! `adam_v` as f64 tensors plus `state.json` with the step, the optimizer
//! count, the config hash and the metrics recorded so far. All random
//! streams are derived from the step, so the step is the only RNG cursor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::AdamState;
use crate::tensor_io::{read_tensor, write_tensor};

use super::{EvalRow, StepMetrics, TrainState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StateFile {
    step: u64,
    adam_t: u64,
    config_hash: String,
    history: Vec<StepMetrics>,
    evals: Vec<EvalRow>,
}

/// A training state together with the metrics that led to it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: TrainState,
    pub config_hash: String,
    pub history: Vec<StepMetrics>,
    pub evals: Vec<EvalRow>,
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step-{step}"))
}

/// Writes a checkpoint atomically (staged in a sibling directory, then
/// renamed) and returns its path.
pub fn save_checkpoint(dir: &Path, ckpt: &Checkpoint) -> Result<PathBuf> {
    let target = checkpoint_path(dir, ckpt.state.step);
    let staging = dir.join(format!(".step-{}.partial", ckpt.state.step));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let s = &ckpt.state;
    let n = s.params.len();
    write_tensor(&staging.join("params"), &[n], &s.params)?;
    write_tensor(&staging.join("ema"), &[n], &s.ema)?;
    write_tensor(&staging.join("adam_m"), &[n], &s.adam.m)?;
    write_tensor(&staging.join("adam_v"), &[n], &s.adam.v)?;
    let file = StateFile {
        step: s.step,
        adam_t: s.adam.t,
        config_hash: ckpt.config_hash.clone(),
        history: ckpt.history.clone(),
        evals: ckpt.evals.clone(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::parse("checkpoint state", e))?;
    let state_path = staging.join("state.json");
    fs::write(&state_path, text).map_err(|e| Error::io(&state_path, e))?;
    if target.exists() {
        fs::remove_dir_all(&target).map_err(|e| Error::io(&target, e))?;
    }
    fs::rename(&staging, &target).map_err(|e| Error::io(&target, e))?;
    Ok(target)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let state_path = path.join("state.json");
    let text = fs::read_to_string(&state_path).map_err(|e| Error::io(&state_path, e))?;
    let file: StateFile =
        serde_json::from_str(&text).map_err(|e| Error::parse(state_path.display().to_string(), e))?;
    let (_, params) = read_tensor::<f64>(&path.join("params"))?;
    let (_, ema) = read_tensor::<f64>(&path.join("ema"))?;
    let (_, m) = read_tensor::<f64>(&path.join("adam_m"))?;
    let (_, v) = read_tensor::<f64>(&path.join("adam_v"))?;
    if ema.len() != params.len() || m.len() != params.len() || v.len() != params.len() {
        return Err(Error::Shape(format!(
            "{}: tensors disagree on the parameter count",
            path.display()
        )));
    }
    Ok(Checkpoint {
        state: TrainState {
            params,
            ema,
            adam: AdamState { m, v, t: file.adam_t },
            step: file.step,
        },
        config_hash: file.config_hash,
        history: file.history,
        evals: file.evals,
    })
}

/// The highest-step checkpoint under `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    if !dir.exists() {
        return Ok(None);
    }
    let mut best: Option<(u64, PathBuf)> = None;
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(step) = name
            .to_str()
            .and_then(|n| n.strip_prefix("step-"))
            .and_then(|n| n.parse::<u64>().ok())
        else {
            continue;
        };
        if best.as_ref().is_none_or(|(s, _)| step > *s) {
            best = Some((step, entry.path()));
        }
    }
    Ok(best.map(|(_, p)| p))
}

/// Accepts either a checkpoint directory or a directory of checkpoints.
pub fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if path.join("state.json").exists() {
        return Ok(path.to_path_buf());
    }
    latest_checkpoint(path)?.ok_or_else(|| {
        Error::validation("resume", format!("no checkpoint found under {}", path.display()))
    })
}
