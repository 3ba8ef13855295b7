use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use realmix::experiments::desk_config;
use realmix::{load_config, Config, Dataset};
use sha2::{Digest, Sha256};

use crate::Global;

/// Bad command-line input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Base config (`--config`, else `fallback` if it exists, else the desk
/// defaults), then `--seed`, then every `--override`, then validation.
pub fn resolve_config(global: &Global, fallback: Option<&Path>) -> Result<(Config, Option<PathBuf>)> {
    let source = match (&global.config, fallback) {
        (Some(path), _) => Some(path.clone()),
        (None, Some(path)) if path.exists() => Some(path.to_path_buf()),
        _ => None,
    };
    let mut config = match &source {
        Some(path) => {
            require_exists(path, "config file")?;
            load_config(path)?
        }
        None => desk_config(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    for o in &global.overrides {
        config.apply_override(o)?;
    }
    config.validate()?;
    Ok((config, source))
}

pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(usage(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

pub fn require_out(global: &Global) -> Result<&Path> {
    global
        .out
        .as_deref()
        .ok_or_else(|| usage("this command needs --out <DIR>"))
}

/// Refuses to reuse a directory that already has content.
pub fn ensure_fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))?;
        if entries.next().is_some() {
            return Err(usage(format!(
                "{} already exists and is not empty; choose another --out",
                dir.display()
            )));
        }
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Writes `text` to `path` unless it already holds exactly that text.
/// Different existing content is an error rather than an overwrite.
pub fn write_or_match(path: &Path, text: &str) -> Result<()> {
    if path.exists() {
        let existing = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if existing == text {
            return Ok(());
        }
        return Err(usage(format!(
            "{} exists with different content; refusing to overwrite",
            path.display()
        )));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn sha256_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A dataset root holds `train/` and optionally `test/`.
pub fn train_dir(root: &Path) -> PathBuf {
    root.join("train")
}

pub fn test_dir(root: &Path) -> PathBuf {
    root.join("test")
}

pub fn load_train(root: &Path) -> Result<Dataset> {
    let dir = train_dir(root);
    require_exists(&dir.join("manifest.json"), "dataset")?;
    Ok(Dataset::load(&dir)?)
}

/// `--test` if given, else `<data>/test` if present.
pub fn load_test(root: &Path, explicit: Option<&Path>) -> Result<Option<Dataset>> {
    let dir = match explicit {
        Some(dir) => dir.to_path_buf(),
        None => test_dir(root),
    };
    if !dir.join("manifest.json").exists() {
        if explicit.is_some() {
            return Err(usage(format!("test set {} does not exist", dir.display())));
        }
        return Ok(None);
    }
    Ok(Some(Dataset::load(&dir)?))
}

/// Resolves `--classes 0,1,2` or a dataset class group name.
pub fn resolve_classes(data: &Dataset, spec: &str) -> Result<Vec<usize>> {
    if let Some(group) = data.class_groups().get(spec) {
        return Ok(group.clone());
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("`{spec}` is neither a class group nor a class list")))
        })
        .collect()
}

pub fn percent(error: f64) -> String {
    format!("{:.2}%", 100.0 * error)
}
