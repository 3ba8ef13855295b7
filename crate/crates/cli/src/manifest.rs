use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Succeeded,
    Failed,
}

/// Record of one command invocation, kept in its output directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<PathBuf>,
    pub config_hash: Option<String>,
    pub out_dir: PathBuf,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: RunStatus,
    pub exit_code: Option<u8>,
    pub error: Option<String>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Writes through a temporary file and a rename so readers never see a
/// partial manifest.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text).with_context(|| format!("writing {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("renaming {}", tmp.display()))
}

impl RunManifest {
    /// Creates the manifest with status `running` and writes it.
    pub fn start(
        command: &str,
        out_dir: &Path,
        config_path: Option<&Path>,
        config_hash: Option<String>,
    ) -> Result<Self> {
        let manifest = RunManifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            config_path: config_path.map(Path::to_path_buf),
            config_hash,
            out_dir: out_dir.to_path_buf(),
            started_at: now(),
            finished_at: None,
            status: RunStatus::Running,
            exit_code: None,
            error: None,
        };
        std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        manifest.write()?;
        Ok(manifest)
    }

    fn write(&self) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.out_dir.join(MANIFEST_FILE), &text)
    }

    /// Records the outcome of `result` and passes it through.
    pub fn finish<T>(mut self, result: Result<T>) -> Result<T> {
        self.finished_at = Some(now());
        match &result {
            Ok(_) => {
                self.status = RunStatus::Succeeded;
                self.exit_code = Some(0);
            }
            Err(e) => {
                self.status = RunStatus::Failed;
                self.exit_code = Some(crate::exit_code(e));
                self.error = Some(format!("{e:#}"));
            }
        }
        if let Err(e) = self.write() {
            log::warn!("could not finalize the run manifest: {e:#}");
        }
        result
    }

    #[cfg(test)]
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
