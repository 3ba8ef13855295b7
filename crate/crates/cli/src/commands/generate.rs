use anyhow::{Context, Result};
use clap::Args;
use realmix::experiments::desk_synth_spec;
use realmix::synth::{generate_synthetic, SynthSpec};
use serde_json::Value;

use crate::manifest::RunManifest;
use crate::util::{require_out, test_dir, train_dir, usage, write_or_match};
use crate::Global;

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Generator field `key=value` (e.g. `noise=0.2`, `train_per_class=100`).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

fn spec_from(args: &GenerateArgs, seed: Option<u64>) -> Result<SynthSpec> {
    let mut value = serde_json::to_value(desk_synth_spec()).expect("spec serializes");
    for s in &args.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| usage(format!("expected key=value, got `{s}`")))?;
        let slot = value
            .get_mut(k.trim())
            .ok_or_else(|| usage(format!("unknown generator field `{k}`")))?;
        *slot = serde_json::from_str(v.trim()).map_err(|_| usage(format!("`{v}` is not a valid value for `{k}`")))?;
    }
    if let Some(seed) = seed {
        value["seed"] = Value::from(seed);
    }
    serde_json::from_value(value).map_err(|e| usage(format!("invalid generator settings: {e}")))
}

pub fn run(global: &Global, args: &GenerateArgs) -> Result<()> {
    let out = require_out(global)?;
    let spec = spec_from(args, global.seed)?;
    let mut spec_text = serde_json::to_string_pretty(&spec).expect("spec serializes");
    spec_text.push('\n');
    // The same spec always yields the same data, so a matching spec file
    // means the directory already holds this dataset.
    write_or_match(&out.join("synth.json"), &spec_text)?;
    let manifest = RunManifest::start("generate", out, None, None)?;
    let result = (|| {
        let (train, test) = generate_synthetic(&spec)?;
        for (name, data, dir) in [("train", &train, train_dir(out)), ("test", &test, test_dir(out))] {
            let done = dir.join("manifest.json").exists()
                && realmix::Dataset::load(&dir).map(|d| d.checksum() == data.checksum()).unwrap_or(false);
            if !done {
                data.save(&dir).with_context(|| format!("saving {}", dir.display()))?;
            }
            println!(
                "{name:<6} {}  samples {}  sha256 {}",
                dir.display(),
                data.len(),
                data.checksum()
            );
        }
        Ok(())
    })();
    manifest.finish(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_and_seed_apply() {
        let args = GenerateArgs {
            set: vec!["noise=0.3".into(), "train_per_class=7".into()],
        };
        let spec = spec_from(&args, Some(5)).unwrap();
        assert_eq!((spec.noise, spec.train_per_class, spec.seed), (0.3, 7, 5));
        let bad = GenerateArgs {
            set: vec!["colour=1".into()],
        };
        assert!(spec_from(&bad, None).is_err());
    }
}
