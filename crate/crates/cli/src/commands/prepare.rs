use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use realmix::augment::{extend_cache_key, extend_cache_path, extend_cached};
use realmix::experiments::default_gamma_map;
use realmix::rng::{RngStream, StreamId};
use realmix::tensor_io::read_header;
use realmix::train::split_data;
use realmix::{make_label_split, make_mismatch_split};
use serde::{Deserialize, Serialize};

use crate::manifest::RunManifest;
use crate::util::{load_train, require_out, resolve_classes, resolve_config, sha256_text, usage, write_or_match};
use crate::Global;

pub const SPLIT_FILE: &str = "split.json";
pub const CONFIG_FILE: &str = "config.json";
pub const PREPARE_FILE: &str = "prepare.json";
pub const EXTEND_DIR: &str = "extend-cache";

#[derive(Args, Debug)]
pub struct PrepareArgs {
    /// Dataset root containing `train/`.
    #[arg(long)]
    pub data: PathBuf,
    /// Total labels, spread evenly over the classes.
    #[arg(long, conflicts_with = "mismatch", required_unless_present = "mismatch")]
    pub labels: Option<usize>,
    /// Percentage of the unlabeled pool drawn from classes without labels.
    #[arg(long)]
    pub mismatch: Option<u32>,
    /// OOD mask fraction stored in the emitted config (mismatch splits).
    /// Defaults to the standard value for the level.
    #[arg(long, requires = "mismatch")]
    pub gamma: Option<f64>,
    /// Labeled classes of a mismatch split: a class group or a list.
    #[arg(long, default_value = "animal")]
    pub labeled_classes: String,
    #[arg(long, default_value_t = 25)]
    pub labels_per_class: usize,
    /// Skip building the extended unlabeled pool.
    #[arg(long)]
    pub no_extend: bool,
}

/// What `train --prepared` needs besides the split and the config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    pub data: PathBuf,
    pub dataset_checksum: String,
    /// Classes kept (and relabeled in this order) for mismatch splits.
    pub labeled_classes: Option<Vec<usize>>,
    pub mismatch: Option<u32>,
}

impl Prepared {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(PREPARE_FILE);
        crate::util::require_exists(&path, "prepared directory")?;
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }
}

fn to_text<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    text
}

pub fn run(global: &Global, args: &PrepareArgs) -> Result<()> {
    let out = require_out(global)?;
    let data = load_train(&args.data)?;
    let (mut config, config_path) = resolve_config(global, None)?;
    let seed = config.seed;
    let (split, labeled_classes) = match (args.labels, args.mismatch) {
        (Some(n), _) => {
            config.n_labels = n;
            config.num_classes = data.num_classes();
            (make_label_split(&data, n, seed)?, None)
        }
        (None, Some(level)) => {
            let classes = resolve_classes(&data, &args.labeled_classes)?;
            let split = make_mismatch_split(&data, &classes, args.labels_per_class, level, seed)?;
            config.gamma = match args.gamma {
                Some(g) => g,
                None => *default_gamma_map().get(&level).ok_or_else(|| usage(format!("no default gamma for level {level}")))?,
            };
            config.num_classes = classes.len();
            config.n_labels = classes.len() * args.labels_per_class;
            (split, Some(classes))
        }
        (None, None) => unreachable!("clap requires --labels or --mismatch"),
    };
    config.validate()?;

    let data_path = std::fs::canonicalize(&args.data).unwrap_or_else(|_| args.data.clone());
    let prepared = Prepared {
        data: data_path,
        dataset_checksum: data.checksum(),
        labeled_classes,
        mismatch: args.mismatch,
    };
    let files = [
        (out.join(SPLIT_FILE), split.to_file_string()),
        (out.join(CONFIG_FILE), config.to_json_string()),
        (out.join(PREPARE_FILE), to_text(&prepared)),
    ];
    // Check every file before writing any, so a conflict leaves nothing half-done.
    for (path, text) in &files {
        if path.exists() && std::fs::read_to_string(path)? != *text {
            return Err(usage(format!(
                "{} exists with different content; refusing to overwrite",
                path.display()
            )));
        }
    }
    let manifest = RunManifest::start("prepare", out, config_path.as_deref(), Some(config.hash()))?;
    let result = (|| {
        for (path, text) in &files {
            write_or_match(path, text)?;
        }
        println!("split   {}  sha256 {}", files[0].0.display(), sha256_text(&files[0].1));
        println!("config  {}  sha256 {}", files[1].0.display(), sha256_text(&files[1].1));
        println!(
            "labels  {} labeled, {} unlabeled",
            split.labeled.len(),
            split.unlabeled.len()
        );
        if !args.no_extend {
            let (_, unlabeled) = split_data(&data, &split)?;
            let cache = out.join(EXTEND_DIR);
            let stream = RngStream::new(config.seed, StreamId::Extend);
            extend_cached(
                Some(&cache),
                &unlabeled,
                data.shape(),
                config.extend_copies,
                &config.extend_policy,
                &stream,
            )?;
            let key = extend_cache_key(
                &unlabeled,
                data.shape(),
                config.extend_copies,
                &config.extend_policy,
                config.seed,
            );
            let stem = extend_cache_path(&cache, &key);
            let header = read_header(&stem)?;
            println!(
                "extend  {}  {} copies  sha256 {}",
                stem.display(),
                config.extend_copies,
                header.checksum
            );
        }
        Ok(())
    })();
    manifest.finish(result)
}
