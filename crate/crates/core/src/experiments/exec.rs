//! Runs independent training arms, optionally in parallel, with a result
//! cache keyed by everything that determines an arm's outcome.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::config::Config;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::reference_model;
use crate::tensor_io::encode;
use crate::train::{evaluate, train, train_supervised, write_file, TrainOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArmKind {
    RealMix,
    Supervised,
}

/// Test errors of finished arms, keyed by a digest of their inputs.
/// Optionally mirrored to a JSON file so reruns skip finished work.
#[derive(Debug, Default)]
pub struct RunCache {
    map: Mutex<BTreeMap<String, f64>>,
    path: Option<PathBuf>,
}

impl RunCache {
    pub fn in_memory() -> Self {
        RunCache::default()
    }

    /// Loads `path` if it exists; later inserts are written back to it.
    pub fn open(path: PathBuf) -> Result<Self> {
        let map = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?
        } else {
            BTreeMap::new()
        };
        Ok(RunCache {
            map: Mutex::new(map),
            path: Some(path),
        })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.map.lock().expect("cache lock").get(key).copied()
    }

    pub fn insert(&self, key: String, error: f64) -> Result<()> {
        let mut map = self.map.lock().expect("cache lock");
        map.insert(key, error);
        if let Some(path) = &self.path {
            let text = serde_json::to_string_pretty(&*map).expect("cache serializes");
            write_file(path, &text)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Settings shared by every runner.
#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Arms trained concurrently.
    pub jobs: usize,
    pub extend_cache: Option<PathBuf>,
    pub cache: Option<Arc<RunCache>>,
    /// Adds an arm trained on every label of the dataset.
    pub include_fully_supervised: bool,
    /// When set, each arm's metrics CSV is written under this directory.
    pub runs_dir: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 1,
            extend_cache: None,
            cache: None,
            include_fully_supervised: false,
            runs_dir: None,
        }
    }
}

/// One training run whose EMA test error becomes one entry of a report.
#[derive(Clone, Debug)]
pub struct ArmJob {
    pub arm: String,
    pub condition: String,
    pub x: Option<f64>,
    pub seed: u64,
    pub kind: ArmKind,
    pub config: Config,
    pub labeled: Arc<Dataset>,
    pub unlabeled: Arc<Vec<f32>>,
    pub test: Arc<Dataset>,
    pub init: Option<Arc<Vec<f64>>>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl ArmJob {
    /// Digest of everything that determines the result.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("{:?}\n", self.kind));
        h.update(self.config.hash());
        h.update(self.labeled.checksum());
        if self.kind == ArmKind::RealMix {
            h.update(digest(&encode(&self.unlabeled)));
        }
        h.update(self.test.checksum());
        if let Some(init) = &self.init {
            h.update(digest(&encode(init)));
        }
        hex::encode(h.finalize())
    }

    fn run(&self, options: &RunOptions) -> Result<f64> {
        let model = reference_model(self.labeled.shape(), self.config.num_classes, self.config.model_width)?;
        let metrics_csv = options.runs_dir.as_ref().map(|d| {
            d.join(format!(
                "{}__{}__seed{}.csv",
                sanitize(&self.arm),
                sanitize(&self.condition),
                self.seed
            ))
        });
        let train_options = TrainOptions {
            extend_cache: options.extend_cache.clone(),
            init_params: self.init.as_ref().map(|p| p.to_vec()),
            metrics_csv,
            ..Default::default()
        };
        let outcome = match self.kind {
            ArmKind::RealMix => train(
                &model,
                &self.config,
                &self.labeled,
                &self.unlabeled,
                None,
                &train_options,
            )?,
            ArmKind::Supervised => {
                let out = train_supervised(&model, &self.config, &self.labeled, None, &train_options)?;
                debug_assert_eq!(out.unlabeled_batches, 0);
                out
            }
        };
        evaluate(&model, &outcome.state.ema, &self.test)
    }
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Runs every job and returns their test errors in job order. Jobs with
/// identical keys run once.
pub fn execute(jobs: &[ArmJob], options: &RunOptions) -> Result<Vec<f64>> {
    let keys: Vec<String> = jobs.iter().map(ArmJob::key).collect();
    let mut unique: Vec<usize> = Vec::new();
    let mut first_of: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, key) in keys.iter().enumerate() {
        if !first_of.contains_key(key.as_str()) {
            first_of.insert(key, i);
            unique.push(i);
        }
    }
    let results: Vec<Mutex<Option<Result<f64>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let total = unique.len();
    let worker = || loop {
        let n = next.fetch_add(1, Ordering::SeqCst);
        if n >= total {
            break;
        }
        let i = unique[n];
        let job = &jobs[i];
        let result = match options.cache.as_ref().and_then(|c| c.get(&keys[i])) {
            Some(hit) => {
                log::info!("[{}/{total}] {} {} seed={} cached error={hit:.4}", n + 1, job.arm, job.condition, job.seed);
                Ok(hit)
            }
            None => {
                let start = Instant::now();
                let r = job.run(options);
                if let Ok(e) = &r {
                    log::info!(
                        "[{}/{total}] {} {} seed={} error={e:.4} ({:.1}s)",
                        n + 1,
                        job.arm,
                        job.condition,
                        job.seed,
                        start.elapsed().as_secs_f64()
                    );
                    if let Some(cache) = &options.cache {
                        if let Err(err) = cache.insert(keys[i].clone(), *e) {
                            log::warn!("could not update the run cache: {err}");
                        }
                    }
                }
                r
            }
        };
        *results[i].lock().expect("result lock") = Some(result);
    };
    let threads = options.jobs.clamp(1, total.max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }
    let mut values = vec![f64::NAN; jobs.len()];
    for &i in &unique {
        match results[i].lock().expect("result lock").take() {
            Some(Ok(e)) => values[i] = e,
            Some(Err(e)) => {
                log::error!("{} {} seed={} failed", jobs[i].arm, jobs[i].condition, jobs[i].seed);
                return Err(e);
            }
            None => unreachable!("every unique job ran"),
        }
    }
    Ok(keys.iter().map(|k| values[first_of[k.as_str()]]).collect())
}
