//! Reproducible labeled/unlabeled partitions of a dataset.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamId};
use crate::tensor_io::sha256_hex;

/// Mismatch percentages accepted by [`make_mismatch_split`].
pub const MISMATCH_LEVELS: [u32; 5] = [0, 25, 50, 75, 100];

/// Number of classes the unlabeled pool of a mismatch split is drawn from.
pub const MISMATCH_UNLABELED_CLASSES: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled: Vec<usize>,
    pub unlabeled: Vec<usize>,
    pub seed: u64,
    /// Checksum of the dataset the indices refer to.
    pub source_checksum: String,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    labeled: Vec<usize>,
    unlabeled: Vec<usize>,
    seed: u64,
    source_checksum: String,
    checksum: String,
}

impl SplitSpec {
    /// Checks that both index sets are in range and disjoint.
    pub fn validate(&self, dataset_len: usize) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (field, indices) in [("labeled", &self.labeled), ("unlabeled", &self.unlabeled)] {
            for &i in indices {
                if i >= dataset_len {
                    return Err(Error::validation(
                        field,
                        format!("index {i} out of range for {dataset_len} samples"),
                    ));
                }
                if !seen.insert(i) {
                    return Err(Error::validation(field, format!("index {i} appears twice")));
                }
            }
        }
        Ok(())
    }

    fn content_checksum(&self) -> String {
        let canonical = serde_json::to_string(self).expect("split serializes");
        sha256_hex(canonical.as_bytes())
    }

    pub fn to_file_string(&self) -> String {
        let file = SplitFile {
            labeled: self.labeled.clone(),
            unlabeled: self.unlabeled.clone(),
            seed: self.seed,
            source_checksum: self.source_checksum.clone(),
            checksum: self.content_checksum(),
        };
        let mut text = serde_json::to_string(&file).expect("split serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        std::fs::write(path, self.to_file_string()).map_err(|e| Error::io(path, e))
    }

    /// Loads a split file. Unparsable or tampered content is reported as a
    /// checksum error.
    pub fn load(path: &Path) -> Result<SplitSpec> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SplitFile = serde_json::from_str(&text).map_err(|e| Error::Checksum {
            path: path.into(),
            reason: format!("unreadable split file: {e}"),
        })?;
        let spec = SplitSpec {
            labeled: file.labeled,
            unlabeled: file.unlabeled,
            seed: file.seed,
            source_checksum: file.source_checksum,
        };
        let actual = spec.content_checksum();
        if actual != file.checksum {
            return Err(Error::Checksum {
                path: path.into(),
                reason: format!("recorded {}, content hashes to {actual}", file.checksum),
            });
        }
        Ok(spec)
    }
}

/// Class members in a seeded order that depends only on (seed, class).
fn shuffled_class(dataset: &Dataset, class: usize, seed: u64) -> Vec<usize> {
    let mut members = dataset.class_indices(class);
    let mut rng = RngStream::new(seed, StreamId::Split).derive(class as u64).rng();
    members.shuffle(&mut rng);
    members
}

/// Keeps `n_labels` labels, `n_labels / K` per class; everything else
/// becomes unlabeled.
pub fn make_label_split(dataset: &Dataset, n_labels: usize, seed: u64) -> Result<SplitSpec> {
    let k = dataset.num_classes();
    if n_labels == 0 || n_labels > dataset.len() {
        return Err(Error::validation(
            "n_labels",
            format!("must lie in 1..={}, got {n_labels}", dataset.len()),
        ));
    }
    if !n_labels.is_multiple_of(k) {
        return Err(Error::validation(
            "n_labels",
            format!("{n_labels} labels cannot be split evenly over {k} classes"),
        ));
    }
    let per_class = n_labels / k;
    let mut labeled = Vec::with_capacity(n_labels);
    for class in 0..k {
        let members = shuffled_class(dataset, class, seed);
        if members.len() < per_class {
            return Err(Error::validation(
                "n_labels",
                format!(
                    "class {class} has {} samples, {per_class} needed",
                    members.len()
                ),
            ));
        }
        labeled.extend_from_slice(&members[..per_class]);
    }
    labeled.sort_unstable();
    let chosen: BTreeSet<usize> = labeled.iter().copied().collect();
    let unlabeled = (0..dataset.len()).filter(|i| !chosen.contains(i)).collect();
    Ok(SplitSpec {
        labeled,
        unlabeled,
        seed,
        source_checksum: dataset.checksum(),
    })
}

/// Unlabeled classes chosen for a mismatch level: `(in_set, out_of_set)`.
pub fn mismatch_unlabeled_classes(
    labeled_classes: &[usize],
    out_classes: &[usize],
    mismatch_pct: u32,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !MISMATCH_LEVELS.contains(&mismatch_pct) {
        return Err(Error::validation(
            "mismatch_pct",
            format!("{mismatch_pct} is not one of {MISMATCH_LEVELS:?}"),
        ));
    }
    let n_out = (MISMATCH_UNLABELED_CLASSES as f64 * mismatch_pct as f64 / 100.0).round() as usize;
    let n_in = MISMATCH_UNLABELED_CLASSES - n_out;
    if out_classes.len() < MISMATCH_UNLABELED_CLASSES {
        return Err(Error::validation(
            "labeled_classes",
            format!(
                "need at least {MISMATCH_UNLABELED_CLASSES} classes outside the labeled set, have {}",
                out_classes.len()
            ),
        ));
    }
    if labeled_classes.len() < n_in {
        return Err(Error::validation(
            "labeled_classes",
            format!("need at least {n_in} labeled classes"),
        ));
    }
    // Orders are fixed per seed so that levels nest: a level's classes are a
    // prefix of each shuffled list.
    let base = RngStream::new(seed, StreamId::Split);
    let mut inside = labeled_classes.to_vec();
    inside.shuffle(&mut base.derive(u64::MAX).rng());
    let mut outside = out_classes.to_vec();
    outside.shuffle(&mut base.derive(u64::MAX - 1).rng());
    inside.truncate(n_in);
    outside.truncate(n_out);
    Ok((inside, outside))
}

/// Distribution-mismatch split: `labels_per_class` labels from each of
/// `labeled_classes`; the unlabeled pool comes from four classes of which
/// `round(4 * mismatch_pct / 100)` lie outside the labeled set. Every
/// unlabeled class contributes the same number of samples.
pub fn make_mismatch_split(
    dataset: &Dataset,
    labeled_classes: &[usize],
    labels_per_class: usize,
    mismatch_pct: u32,
    seed: u64,
) -> Result<SplitSpec> {
    let k = dataset.num_classes();
    let labeled_set: BTreeSet<usize> = labeled_classes.iter().copied().collect();
    if labeled_set.len() != labeled_classes.len() {
        return Err(Error::validation("labeled_classes", "duplicate class"));
    }
    if let Some(&bad) = labeled_set.iter().find(|&&c| c >= k) {
        return Err(Error::validation(
            "labeled_classes",
            format!("class {bad} out of range"),
        ));
    }
    if labels_per_class == 0 {
        return Err(Error::validation("labels_per_class", "must be >= 1"));
    }
    let out_classes: Vec<usize> = (0..k).filter(|c| !labeled_set.contains(c)).collect();
    let (inside, outside) =
        mismatch_unlabeled_classes(labeled_classes, &out_classes, mismatch_pct, seed)?;

    let mut labeled = Vec::new();
    let mut remaining = vec![Vec::new(); k];
    for &class in labeled_classes {
        let members = shuffled_class(dataset, class, seed);
        if members.len() < labels_per_class {
            return Err(Error::validation(
                "labels_per_class",
                format!(
                    "class {class} has {} samples, {labels_per_class} needed",
                    members.len()
                ),
            ));
        }
        labeled.extend_from_slice(&members[..labels_per_class]);
        remaining[class] = members[labels_per_class..].to_vec();
    }
    for &class in &outside {
        remaining[class] = shuffled_class(dataset, class, seed);
    }
    let pool_classes: Vec<usize> = inside.iter().chain(&outside).copied().collect();
    let per_class = pool_classes
        .iter()
        .map(|&c| remaining[c].len())
        .min()
        .unwrap_or(0);
    if per_class == 0 {
        return Err(Error::validation(
            "labels_per_class",
            "no unlabeled samples left in at least one pool class",
        ));
    }
    let mut unlabeled = Vec::with_capacity(per_class * pool_classes.len());
    for &class in &pool_classes {
        unlabeled.extend_from_slice(&remaining[class][..per_class]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    Ok(SplitSpec {
        labeled,
        unlabeled,
        seed,
        source_checksum: dataset.checksum(),
    })
}
