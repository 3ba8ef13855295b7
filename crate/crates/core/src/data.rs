//! In-memory image datasets and their on-disk layout.
//!
//! A dataset directory holds `images.{bin,json}` (f32, shape `[N, H, W, C]`),
//! `labels.{bin,json}` (u32, shape `[N]`) and `manifest.json` with class
//! names and optional semantic class groups.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor_io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageShape {
            height,
            width,
            channels,
        }
    }

    /// Number of scalars in one image.
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    class_names: Vec<String>,
    #[serde(default)]
    class_groups: BTreeMap<String, Vec<usize>>,
    image_shape: ImageShape,
    num_samples: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    shape: ImageShape,
    images: Vec<f32>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    class_groups: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, checking that pixel values lie in [-1, 1] and every
    /// label indexes `class_names`.
    pub fn new(
        shape: ImageShape,
        images: Vec<f32>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Shape("image shape has zero size".into()));
        }
        if images.len() != labels.len() * shape.len() {
            return Err(Error::Shape(format!(
                "{} pixels cannot hold {} images of {:?}",
                images.len(),
                labels.len(),
                shape
            )));
        }
        let k = class_names.len();
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::validation(
                "labels",
                format!("label {bad} out of range for {k} classes"),
            ));
        }
        if let Some(bad) = images
            .iter()
            .find(|v| !(v.is_finite() && (-1.0..=1.0).contains(*v)))
        {
            return Err(Error::validation(
                "images",
                format!("pixel value {bad} outside [-1, 1]"),
            ));
        }
        Ok(Dataset {
            shape,
            images,
            labels,
            class_names,
            class_groups: BTreeMap::new(),
        })
    }

    pub fn with_class_groups(mut self, groups: BTreeMap<String, Vec<usize>>) -> Result<Self> {
        for (name, members) in &groups {
            if let Some(bad) = members.iter().find(|&&c| c >= self.num_classes()) {
                return Err(Error::validation(
                    "class_groups",
                    format!("group `{name}` names class {bad} out of range"),
                ));
            }
        }
        self.class_groups = groups;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_groups(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.class_groups
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.shape.len();
        &self.images[i * n..(i + 1) * n]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    /// Indices of all samples of class `c`, in dataset order.
    pub fn class_indices(&self, c: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == c).collect()
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// SHA-256 over the image and label payloads as stored on disk.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(tensor_io::encode(&self.images));
        let labels: Vec<u32> = self.labels.iter().map(|&l| l as u32).collect();
        hasher.update(tensor_io::encode(&labels));
        hex::encode(hasher.finalize())
    }

    /// Copies the given samples (in the given order) into a new dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut images = Vec::with_capacity(indices.len() * self.shape.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::validation(
                    "indices",
                    format!("index {i} out of range for {} samples", self.len()),
                ));
            }
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            shape: self.shape,
            images,
            labels,
            class_names: self.class_names.clone(),
            class_groups: self.class_groups.clone(),
        })
    }

    /// Keeps only samples of `classes` and relabels them `0..classes.len()`
    /// in the order given.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let mut remap = vec![None; self.num_classes()];
        for (new, &old) in classes.iter().enumerate() {
            if old >= self.num_classes() {
                return Err(Error::validation(
                    "classes",
                    format!("class {old} out of range"),
                ));
            }
            remap[old] = Some(new);
        }
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for i in 0..self.len() {
            if let Some(new) = remap[self.labels[i]] {
                images.extend_from_slice(self.image(i));
                labels.push(new);
            }
        }
        let class_names = classes
            .iter()
            .map(|&c| self.class_names[c].clone())
            .collect();
        Dataset::new(self.shape, images, labels, class_names)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let n = self.len();
        let s = self.shape;
        tensor_io::write_tensor(
            &dir.join("images"),
            &[n, s.height, s.width, s.channels],
            &self.images,
        )?;
        let labels: Vec<u32> = self.labels.iter().map(|&l| l as u32).collect();
        tensor_io::write_tensor(&dir.join("labels"), &[n], &labels)?;
        let manifest = Manifest {
            class_names: self.class_names.clone(),
            class_groups: self.class_groups.clone(),
            image_shape: self.shape,
            num_samples: n,
        };
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Dataset> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))?;
        let (ishape, images) = tensor_io::read_tensor::<f32>(&dir.join("images"))?;
        let (lshape, labels) = tensor_io::read_tensor::<u32>(&dir.join("labels"))?;
        let s = manifest.image_shape;
        if ishape != [manifest.num_samples, s.height, s.width, s.channels]
            || lshape != [manifest.num_samples]
        {
            return Err(Error::Shape(format!(
                "{}: tensor shapes {ishape:?}/{lshape:?} disagree with the manifest",
                dir.display()
            )));
        }
        let labels = labels.into_iter().map(|l| l as usize).collect();
        Dataset::new(s, images, labels, manifest.class_names)?.with_class_groups(manifest.class_groups)
    }
}
