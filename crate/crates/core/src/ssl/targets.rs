use crate::augment::augment;
use crate::config::AugmentPolicy;
use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::rng::RngStream;

use super::prob::Probs;
use super::sharpen::sharpen_row;

/// Guessed labels for a batch of unlabeled images.
#[derive(Clone, Debug)]
pub struct GeneratedTargets {
    /// First augmentation of each image, row-major `[n, H, W, C]`; these are
    /// the inputs used downstream.
    pub inputs: Vec<f64>,
    /// `sharpen((f(aug1) + f(aug2)) / 2, T)` per image.
    pub targets: Probs,
}

impl GeneratedTargets {
    /// Confidence of each target, its largest entry.
    pub fn confidences(&self) -> Vec<f64> {
        self.targets
            .rows()
            .map(|r| r.iter().copied().fold(f64::MIN, f64::max))
            .collect()
    }
}

/// Augments every image twice, averages the classifier's predictions over
/// the two copies and sharpens the average.
///
/// `predict` receives a row-major batch and returns one distribution per
/// image. Targets are plain values: nothing computed here participates in
/// a gradient. Image `i` uses `stream.derive(2i)` and `stream.derive(2i+1)`
/// for its two augmentations.
pub fn generate_targets<F>(
    mut predict: F,
    images: &[f32],
    shape: ImageShape,
    policy: &AugmentPolicy,
    temperature: f64,
    stream: &RngStream,
) -> Result<GeneratedTargets>
where
    F: FnMut(&[f64]) -> Result<Probs>,
{
    let len = shape.len();
    if !images.len().is_multiple_of(len) {
        return Err(Error::Shape(format!(
            "{} values is not a whole number of {shape:?} images",
            images.len()
        )));
    }
    let n = images.len() / len;
    let mut first = Vec::with_capacity(images.len());
    let mut second = Vec::with_capacity(images.len());
    for (i, image) in images.chunks_exact(len).enumerate() {
        let mut rng = stream.derive(2 * i as u64).rng();
        first.extend(augment(image, shape, policy, &mut rng)?.into_iter().map(f64::from));
        let mut rng = stream.derive(2 * i as u64 + 1).rng();
        second.extend(augment(image, shape, policy, &mut rng)?.into_iter().map(f64::from));
    }
    let p1 = predict(&first)?;
    let p2 = predict(&second)?;
    if p1.len() != n || p2.len() != n || p1.num_classes() != p2.num_classes() {
        return Err(Error::InvalidDistribution(format!(
            "classifier returned {} and {} rows for {n} images",
            p1.len(),
            p2.len()
        )));
    }
    p1.validate()?;
    p2.validate()?;
    let k = p1.num_classes();
    let mut data: Vec<f64> = p1
        .data()
        .iter()
        .zip(p2.data())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    for row in data.chunks_exact_mut(k) {
        sharpen_row(row, temperature)?;
    }
    Ok(GeneratedTargets {
        inputs: first,
        targets: Probs::new_unchecked(k, data)?,
    })
}
