use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::Classifier;

const EVAL_BATCH: usize = 256;

/// Predicted class of every image in `dataset`, without augmentation.
pub fn predict_labels<M: Classifier>(model: &M, params: &[f64], dataset: &Dataset) -> Result<Vec<usize>> {
    let len = dataset.shape().len();
    let mut out = Vec::with_capacity(dataset.len());
    for chunk in dataset.images().chunks(EVAL_BATCH * len) {
        let x: Vec<f64> = chunk.iter().map(|&v| f64::from(v)).collect();
        let probs = model.forward(params, &x)?;
        out.extend((0..probs.len()).map(|i| probs.argmax(i)));
    }
    Ok(out)
}

/// Fraction of `predicted` that differs from `labels`.
pub fn error_rate(predicted: &[usize], labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::validation("test", "cannot evaluate on an empty set"));
    }
    if predicted.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let wrong = predicted.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// Classification error of `params` on `dataset`, in [0, 1].
pub fn evaluate<M: Classifier>(model: &M, params: &[f64], dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::validation("test", "cannot evaluate on an empty set"));
    }
    error_rate(&predict_labels(model, params, dataset)?, dataset.labels())
}
