//! Classifiers: the pluggable interface, a flat named parameter layout and
//! the reference networks.

mod gemm;
mod sequential;

pub use gemm::gemm;
pub use sequential::{Sequential, SequentialBuilder, Tape};

use serde::{Deserialize, Serialize};

use crate::data::ImageShape;
use crate::error::{Error, Result};
use crate::ssl::Probs;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed back to back into one flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    specs: Vec<ParamSpec>,
    total: usize,
}

impl ParamLayout {
    /// Appends a tensor and returns its offset.
    pub fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.total;
        let spec = ParamSpec {
            name,
            shape,
            offset,
        };
        self.total += spec.len();
        self.specs.push(spec);
        offset
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// A differentiable image classifier with a softmax output.
///
/// Parameters are owned by the caller as a flat vector laid out by
/// [`Classifier::layout`]; the model itself is immutable.
pub trait Classifier: Send + Sync {
    /// Activations recorded by a training-mode forward pass.
    type Tape;

    fn num_classes(&self) -> usize;
    fn input_shape(&self) -> ImageShape;
    fn layout(&self) -> &ParamLayout;

    /// Deterministic initial parameters for `seed`.
    fn init_params(&self, seed: u64) -> Vec<f64>;

    /// Evaluation-mode forward pass over a row-major `[n, H, W, C]` batch.
    fn forward(&self, params: &[f64], inputs: &[f64]) -> Result<Probs>;

    /// Training-mode forward pass that records what `backward` needs.
    fn forward_train(&self, params: &[f64], inputs: &[f64]) -> Result<(Probs, Self::Tape)>;

    /// Gradient of a scalar loss with respect to the parameters, given the
    /// loss gradient with respect to the output probabilities.
    fn backward(&self, params: &[f64], tape: &Self::Tape, d_probs: &[f64]) -> Result<Vec<f64>>;

    fn num_params(&self) -> usize {
        self.layout().len()
    }
}

/// The desk-scale reference network:
/// `conv(w) relu conv(w) relu pool conv(2w) relu pool dense(K)`.
pub fn reference_model(input: ImageShape, num_classes: usize, width: usize) -> Result<Sequential> {
    if num_classes < 2 {
        return Err(Error::validation("num_classes", "must be >= 2"));
    }
    if width == 0 {
        return Err(Error::validation("model_width", "must be >= 1"));
    }
    if input.height < 4 || input.width < 4 {
        return Err(Error::validation(
            "image_shape",
            "reference model needs images of at least 4x4",
        ));
    }
    SequentialBuilder::new(input)
        .conv3x3("conv1", width)
        .relu()
        .conv3x3("conv2", width)
        .relu()
        .max_pool2()
        .conv3x3("conv3", 2 * width)
        .relu()
        .max_pool2()
        .dense("head", num_classes, 1.0)
        .build()
}

/// Builds the reference network and its seeded initial parameters.
pub fn build_reference_model(
    input: ImageShape,
    num_classes: usize,
    width: usize,
    seed: u64,
) -> Result<(Sequential, Vec<f64>)> {
    let model = reference_model(input, num_classes, width)?;
    let params = model.init_params(seed);
    Ok((model, params))
}

/// A one-hidden-layer perceptron, handy for small checks.
pub fn mlp(input: ImageShape, hidden: usize, num_classes: usize) -> Result<Sequential> {
    SequentialBuilder::new(input)
        .dense("hidden", hidden, 2.0)
        .relu()
        .dense("head", num_classes, 1.0)
        .build()
}

/// Copies every tensor of `src` into `dst` whose name and shape match,
/// skipping names that start with any of `skip`. Returns the names copied.
pub fn transfer_params(
    src_layout: &ParamLayout,
    src: &[f64],
    dst_layout: &ParamLayout,
    dst: &mut [f64],
    skip: &[&str],
) -> Vec<String> {
    let mut copied = Vec::new();
    for spec in dst_layout.specs() {
        if skip.iter().any(|p| spec.name.starts_with(p)) {
            continue;
        }
        if let Some(s) = src_layout.get(&spec.name) {
            if s.shape == spec.shape {
                dst[spec.range()].copy_from_slice(&src[s.range()]);
                copied.push(spec.name.clone());
            }
        }
    }
    copied
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{RngStream, StreamId};
    use rand::Rng;

    fn inputs(n: usize, shape: ImageShape, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, StreamId::Init).rng();
        (0..n * shape.len()).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Central-difference check of `backward` for a random linear functional
    /// of the output probabilities.
    fn check_gradient<M: Classifier>(model: &M, params: &[f64], x: &[f64], seed: u64) {
        let mut rng = RngStream::new(seed, StreamId::Mixup).rng();
        let (probs, tape) = model.forward_train(params, x).unwrap();
        let weights: Vec<f64> = (0..probs.data().len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let objective = |p: &[f64]| -> f64 {
            let out = model.forward(p, x).unwrap();
            out.data().iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let grad = model.backward(params, &tape, &weights).unwrap();
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..params.len() {
            let mut p = params.to_vec();
            p[j] += h;
            let up = objective(&p);
            p[j] -= 2.0 * h;
            let down = objective(&p);
            let fd = (up - down) / (2.0 * h);
            let err = (fd - grad[j]).abs() / (fd.abs() + grad[j].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn reference_model_gradient_matches_finite_differences() {
        let shape = ImageShape::new(6, 6, 2);
        let model = reference_model(shape, 3, 2).unwrap();
        assert!(model.num_params() < 1000);
        for seed in 0..3 {
            let params = model.init_params(seed);
            check_gradient(&model, &params, &inputs(3, shape, seed), seed);
        }
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let shape = ImageShape::new(3, 3, 1);
        let model = mlp(shape, 5, 4).unwrap();
        let params = model.init_params(1);
        check_gradient(&model, &params, &inputs(4, shape, 2), 3);
    }

    #[test]
    fn deterministic_init_and_valid_outputs() {
        let shape = ImageShape::new(8, 8, 1);
        let (model, a) = build_reference_model(shape, 10, 4, 42).unwrap();
        let (_, b) = build_reference_model(shape, 10, 4, 42).unwrap();
        let (_, c) = build_reference_model(shape, 10, 4, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let probs = model.forward(&a, &inputs(7, shape, 0)).unwrap();
        assert_eq!(probs.len(), 7);
        probs.validate().unwrap();
    }

    #[test]
    fn train_and_eval_forward_agree() {
        let shape = ImageShape::new(8, 8, 3);
        let (model, params) = build_reference_model(shape, 5, 3, 1).unwrap();
        let x = inputs(4, shape, 9);
        let eval = model.forward(&params, &x).unwrap();
        let (train, _) = model.forward_train(&params, &x).unwrap();
        assert_eq!(eval, train);
    }

    #[test]
    fn rejects_bad_configurations() {
        let shape = ImageShape::new(8, 8, 1);
        assert!(reference_model(shape, 1, 4).is_err());
        assert!(reference_model(shape, 10, 0).is_err());
        assert!(reference_model(ImageShape::new(3, 3, 1), 10, 4).is_err());
        let model = reference_model(shape, 3, 2).unwrap();
        let params = model.init_params(0);
        assert!(model.forward(&params, &[0.0; 65]).is_err());
        assert!(model.forward(&params[1..], &[0.0; 64]).is_err());
    }

    #[test]
    fn transfer_skips_the_head() {
        let shape = ImageShape::new(8, 8, 1);
        let (src_model, src) = build_reference_model(shape, 4, 2, 1).unwrap();
        let (dst_model, mut dst) = build_reference_model(shape, 6, 2, 2).unwrap();
        let copied = transfer_params(
            src_model.layout(),
            &src,
            dst_model.layout(),
            &mut dst,
            &["head"],
        );
        assert_eq!(copied.len(), 6);
        let conv = dst_model.layout().get("conv2.weight").unwrap();
        assert_eq!(&dst[conv.range()], &src[conv.range()]);
        let head = dst_model.layout().get("head.weight").unwrap();
        let (_, fresh) = build_reference_model(shape, 6, 2, 2).unwrap();
        assert_eq!(&dst[head.range()], &fresh[head.range()]);
    }

    #[test]
    fn head_is_initialised_last() {
        // With equal seeds, networks differing only in the number of classes
        // share every non-head tensor.
        let shape = ImageShape::new(8, 8, 1);
        let (a_model, a) = build_reference_model(shape, 4, 3, 5).unwrap();
        let (_, b) = build_reference_model(shape, 7, 3, 5).unwrap();
        for spec in a_model.layout().specs() {
            if !spec.name.starts_with("head") {
                assert_eq!(&a[spec.range()], &b[spec.range()], "{}", spec.name);
            }
        }
    }
}
