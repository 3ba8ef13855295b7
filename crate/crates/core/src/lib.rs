//! Semi-supervised image classification: consistency training on augmented
//! unlabeled data with sharpened guessed labels, MixUp, out-of-distribution
//! masking, training signal annealing and an EMA of the weights, plus the
//! experiment harness built around it.

pub mod augment;
pub mod config;
pub mod data;
pub mod error;
pub mod experiments;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod split;
pub mod synth;
pub mod ssl;
pub mod tensor_io;
pub mod train;

pub use config::{load_config, AugmentPolicy, Config, TsaSchedule};
pub use data::{Dataset, ImageShape};
pub use error::{Error, Result};
pub use split::{make_label_split, make_mismatch_split, SplitSpec};
