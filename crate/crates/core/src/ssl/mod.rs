//! The semi-supervised objective: sharpening, MixUp, target generation,
//! out-of-distribution masking, training signal annealing and the losses.

mod loss;
mod mixup;
mod ood;
mod prob;
mod sharpen;
mod targets;
mod tsa;

pub use loss::{
    cross_entropy_grad, lambda_at, mse_grad, supervised_loss, total_loss, unsupervised_loss,
    LOG_EPS,
};
pub use mixup::{mix_pair, mix_weight, mixup};
pub use ood::{masked_count, ood_mask, OodMask};
pub use prob::{ProbVector, Probs, PROB_TOLERANCE};
pub use sharpen::{sharpen, sharpen_row};
pub use targets::{generate_targets, GeneratedTargets};
pub use tsa::{tsa_mask, tsa_threshold, TsaMasked, TsaState};
