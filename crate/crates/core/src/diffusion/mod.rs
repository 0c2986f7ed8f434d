//! Training-objective math for emission-aware texture diffusion: forward
//! noising, velocity targets, clean-latent recovery, soft emission masks and
//! the Dice segmentation term, all with analytic gradients.

mod check;
mod loss;
mod sampler;
mod schedule;
mod tensor;
mod toy;

pub use check::{
    gradient_suite, run_loss_check, soft_mask_deviation, ConvergenceCheck, GradientCheck, GradientProblem, IdentityCheck,
    LossCheckReport,
};
pub use loss::{
    dice_loss, mcp_loss, segmentation_loss, segmentation_loss_grad, sigmoid, soft_mask, total_loss, total_loss_grad,
    LossContext, LossReport, SoftMaskParams, ToyDecoder, DEFAULT_LAMBDA, DICE_EPS,
};
pub use sampler::{DisentangleSample, DisentangleSampler};
pub use schedule::{
    forward_diffuse, recover_clean, velocity_target, LatentBatch, NoiseSchedule, DEFAULT_BETA_RANGE, DEFAULT_TIMESTEPS,
};
pub use tensor::Tensor4;
pub use toy::{
    batch_loss_grad, toy_train, write_curves_csv, StepRecord, ToyDenoiser, ToySample, ToyTask, ToyTaskConfig,
    ToyTrainConfig, ToyTrainResult,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("timestep {t} outside schedule of {steps} steps")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("invalid noise schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("loss became non-finite at step {step}")]
    DivergenceDetected { step: usize },
    #[error("need at least 2 strengths and 2 rigs, got {strengths} and {rigs}")]
    InsufficientVariation { strengths: usize, rigs: usize },
}
