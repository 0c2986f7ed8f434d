//! Render-then-evaluate metrics: PSNR, SSIM, emission-region Dice,
//! Fréchet distance and cosine similarity over pluggable features, and
//! strength RMSE.

mod evaluate;
mod frechet;
mod image;

pub use evaluate::{evaluate, AggregateMetrics, EvalProtocol, MetricReport, ViewMetrics, REPORT_SCHEMA_VERSION};
pub use frechet::{frechet_distance, frechet_distance_with, GaussianFit, FRECHET_REGULARIZATION};
pub use image::{
    cosine_similarity, emission_dice, grayscale, luminous_mask, mask_dice, psnr, psnr_masked, ssim, strength_rmse,
    PSNR_CAP_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {a} vs {b}")]
    DimensionMismatch { a: usize, b: usize },
    #[error("image {width}x{height} is smaller than the SSIM window")]
    ImageTooSmall { width: usize, height: usize },
    #[error("zero-length feature vector")]
    ZeroVector,
    #[error("empty input")]
    EmptyInput,
    #[error("matrix square root did not converge")]
    NonConvergedSqrt,
    #[error("covariance invalid: {0}")]
    NotPositiveSemidefinite(String),
    #[error("assets do not share mesh topology")]
    TopologyMismatch,
    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),
    #[error("render failed: {0}")]
    Render(String),
}
