//! Loss terms: color, eikonal regularizer, view-aware SDF loss on sparse
//! points, and the multi-view photometric NCC consistency loss on located
//! surface points.

mod losses;
mod ncc;
mod photometric;

pub use losses::{color_loss, eikonal_loss, sdf_loss, total_loss, LossBreakdown, LossWeights};
pub use ncc::{ncc, NccScore, NCC_EPSILON, VARIANCE_INVALID_FLOOR};
pub use photometric::{photometric_loss, PhotometricConfig};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SupervisionError {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("patches differ in size: {left} vs {right}")]
    PatchSizeMismatch { left: usize, right: usize },
    #[error("invalid patch")]
    InvalidPatch,
}
