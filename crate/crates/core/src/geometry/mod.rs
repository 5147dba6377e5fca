//! Exact camera geometry: projection, ray generation, plane-induced
//! homography, patch warping, and image sampling.
//!
//! All operations are pure functions of immutable inputs and are safe to use
//! from multiple threads.

mod camera;
mod homography;
mod image;
mod patch;

pub use camera::{project, ray_through_pixel, CameraModel, Ray};
pub use homography::{plane_induced_homography, warp_patch, PlaneParams};
pub use image::{sample_gray_bilinear, to_gray, GrayImage, RgbImage};
pub use patch::{patch_coords, PixelPatch, DEFAULT_PATCH_SIZE};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point has non-positive camera-frame depth z={0}")]
    NonPositiveDepth(f64),
    #[error("plane offset |d|={0} is too small; plane passes through the reference camera center")]
    DegeneratePlane(f64),
    #[error("intrinsic matrix is singular")]
    SingularIntrinsics,
    #[error("warped point lies at infinity (|w|={0})")]
    PointAtInfinity(f64),
    #[error("rotation matrix is not orthonormal (deviation {0})")]
    NotARotation(f64),
    #[error("invalid camera parameter: {0}")]
    InvalidCamera(String),
    #[error("patch size must be odd and >= 3, got {0}")]
    InvalidPatchSize(usize),
}
