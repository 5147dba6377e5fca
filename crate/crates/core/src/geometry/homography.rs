//! Plane-induced homography between two calibrated views.

use serde::{Deserialize, Serialize};

use super::{CameraModel, GeometryError};
use crate::math::{Mat3, Vec2, Vec3};

/// Plane `n^T p + d = 0` expressed in the reference camera frame.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PlaneParams {
    /// Unit normal, reference-camera frame.
    pub normal: Vec3,
    /// Offset such that `n^T p + d = 0` for points `p` on the plane.
    pub d: f64,
}

impl PlaneParams {
    pub fn new(normal: Vec3, d: f64) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if (n - 1.0).abs() >= 1e-9 {
            return Err(GeometryError::InvalidCamera(format!(
                "plane normal must be unit length (|n|={n})"
            )));
        }
        if d.abs() <= 1e-9 {
            return Err(GeometryError::DegeneratePlane(d.abs()));
        }
        Ok(Self { normal, d })
    }

    /// Plane through `point` with the given unit `normal` (reference-camera
    /// frame coordinates for both).
    pub fn through_point(normal: Vec3, point: Vec3) -> Result<Self, GeometryError> {
        Self::new(normal, -normal.dot(point))
    }
}

/// Homography mapping homogeneous *reference* pixels to *source* pixels for
/// points on the given plane:
///
/// `H = K_s (R_s R_r^T - (R_s (R_s^T t_s - R_r^T t_r) n^T) / d) K_r^{-1}`
pub fn plane_induced_homography(
    reference: &CameraModel,
    source: &CameraModel,
    plane: &PlaneParams,
) -> Result<Mat3, GeometryError> {
    if plane.d.abs() <= 1e-9 {
        return Err(GeometryError::DegeneratePlane(plane.d.abs()));
    }
    let k_r_inv = reference
        .intrinsics()
        .inverse()
        .ok_or(GeometryError::SingularIntrinsics)?;
    let k_s = source.intrinsics();
    let r_rel = source.rotation * reference.rotation.transpose();
    // t_rel = R_s (R_s^T t_s - R_r^T t_r) = t_s - R_s R_r^T t_r
    let t_rel = source.rotation
        * (source.rotation.transpose() * source.translation
            - reference.rotation.transpose() * reference.translation);
    let h_mid = r_rel - Mat3::outer(t_rel, plane.normal) * (1.0 / plane.d);
    Ok(k_s * h_mid * k_r_inv)
}

/// Applies `H` to each pixel coordinate in homogeneous form and dehomogenizes.
pub fn warp_patch(h: &Mat3, patch_coords: &[Vec2]) -> Result<Vec<Vec2>, GeometryError> {
    patch_coords
        .iter()
        .map(|&c| {
            let p = *h * Vec3::new(c.x, c.y, 1.0);
            if p.z.abs() < 1e-12 {
                return Err(GeometryError::PointAtInfinity(p.z.abs()));
            }
            Ok(Vec2::new(p.x / p.z, p.y / p.z))
        })
        .collect()
}
