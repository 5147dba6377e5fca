//! Pinhole camera model and pixel rays.
//!
//! Pixel convention: `(u, v)` addresses the center of the pixel in column `u`
//! and row `v`; the image domain is `[0, w-1] x [0, h-1]`.

use serde::{Deserialize, Serialize};

use super::GeometryError;
use crate::math::{Mat3, Vec2, Vec3};

/// Calibrated pinhole camera: intrinsics plus a world-to-camera rigid pose.
///
/// A world point `p` maps to camera coordinates as `x_cam = R p + t`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// Translation, camera frame.
    pub translation: Vec3,
    pub width: usize,
    pub height: usize,
}

impl CameraModel {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        let rrt = rotation * rotation.transpose();
        let dev = rrt.max_abs_diff(&Mat3::identity());
        if dev >= 1e-9 {
            return Err(GeometryError::NotARotation(dev));
        }
        if (rotation.det() - 1.0).abs() >= 1e-9 {
            return Err(GeometryError::NotARotation((rotation.det() - 1.0).abs()));
        }
        if width == 0 || height == 0 {
            return Err(GeometryError::InvalidCamera(
                "image dimensions must be positive".into(),
            ));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// Identity pose, unit focal length camera. Handy in tests.
    pub fn identity(width: usize, height: usize) -> Self {
        Self {
            fx: 1.0,
            fy: 1.0,
            cx: 0.0,
            cy: 0.0,
            rotation: Mat3::identity(),
            translation: Vec3::ZERO,
            width,
            height,
        }
    }

    /// Intrinsic matrix K.
    pub fn intrinsics(&self) -> Mat3 {
        Mat3::from_rows(
            [self.fx, 0.0, self.cx],
            [0.0, self.fy, self.cy],
            [0.0, 0.0, 1.0],
        )
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// World point to camera coordinates.
    pub fn world_to_camera(&self, p: Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn contains_pixel(&self, px: Vec2) -> bool {
        px.x >= 0.0
            && px.y >= 0.0
            && px.x <= (self.width - 1) as f64
            && px.y <= (self.height - 1) as f64
    }
}

/// World-space ray with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing the direction.
    pub fn new(origin: Vec3, direction: Vec3) -> Self {
        let direction = direction
            .normalized()
            .expect("ray direction must be non-zero");
        Self { origin, direction }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// Projects a world point; returns the pixel position and camera-frame depth.
pub fn project(cam: &CameraModel, p: Vec3) -> Result<(Vec2, f64), GeometryError> {
    let x = cam.world_to_camera(p);
    if x.z <= 1e-9 {
        return Err(GeometryError::NonPositiveDepth(x.z));
    }
    let px = Vec2::new(cam.fx * x.x / x.z + cam.cx, cam.fy * x.y / x.z + cam.cy);
    Ok((px, x.z))
}

/// World-space ray from the camera center through a pixel.
///
/// Pixels outside the image bounds are allowed.
pub fn ray_through_pixel(cam: &CameraModel, pixel: Vec2) -> Ray {
    let dir_cam = Vec3::new(
        (pixel.x - cam.cx) / cam.fx,
        (pixel.y - cam.cy) / cam.fy,
        1.0,
    );
    let dir_world = cam.rotation.transpose() * dir_cam;
    Ray::new(cam.center(), dir_world)
}
