//! Scene data model.

use serde::{Deserialize, Serialize};

use super::SceneError;
use crate::field::AnalyticSdf;
use crate::geometry::{CameraModel, GrayImage, RgbImage};
use crate::math::Vec3;

/// Similarity transform mapping original coordinates into the unit bounding
/// sphere: `y = (x - center) * scale`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct NormalizationTransform {
    pub center: Vec3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self {
            center: Vec3::ZERO,
            scale: 1.0,
        }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        (self.scale - 1.0).abs() < tol && self.center.norm() < tol
    }

    /// Transform placing the bounding box of `points` inside a sphere of
    /// radius 0.9.
    pub fn from_points(points: &[Vec3]) -> Self {
        if points.is_empty() {
            return Self::identity();
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for &p in points {
            lo = lo.component_min(p);
            hi = hi.component_max(p);
        }
        let center = (lo + hi) * 0.5;
        let half_diag = ((hi - lo) * 0.5).norm();
        let scale = if half_diag < 1e-12 {
            1.0
        } else {
            0.9 / half_diag
        };
        Self { center, scale }
    }

    /// Camera with the same orientation observing the transformed world.
    pub fn apply_to_camera(&self, cam: &CameraModel) -> CameraModel {
        let new_center = self.apply(cam.center());
        let translation = -(cam.rotation * new_center);
        CameraModel {
            translation,
            ..cam.clone()
        }
    }
}

/// Sparse 3D points with per-view visibility lists.
#[derive(Debug, Clone, Default)]
pub struct SparsePointSet {
    pub points: Vec<Vec3>,
    /// For each view, indices into `points` visible there.
    pub visibility: Vec<Vec<usize>>,
    pub reprojection_residuals: Option<Vec<f64>>,
}

impl SparsePointSet {
    pub fn validate(&self, n_views: usize) -> Result<(), SceneError> {
        if self.visibility.len() != n_views {
            return Err(SceneError::MalformedScene(format!(
                "visibility lists for {} views, scene has {}",
                self.visibility.len(),
                n_views
            )));
        }
        for (view, list) in self.visibility.iter().enumerate() {
            for &idx in list {
                if idx >= self.points.len() {
                    return Err(SceneError::VisibilityIndexOutOfRange {
                        view,
                        index: idx,
                        count: self.points.len(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Analytic ground truth attached to synthetic scenes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub sdf: AnalyticSdf,
    pub surface_samples: Vec<Vec3>,
}

/// Auxiliary scene metadata stored beside the camera file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneMeta {
    pub normalization: NormalizationTransform,
    pub background: [f64; 3],
    /// Root seed recorded by the generator, when applicable.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A calibrated multi-view scene in normalized (unit-sphere) coordinates.
#[derive(Debug, Clone)]
pub struct Scene {
    pub cameras: Vec<CameraModel>,
    pub images: Vec<RgbImage>,
    pub gray: Vec<GrayImage>,
    pub sparse: SparsePointSet,
    pub normalization: NormalizationTransform,
    pub background: [f64; 3],
    pub ground_truth: Option<GroundTruth>,
    pub seed: Option<u64>,
}

impl Scene {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.cameras.len() < 2 {
            return Err(SceneError::MalformedScene(format!(
                "need at least 2 cameras, got {}",
                self.cameras.len()
            )));
        }
        if self.cameras.len() != self.images.len() {
            return Err(SceneError::MalformedScene(format!(
                "{} cameras but {} images",
                self.cameras.len(),
                self.images.len()
            )));
        }
        self.sparse.validate(self.cameras.len())?;
        for (i, p) in self.sparse.points.iter().enumerate() {
            if p.norm() > 1.0 + 1e-6 {
                return Err(SceneError::MalformedScene(format!(
                    "sparse point {i} lies outside the unit sphere (|p|={})",
                    p.norm()
                )));
            }
        }
        Ok(())
    }
}

/// The view-aware subset of sparse points used by the SDF loss while
/// rendering `view_index`.
pub fn visible_points(scene: &Scene, view_index: usize) -> Result<Vec<Vec3>, SceneError> {
    let list = scene
        .sparse
        .visibility
        .get(view_index)
        .ok_or(SceneError::InvalidViewIndex(view_index))?;
    Ok(list.iter().map(|&i| scene.sparse.points[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_from_points_fits_sphere() {
        let pts = vec![
            Vec3::new(10.0, 0.0, 0.0),
            Vec3::new(14.0, 2.0, 1.0),
            Vec3::new(12.0, -2.0, 3.0),
        ];
        let t = NormalizationTransform::from_points(&pts);
        let mapped: Vec<Vec3> = pts.iter().map(|&p| t.apply(p)).collect();
        for p in &mapped {
            assert!(p.norm() <= 0.9 + 1e-9);
        }
        // Idempotence: the transform of already-normalized points is identity.
        let t2 = NormalizationTransform::from_points(&mapped);
        assert!((t2.scale - 1.0).abs() < 1e-12);
        assert!(t2.center.norm() < 1e-12);
    }

    #[test]
    fn camera_transform_preserves_projection() {
        use crate::geometry::project;
        let t = NormalizationTransform {
            center: Vec3::new(1.0, 2.0, 3.0),
            scale: 0.25,
        };
        let cam = CameraModel::new(
            120.0,
            120.0,
            32.0,
            32.0,
            crate::math::Mat3::identity(),
            Vec3::new(0.4, -0.2, 5.0),
            64,
            64,
        )
        .unwrap();
        let p = Vec3::new(0.3, 0.8, 1.0);
        let (px_before, depth_before) = project(&cam, p).unwrap();
        let cam2 = t.apply_to_camera(&cam);
        let (px_after, depth_after) = project(&cam2, t.apply(p)).unwrap();
        assert!((px_before - px_after).norm() < 1e-9);
        assert!((depth_after - depth_before * t.scale).abs() < 1e-9);
    }

    #[test]
    fn visibility_lookup() {
        let sparse = SparsePointSet {
            points: vec![Vec3::ZERO, Vec3::new(0.1, 0.0, 0.0)],
            visibility: vec![vec![0, 1], vec![], vec![1]],
            reprojection_residuals: None,
        };
        assert!(sparse.validate(3).is_ok());
        assert!(matches!(
            SparsePointSet {
                visibility: vec![vec![5], vec![], vec![]],
                ..sparse.clone()
            }
            .validate(3),
            Err(SceneError::VisibilityIndexOutOfRange { view: 0, index: 5, .. })
        ));
    }
}
