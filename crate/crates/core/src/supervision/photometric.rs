//! Multi-view photometric consistency on located surface points: for each
//! intersection, the reference patch is warped into the source views by the
//! plane induced by (point, normal) and scored with NCC; the best four valid
//! scores per pixel enter the loss as `(1 - NCC)`.

use serde::{Deserialize, Serialize};

use super::ncc::{ncc_values, NccScore};
use crate::geometry::{
    patch_coords, plane_induced_homography, project, sample_gray_bilinear, warp_patch,
    PlaneParams, DEFAULT_PATCH_SIZE,
};
use crate::math::Vec3;
use crate::renderer::SurfaceIntersection;
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct PhotometricConfig {
    pub patch_size: usize,
    /// Restrict scoring to the k nearest source views (by camera center);
    /// `None` scores against all source views.
    pub max_source_views: Option<usize>,
    /// How many of the best scores enter the per-pixel average.
    pub best_k: usize,
}

impl Default for PhotometricConfig {
    fn default() -> Self {
        Self {
            patch_size: DEFAULT_PATCH_SIZE,
            max_source_views: None,
            best_k: 4,
        }
    }
}

/// Source views ordered by camera-center proximity to the reference view.
pub fn source_view_order(scene: &Scene, ref_view: usize, cfg: &PhotometricConfig) -> Vec<usize> {
    let ref_center = scene.cameras[ref_view].center();
    let mut order: Vec<usize> = (0..scene.n_views()).filter(|&v| v != ref_view).collect();
    order.sort_by(|&a, &b| {
        let da = (scene.cameras[a].center() - ref_center).norm_squared();
        let db = (scene.cameras[b].center() - ref_center).norm_squared();
        da.partial_cmp(&db).unwrap()
    });
    if let Some(k) = cfg.max_source_views {
        order.truncate(k);
    }
    order
}

/// NCC scores of one surface point against the chosen source views.
/// `point`/`normal` are world-space; the plane is formed in the reference
/// camera frame with the normal oriented toward the camera.
pub fn score_point(
    scene: &Scene,
    ref_view: usize,
    sources: &[usize],
    point: Vec3,
    normal: Vec3,
    cfg: &PhotometricConfig,
) -> Option<(Vec<NccScore>, Vec<f64>)> {
    let ref_cam = &scene.cameras[ref_view];
    let Ok((center_px, _)) = project(ref_cam, point) else {
        return None;
    };
    let coords = patch_coords(center_px, cfg.patch_size).ok()?;
    let ref_values = sample_gray_bilinear(&scene.gray[ref_view], &coords)?;

    let p_cam = ref_cam.world_to_camera(point);
    let mut n_cam = ref_cam.rotation * normal;
    if n_cam.dot(p_cam) > 0.0 {
        n_cam = -n_cam;
    }
    let plane = PlaneParams::through_point(n_cam, p_cam).ok()?;

    let scores = sources
        .iter()
        .map(|&sv| {
            let Ok(h) = plane_induced_homography(ref_cam, &scene.cameras[sv], &plane) else {
                return NccScore::invalid();
            };
            let Ok(warped) = warp_patch(&h, &coords) else {
                return NccScore::invalid();
            };
            match sample_gray_bilinear(&scene.gray[sv], &warped) {
                Some(src_values) => ncc_values(&ref_values, &src_values),
                None => NccScore::invalid(),
            }
        })
        .collect();
    Some((scores, ref_values))
}

/// Per-pixel contribution: mean of `(1 - NCC)` over the best
/// `min(best_k, valid)` scores, or `None` when no score is valid.
pub fn best_k_contribution(scores: &[NccScore], best_k: usize) -> Option<f64> {
    let mut valid: Vec<f64> = scores.iter().filter(|s| s.valid).map(|s| s.value).collect();
    if valid.is_empty() {
        return None;
    }
    valid.sort_by(|a, b| b.partial_cmp(a).unwrap());
    valid.truncate(best_k);
    Some(valid.iter().map(|v| 1.0 - v).sum::<f64>() / valid.len() as f64)
}

/// Photometric consistency loss over a batch of located intersections.
/// Returns `(loss, contributing_pixels)`; pixels without a valid
/// intersection or without any valid source score are excluded from the
/// denominator.
pub fn photometric_loss(
    scene: &Scene,
    ref_view: usize,
    intersections: &[SurfaceIntersection],
    cfg: &PhotometricConfig,
) -> (f64, usize) {
    let sources = source_view_order(scene, ref_view, cfg);
    let mut total = 0.0;
    let mut count = 0;
    for hit in intersections.iter().filter(|h| h.valid) {
        let Some((scores, _)) = score_point(scene, ref_view, &sources, hit.point, hit.normal, cfg)
        else {
            continue;
        };
        if let Some(contrib) = best_k_contribution(&scores, cfg.best_k) {
            total += contrib;
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0)
    } else {
        (total / count as f64, count)
    }
}
