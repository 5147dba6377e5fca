//! Gradient-free rendering of a single ray (previews, evaluation, tests).
//! The differentiable batched path used in training lives in the trainer's
//! graph builder.

use rand::Rng;

use super::intersect::{first_intersection, ray_crossings, SurfaceIntersection};
use super::sampling::{sample_ray_hierarchical, SamplingConfig};
use super::weights::{compute_weights, render_depth, SParameter};
use crate::field::{radiance_eval, RadianceField, SdfField};
use crate::geometry::Ray;

/// What colors the samples along a ray.
pub enum ColorSource<'a> {
    Radiance(&'a RadianceField),
    Constant([f64; 3]),
}

/// Field bundle consumed by the renderer.
pub struct RenderFields<'a> {
    pub sdf: &'a SdfField,
    pub color: ColorSource<'a>,
    pub background: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct RenderResult {
    pub color: [f64; 3],
    /// Weight-averaged expected depth.
    pub depth: f64,
    pub weight_sum: f64,
    pub intersection: SurfaceIntersection,
}

/// Volume-renders one ray: hierarchical samples, SDF-induced weights, the
/// Riemann color sum with background blending, expected depth, and the first
/// zero crossing.
pub fn render_color(
    fields: &RenderFields,
    ray: &Ray,
    cfg: &SamplingConfig,
    s: SParameter,
    rng: &mut impl Rng,
) -> RenderResult {
    let t = sample_ray_hierarchical(fields.sdf, ray, cfg, s, rng);
    if t.len() < 2 {
        return RenderResult {
            color: fields.background,
            depth: cfg.far,
            weight_sum: 0.0,
            intersection: SurfaceIntersection::invalid(),
        };
    }
    let points: Vec<_> = t.iter().map(|&tv| ray.at(tv)).collect();
    let sdf = fields.sdf.eval_batch(&points);
    let (_, weights) = compute_weights(&sdf, &t, s).expect("lengths match by construction");

    let n = weights.len();
    let sample_colors: Vec<[f64; 3]> = match &fields.color {
        ColorSource::Constant(c) => vec![*c; n],
        ColorSource::Radiance(rad) => {
            let neural = fields
                .sdf
                .as_neural()
                .expect("radiance rendering needs a neural sdf for features");
            let (_, grads, feats) = neural.eval_grad_feat_batch(&points[..n]);
            (0..n)
                .map(|i| {
                    let normal = grads[i]
                        .normalized()
                        .unwrap_or(crate::math::Vec3::new(0.0, 0.0, 1.0));
                    let feat = &feats.data[i * feats.cols..(i + 1) * feats.cols];
                    radiance_eval(rad, points[i], ray.direction, normal, feat)
                })
                .collect()
        }
    };

    let weight_sum: f64 = weights.iter().sum();
    let mut color = [0.0; 3];
    for (w, c) in weights.iter().zip(sample_colors.iter()) {
        for ch in 0..3 {
            color[ch] += w * c[ch];
        }
    }
    let residual = (1.0 - weight_sum).max(0.0);
    for ch in 0..3 {
        color[ch] += residual * fields.background[ch];
    }

    let depth = render_depth(&weights, &t[..n]);
    let crossings = ray_crossings(&t, &sdf);
    let intersection = first_intersection(&crossings, ray, fields.sdf);

    RenderResult {
        color,
        depth,
        weight_sum,
        intersection,
    }
}
