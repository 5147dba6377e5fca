//! SDF-induced volume rendering along rays: hierarchical sampling, weight
//! computation, color and depth integrals, and occlusion-aware location of
//! the zero-level set.

mod intersect;
mod render;
mod sampling;
mod weights;

pub use intersect::{
    first_intersection, interpolate_intersection, locate_zero_crossings, ray_crossings,
    SurfaceIntersection,
};
pub use render::{render_color, RenderFields, RenderResult};
pub use sampling::{near_far_unit_sphere, sample_ray_hierarchical, SamplingConfig};
pub use weights::{compute_weights, render_depth, SParameter};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RendererError {
    #[error("sdf and t lists have different lengths ({sdf} vs {t})")]
    LengthMismatch { sdf: usize, t: usize },
    #[error("need at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("no sign change between the given samples")]
    NoSignChange,
}
