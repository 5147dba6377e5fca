//! Geometry-consistent neural implicit surface reconstruction.
//!
//! A differentiable signed-distance field and radiance field are optimized by
//! volume rendering with explicit geometric supervision: a view-aware SDF
//! loss on sparse 3D points and a multi-view photometric consistency (NCC)
//! loss evaluated on the located zero-level set. The crate also contains a
//! synthetic-scene generator with analytic ground truth, mesh extraction and
//! Chamfer evaluation, and a one-dimensional laboratory for the rendering
//! bias decomposition.

pub mod field;
pub mod renderer;
pub mod scene;
pub mod supervision;
pub mod geometry;
pub mod math;
pub mod tape;

pub use math::{Mat3, Vec2, Vec3};
