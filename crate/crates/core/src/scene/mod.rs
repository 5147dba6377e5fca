//! Scene ingestion, outlier filtering, and a synthetic-scene generator with
//! exact analytic ground truth.

mod filter;
mod io;
mod sfm;
mod synth;
mod types;

pub use filter::radius_filter;
pub use io::{load_scene, save_scene};
pub use sfm::ingest_sfm_text;
pub use synth::{albedo_noise, sphere_trace, synth_scene, CameraRingSpec, SyntheticSceneSpec, TextureSpec};
pub use types::{
    visible_points, GroundTruth, NormalizationTransform, Scene, SceneMeta, SparsePointSet,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("malformed camera record {index}: {message}")]
    MalformedCamera { index: usize, message: String },
    #[error("visibility index {index} out of range for view {view} ({count} points)")]
    VisibilityIndexOutOfRange {
        view: usize,
        index: usize,
        count: usize,
    },
    #[error("malformed scene: {0}")]
    MalformedScene(String),
    #[error("invalid view index {0}")]
    InvalidViewIndex(usize),
    #[error("invalid synthetic scene spec: {0}")]
    SpecInvalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("json error in {path}: {message}")]
    Json { path: String, message: String },
    #[error("image error on {path}: {message}")]
    Image { path: String, message: String },
    #[error("malformed SFM export: {0}")]
    MalformedSfm(String),
}

impl SceneError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SceneError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
