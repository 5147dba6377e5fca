//! Differentiable signed-distance and radiance fields: small MLPs with
//! positional encoding and exact reverse-mode gradients, plus analytic SDFs
//! used as ground truth.

mod checkpoint;
mod encoding;
mod init;
mod mlp;
mod radiance;
mod sdf;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use encoding::{encode_point, encode_tape, positional_encode, PositionalEncodingConfig};
pub use init::{geometric_init, init_radiance_field, FieldConfig};
pub use mlp::{Activation, LinearLayer, MlpParams, MlpVars};
pub use radiance::{radiance_eval, RadianceField};
pub use sdf::{
    occupancy, sdf_eval, sdf_gradient, AnalyticSdf, NeuralSdf, SdfField, SdfSample,
};

use crate::tape::Tensor;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("incompatible layer dimensions at layer {layer}: {got} into {expected}")]
    LayerDimensionMismatch {
        layer: usize,
        got: usize,
        expected: usize,
    },
    #[error("non-finite parameter detected in tensor {0}")]
    NonFiniteParameter(String),
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// All trainable state: both field networks and the log-sharpness of the
/// SDF-to-opacity conversion.
#[derive(Debug, Clone)]
pub struct FieldParams {
    pub sdf: NeuralSdf,
    pub radiance: RadianceField,
    /// Sharpness is learned in log space so it stays positive.
    pub log_s: Tensor,
}

impl FieldParams {
    pub fn s(&self) -> f64 {
        self.log_s.data[0].exp()
    }

    /// Named views of every parameter tensor, in a stable order shared by
    /// the optimizer, gradient extraction, and checkpoints.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.sdf.mlp.layers.iter().enumerate() {
            out.push((format!("sdf.l{i}.w"), &l.weight));
            out.push((format!("sdf.l{i}.b"), &l.bias));
        }
        for (i, l) in self.radiance.mlp.layers.iter().enumerate() {
            out.push((format!("rad.l{i}.w"), &l.weight));
            out.push((format!("rad.l{i}.b"), &l.bias));
        }
        out.push(("log_s".to_string(), &self.log_s));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in self.sdf.mlp.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in self.radiance.mlp.layers.iter_mut() {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.log_s);
        out
    }

    pub fn n_scalar_params(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.is_finite())
    }
}
