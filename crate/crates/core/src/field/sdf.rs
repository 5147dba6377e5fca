//! Signed-distance fields: analytic primitives for ground truth and the
//! neural field optimized during training.

use super::{encode_tape, encode_point, MlpParams, PositionalEncodingConfig};
use crate::math::Vec3;
use crate::tape::{Tape, Tensor};

/// Analytic SDFs with exact distances and gradients (off the medial axis).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyticSdf {
    Sphere { center: Vec3, radius: f64 },
    Box { center: Vec3, half_extents: Vec3 },
    Plane { normal: Vec3, d: f64 },
    Union { parts: Vec<AnalyticSdf> },
}

impl AnalyticSdf {
    pub fn eval(&self, p: Vec3) -> f64 {
        match self {
            AnalyticSdf::Sphere { center, radius } => (p - *center).norm() - radius,
            AnalyticSdf::Box {
                center,
                half_extents,
            } => {
                let q = (p - *center).abs() - *half_extents;
                let outside = q.component_max(Vec3::ZERO).norm();
                let inside = q.max_component().min(0.0);
                outside + inside
            }
            AnalyticSdf::Plane { normal, d } => normal.dot(p) + d,
            AnalyticSdf::Union { parts } => parts
                .iter()
                .map(|s| s.eval(p))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        match self {
            AnalyticSdf::Sphere { center, .. } => {
                (p - *center).normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0))
            }
            AnalyticSdf::Box {
                center,
                half_extents,
            } => {
                let r = p - *center;
                let q = r.abs() - *half_extents;
                let sign = Vec3::new(
                    if r.x >= 0.0 { 1.0 } else { -1.0 },
                    if r.y >= 0.0 { 1.0 } else { -1.0 },
                    if r.z >= 0.0 { 1.0 } else { -1.0 },
                );
                if q.x > 0.0 || q.y > 0.0 || q.z > 0.0 {
                    let c = q.component_max(Vec3::ZERO);
                    let g = c.normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0));
                    Vec3::new(g.x * sign.x, g.y * sign.y, g.z * sign.z)
                } else {
                    // Inside: gradient points through the nearest face.
                    if q.x >= q.y && q.x >= q.z {
                        Vec3::new(sign.x, 0.0, 0.0)
                    } else if q.y >= q.z {
                        Vec3::new(0.0, sign.y, 0.0)
                    } else {
                        Vec3::new(0.0, 0.0, sign.z)
                    }
                }
            }
            AnalyticSdf::Plane { normal, .. } => *normal,
            AnalyticSdf::Union { parts } => {
                let mut best = f64::INFINITY;
                let mut grad = Vec3::new(1.0, 0.0, 0.0);
                for s in parts {
                    let v = s.eval(p);
                    if v < best {
                        best = v;
                        grad = s.gradient(p);
                    }
                }
                grad
            }
        }
    }
}

/// Neural SDF: positional encoding into an MLP whose first output channel is
/// the signed distance and whose remaining channels form the geometry
/// feature vector consumed by the radiance field.
#[derive(Debug, Clone)]
pub struct NeuralSdf {
    pub encoding: PositionalEncodingConfig,
    pub mlp: MlpParams,
    pub feature_width: usize,
}

impl NeuralSdf {
    pub fn encode_batch(&self, points: &[Vec3]) -> Tensor {
        let dim = self.encoding.position_dim();
        let mut data = Vec::with_capacity(points.len() * dim);
        for &p in points {
            data.extend(encode_point(p, &self.encoding));
        }
        Tensor::new(points.len(), dim, data)
    }

    /// SDF values at a batch of points, no gradients.
    pub fn eval_batch(&self, points: &[Vec3]) -> Vec<f64> {
        if points.is_empty() {
            return Vec::new();
        }
        let enc = self.encode_batch(points);
        let out = self.mlp.forward_batch(&enc);
        out.data
            .chunks_exact(out.cols)
            .map(|row| row[0])
            .collect()
    }

    pub fn eval(&self, p: Vec3) -> f64 {
        self.eval_batch(&[p])[0]
    }

    /// Batched SDF values, spatial gradients, and geometry features in one
    /// tape pass (per-point gradients of the sum are the row gradients).
    pub fn eval_grad_feat_batch(&self, points: &[Vec3]) -> (Vec<f64>, Vec<Vec3>, Tensor) {
        let n = points.len();
        if n == 0 {
            return (Vec::new(), Vec::new(), Tensor::zeros(0, self.feature_width));
        }
        let flat: Vec<f64> = points.iter().flat_map(|p| p.to_array()).collect();
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(n, 3, flat));
        let enc = encode_tape(
            &mut tape,
            x,
            self.encoding.position_frequencies,
            self.encoding.include_input,
        );
        let vars = self.mlp.bind(&mut tape);
        let out = vars.forward(&mut tape, enc);
        let sdf_col = tape.slice_cols(out, 0, 1);
        let feats = tape.slice_cols(out, 1, 1 + self.feature_width);
        let y = tape.sum_all(sdf_col);
        let g = tape.backward(y, &[x])[0].expect("sdf must depend on the query points");
        let gd = tape.data(g);
        let grads = (0..n)
            .map(|i| Vec3::new(gd[i * 3], gd[i * 3 + 1], gd[i * 3 + 2]))
            .collect();
        let values = tape.data(sdf_col).to_vec();
        let features = tape.to_tensor(feats);
        (values, grads, features)
    }

    /// Exact reverse-mode gradient of the SDF with respect to the input
    /// point (a small throwaway tape; no finite differences).
    pub fn gradient(&self, p: Vec3) -> Vec3 {
        let mut tape = Tape::new();
        let x = tape.leaf(&Tensor::new(1, 3, p.to_array().to_vec()));
        let enc = encode_tape(
            &mut tape,
            x,
            self.encoding.position_frequencies,
            self.encoding.include_input,
        );
        let vars = self.mlp.bind(&mut tape);
        let out = vars.forward(&mut tape, enc);
        let sdf = tape.slice_cols(out, 0, 1);
        let y = tape.sum_all(sdf);
        let g = tape.backward(y, &[x])[0].expect("sdf must depend on the query point");
        let d = tape.data(g);
        Vec3::new(d[0], d[1], d[2])
    }
}

/// A signed-distance field: analytic ground truth or neural.
#[derive(Debug, Clone)]
pub enum SdfField {
    Analytic(AnalyticSdf),
    Neural(NeuralSdf),
}

impl SdfField {
    pub fn as_neural(&self) -> Option<&NeuralSdf> {
        match self {
            SdfField::Neural(n) => Some(n),
            SdfField::Analytic(_) => None,
        }
    }

    /// Batch evaluation without gradients.
    pub fn eval_batch(&self, points: &[Vec3]) -> Vec<f64> {
        match self {
            SdfField::Analytic(a) => points.iter().map(|&p| a.eval(p)).collect(),
            SdfField::Neural(n) => n.eval_batch(points),
        }
    }
}

/// Signed distance value with its spatial gradient.
#[derive(Debug, Clone, Copy)]
pub struct SdfSample {
    pub value: f64,
    pub gradient: Vec3,
}

pub fn sdf_eval(f: &SdfField, p: Vec3) -> f64 {
    match f {
        SdfField::Analytic(a) => a.eval(p),
        SdfField::Neural(n) => n.eval(p),
    }
}

pub fn sdf_gradient(f: &SdfField, p: Vec3) -> Vec3 {
    match f {
        SdfField::Analytic(a) => a.gradient(p),
        SdfField::Neural(n) => n.gradient(p),
    }
}

pub fn sdf_sample(f: &SdfField, p: Vec3) -> SdfSample {
    SdfSample {
        value: sdf_eval(f, p),
        gradient: sdf_gradient(f, p),
    }
}

/// Indicator of the interior: 1 iff `sdf < 0`.
pub fn occupancy(f: &SdfField, p: Vec3) -> u8 {
    u8::from(sdf_eval(f, p) < 0.0)
}
