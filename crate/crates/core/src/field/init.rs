//! Network construction and geometric initialization.
//!
//! The SDF network starts out approximating the distance field of a sphere
//! of radius `init_radius`: hidden weights are drawn from N(0, sqrt(2/out))
//! with encoding channels beyond the raw coordinates zeroed, then the
//! distance output row is ridge-fitted to `|p| - init_radius` over the
//! resulting random features.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::{
    Activation, FieldParams, LinearLayer, MlpParams, NeuralSdf, PositionalEncodingConfig,
    RadianceField, SdfField,
};
use crate::tape::Tensor;

/// Network architecture knobs. Defaults are the desk-scale configuration;
/// larger sizes are available through the same fields.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct FieldConfig {
    /// Number of linear layers in the SDF trunk (including the output head).
    pub sdf_layers: usize,
    pub sdf_hidden: usize,
    /// Width of the geometry feature vector fed to the radiance network.
    pub feature_width: usize,
    /// Number of linear layers in the radiance trunk (including the head).
    pub radiance_layers: usize,
    pub radiance_hidden: usize,
    pub encoding: PositionalEncodingConfig,
    pub softplus_beta: f64,
    /// Radius of the sphere the freshly initialized SDF approximates.
    pub init_radius: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            sdf_layers: 4,
            sdf_hidden: 64,
            feature_width: 64,
            radiance_layers: 3,
            radiance_hidden: 64,
            encoding: PositionalEncodingConfig::default(),
            softplus_beta: 100.0,
            init_radius: 0.5,
        }
    }
}

impl FieldConfig {
    /// Index of the layer whose input gets the skip connection.
    fn skip_index(&self) -> Option<usize> {
        if self.sdf_layers >= 4 {
            Some(self.sdf_layers / 2)
        } else {
            None
        }
    }
}

fn normal(rng: &mut impl Rng, mean: f64, std: f64) -> f64 {
    // Box-Muller; two uniforms per draw keeps the stream simple and seedable.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    mean + std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Builds the SDF network with geometric initialization; deterministic for a
/// fixed seed.
pub fn geometric_init(cfg: &FieldConfig, seed: u64) -> SdfField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let enc_dim = cfg.encoding.position_dim();
    let out_dim = 1 + cfg.feature_width;
    let skip_at = cfg.skip_index();

    let mut layers = Vec::with_capacity(cfg.sdf_layers);
    for l in 0..cfg.sdf_layers {
        let is_last = l + 1 == cfg.sdf_layers;
        let is_first = l == 0;
        let base_in = if is_first { enc_dim } else { cfg.sdf_hidden };
        let in_dim = if skip_at == Some(l) && l > 0 {
            base_in + enc_dim
        } else {
            base_in
        };
        let cols = if is_last { out_dim } else { cfg.sdf_hidden };

        let mut weight = Tensor::zeros(in_dim, cols);
        let mut bias = Tensor::zeros(1, cols);

        if is_last {
            // Distance channel starts at the classic mean-shifted draw
            // (refined by the ridge fit below); feature channels get the
            // ordinary hidden init.
            let mean = (std::f64::consts::PI / in_dim as f64).sqrt();
            for r in 0..in_dim {
                weight.data[r * cols] = normal(&mut rng, mean, 1e-4);
            }
            bias.data[0] = -cfg.init_radius;
            let std = (2.0 / cols as f64).sqrt();
            for r in 0..in_dim {
                for c in 1..cols {
                    weight.data[r * cols + c] = normal(&mut rng, 0.0, std);
                }
            }
        } else {
            // The skip concatenation doubles the input's squared norm, so
            // that layer's init variance is halved to keep activations on
            // the |p| scale.
            let mut std = (2.0 / cols as f64).sqrt();
            if skip_at == Some(l) && l > 0 {
                std /= std::f64::consts::SQRT_2;
            }
            for r in 0..in_dim {
                for c in 0..cols {
                    weight.data[r * cols + c] = normal(&mut rng, 0.0, std);
                }
            }
            // Zero every encoding channel except the raw coordinates so the
            // initial field is a function of position magnitude alone.
            let zero_enc_rows = |w: &mut Tensor, row_start: usize| {
                for r in row_start..w.rows {
                    for c in 0..w.cols {
                        w.data[r * w.cols + c] = 0.0;
                    }
                }
            };
            if is_first {
                zero_enc_rows(&mut weight, 3);
            } else if skip_at == Some(l) {
                zero_enc_rows(&mut weight, base_in + 3);
            }
        }

        layers.push(LinearLayer {
            weight,
            bias,
            activation: if is_last {
                Activation::Identity
            } else {
                Activation::Softplus {
                    beta: cfg.softplus_beta,
                }
            },
        });
    }

    let mut field = NeuralSdf {
        encoding: cfg.encoding,
        mlp: MlpParams { layers, skip_at },
        feature_width: cfg.feature_width,
    };
    fit_sphere_output_row(&mut field, cfg.init_radius, &mut rng);
    SdfField::Neural(field)
}

/// At desk-scale widths the purely stochastic init carries +-15% angular
/// noise, far from a usable sphere. Treating the hidden trunk as fixed
/// random features and ridge-fitting the distance output row (and bias) to
/// `|p| - r0` over sampled ball points pins the start to the target sphere.
fn fit_sphere_output_row(field: &mut NeuralSdf, r0: f64, rng: &mut impl Rng) {
    let n = 2048;
    let pts: Vec<crate::math::Vec3> = (0..n)
        .map(|_| loop {
            let v = crate::math::Vec3::new(
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
                rng.gen_range(-1.2..1.2),
            );
            if v.norm() <= 1.2 {
                break v;
            }
        })
        .collect();

    // Features entering the last layer.
    let trunk = MlpParams {
        layers: field.mlp.layers[..field.mlp.layers.len() - 1].to_vec(),
        skip_at: field.mlp.skip_at,
    };
    let enc = field.encode_batch(&pts);
    let hidden = trunk.forward_batch(&enc);
    let d = hidden.cols;

    // Normal equations for [H 1] theta = y with a small ridge term.
    let cols = d + 1;
    let mut gtg = vec![0.0; cols * cols];
    let mut gty = vec![0.0; cols];
    for (i, p) in pts.iter().enumerate() {
        let row = &hidden.data[i * d..(i + 1) * d];
        let y = p.norm() - r0;
        for a in 0..d {
            for b in a..d {
                gtg[a * cols + b] += row[a] * row[b];
            }
            gtg[a * cols + d] += row[a];
            gty[a] += row[a] * y;
        }
        gtg[d * cols + d] += 1.0;
        gty[d] += y;
    }
    for a in 0..cols {
        for b in 0..a {
            gtg[a * cols + b] = gtg[b * cols + a];
        }
        gtg[a * cols + a] += 1e-6 * n as f64;
    }
    let theta = solve_spd(cols, &mut gtg, &mut gty);

    let last = field.mlp.layers.last_mut().unwrap();
    let w_cols = last.weight.cols;
    for r in 0..last.weight.rows {
        last.weight.data[r * w_cols] = theta[r];
    }
    last.bias.data[0] = theta[d];
}

/// In-place Cholesky solve of a symmetric positive-definite system.
fn solve_spd(n: usize, a: &mut [f64], b: &mut [f64]) -> Vec<f64> {
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= a[i * n + k] * a[j * n + k];
            }
            if i == j {
                a[i * n + j] = sum.max(1e-300).sqrt();
            } else {
                a[i * n + j] = sum / a[j * n + j];
            }
        }
    }
    // Forward then backward substitution.
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= a[i * n + k] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = b[i];
        for k in i + 1..n {
            sum -= a[k * n + i] * b[k];
        }
        b[i] = sum / a[i * n + i];
    }
    b.to_vec()
}

/// Standard He-style initialization for the radiance network.
pub fn init_radiance_field(cfg: &FieldConfig, seed: u64) -> RadianceField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x52414449414e4345));
    let input = 3 + cfg.encoding.direction_dim() + 3 + cfg.feature_width;
    let mut layers = Vec::with_capacity(cfg.radiance_layers);
    let mut in_dim = input;
    for l in 0..cfg.radiance_layers {
        let is_last = l + 1 == cfg.radiance_layers;
        let out = if is_last { 3 } else { cfg.radiance_hidden };
        let std = (2.0 / in_dim as f64).sqrt();
        let weight = Tensor::new(
            in_dim,
            out,
            (0..in_dim * out).map(|_| normal(&mut rng, 0.0, std)).collect(),
        );
        let bias = Tensor::zeros(1, out);
        layers.push(LinearLayer {
            weight,
            bias,
            activation: if is_last {
                Activation::Identity
            } else {
                Activation::Relu
            },
        });
        in_dim = out;
    }
    RadianceField {
        mlp: MlpParams {
            layers,
            skip_at: None,
        },
        encoding: cfg.encoding,
        feature_width: cfg.feature_width,
    }
}

/// Fresh trainable state: geometric SDF init, He radiance init, and an
/// initial sharpness whose logistic standard deviation is about 0.3 of the
/// unit scene radius.
pub fn init_field_params(cfg: &FieldConfig, seed: u64) -> FieldParams {
    let sdf = match geometric_init(cfg, seed) {
        SdfField::Neural(n) => n,
        SdfField::Analytic(_) => unreachable!(),
    };
    let radiance = init_radiance_field(cfg, seed);
    // Logistic std ~ 1.6/s; 1.6/0.3 ~ 5.3.
    let s0: f64 = 1.6 / 0.3;
    FieldParams {
        sdf,
        radiance,
        log_s: Tensor::scalar(s0.ln()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sdf_eval;
    use crate::math::Vec3;
    use rand::Rng;

    #[test]
    fn initial_field_approximates_sphere() {
        let cfg = FieldConfig::default();
        let field = geometric_init(&cfg, 7);
        let r0 = cfg.init_radius;
        assert!(sdf_eval(&field, Vec3::ZERO) < 0.0);
        assert!(sdf_eval(&field, Vec3::new(2.0 * r0, 0.0, 0.0)) > 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut err = 0.0;
        let n = 500;
        for _ in 0..n {
            // Uniform in the unit ball by rejection.
            let p = loop {
                let c = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                if c.norm() <= 1.0 {
                    break c;
                }
            };
            err += (sdf_eval(&field, p) - (p.norm() - r0)).abs();
        }
        err /= n as f64;
        assert!(
            err < 0.1 * r0,
            "geometric init error {err} exceeds {}",
            0.1 * r0
        );
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = FieldConfig::default();
        let a = init_field_params(&cfg, 1234);
        let b = init_field_params(&cfg, 1234);
        for ((_, ta), (_, tb)) in a.named_tensors().iter().zip(b.named_tensors().iter()) {
            assert_eq!(ta.data.len(), tb.data.len());
            for (x, y) in ta.data.iter().zip(tb.data.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let c = init_field_params(&cfg, 1235);
        let differs = a
            .named_tensors()
            .iter()
            .zip(c.named_tensors().iter())
            .any(|((_, ta), (_, tc))| ta.data != tc.data);
        assert!(differs);
    }
}
