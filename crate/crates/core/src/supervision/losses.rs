//! Scalar loss terms and their weighted total.

use serde::{Deserialize, Serialize};

use super::SupervisionError;
use crate::field::{sdf_eval, SdfField};
use crate::math::Vec3;

/// Weights of the total loss
/// `L = L_color + alpha L_reg + beta L_sdf + gamma L_photo`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            beta: 1.0,
            gamma: 0.5,
        }
    }
}

/// Per-iteration loss components with contribution counts.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub color: f64,
    pub eikonal: f64,
    pub sdf: f64,
    pub photometric: f64,
    pub total: f64,
    pub n_rays: usize,
    pub n_eikonal_points: usize,
    pub n_sdf_points: usize,
    pub n_photometric_pixels: usize,
}

/// Mean L1 color error: per-channel absolute differences summed per pixel,
/// averaged over pixels.
pub fn color_loss(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64, SupervisionError> {
    if rendered.len() != truth.len() {
        return Err(SupervisionError::LengthMismatch {
            left: rendered.len(),
            right: truth.len(),
        });
    }
    if rendered.is_empty() {
        return Err(SupervisionError::EmptyBatch);
    }
    let sum: f64 = rendered
        .iter()
        .zip(truth.iter())
        .map(|(r, t)| (0..3).map(|c| (r[c] - t[c]).abs()).sum::<f64>())
        .sum();
    Ok(sum / rendered.len() as f64)
}

/// Mean squared deviation of gradient norms from 1.
pub fn eikonal_loss(gradients: &[Vec3]) -> Result<f64, SupervisionError> {
    if gradients.is_empty() {
        return Err(SupervisionError::EmptyBatch);
    }
    let sum: f64 = gradients
        .iter()
        .map(|g| {
            let d = g.norm() - 1.0;
            d * d
        })
        .sum();
    Ok(sum / gradients.len() as f64)
}

/// View-aware SDF loss: mean |sdf| over the points visible in the rendered
/// view. Returns `(loss, count)`; an empty set contributes zero.
pub fn sdf_loss(f: &SdfField, visible_points: &[Vec3]) -> (f64, usize) {
    if visible_points.is_empty() {
        return (0.0, 0);
    }
    let sum: f64 = match f {
        SdfField::Neural(n) => n.eval_batch(visible_points).iter().map(|v| v.abs()).sum(),
        SdfField::Analytic(_) => visible_points
            .iter()
            .map(|&p| sdf_eval(f, p).abs())
            .sum(),
    };
    (sum / visible_points.len() as f64, visible_points.len())
}

/// `L = L_color + alpha L_reg + beta L_sdf + gamma L_photo`.
pub fn total_loss(b: &LossBreakdown, w: &LossWeights) -> f64 {
    b.color + w.alpha * b.eikonal + w.beta * b.sdf + w.gamma * b.photometric
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticSdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_colors_have_zero_loss() {
        let a = vec![[0.1, 0.5, 0.9]; 7];
        assert_eq!(color_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn l1_definition() {
        let rendered = vec![[0.0, 0.0, 0.0]];
        let truth = vec![[1.0, 1.0, 1.0]];
        assert_eq!(color_loss(&rendered, &truth).unwrap(), 3.0);
    }

    #[test]
    fn color_loss_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let n = 33;
        let a: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let b: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let fast = color_loss(&a, &b).unwrap();
        let mut oracle = 0.0;
        for i in 0..n {
            for c in 0..3 {
                oracle += (a[i][c] - b[i][c]).abs();
            }
        }
        oracle /= n as f64;
        assert!((fast - oracle).abs() < 1e-12);
    }

    #[test]
    fn eikonal_on_unit_gradients_is_zero() {
        let g = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, -1.0, 0.0)];
        assert_eq!(eikonal_loss(&g).unwrap(), 0.0);
        assert_eq!(eikonal_loss(&[Vec3::new(2.0, 0.0, 0.0)]).unwrap(), 1.0);
        assert!(matches!(
            eikonal_loss(&[]),
            Err(SupervisionError::EmptyBatch)
        ));
    }

    #[test]
    fn sdf_loss_on_the_zero_level_set_vanishes() {
        let f = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 1.0,
        });
        let pts = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 0.0, -1.0)];
        let (loss, n) = sdf_loss(&f, &pts);
        assert_eq!(loss, 0.0);
        assert_eq!(n, 2);
        let off = vec![Vec3::new(1.1, 0.0, 0.0)];
        let (loss, _) = sdf_loss(&f, &off);
        assert!((loss - 0.1).abs() < 1e-12);
        assert_eq!(sdf_loss(&f, &[]), (0.0, 0));
    }

    #[test]
    fn total_at_paper_weights() {
        let b = LossBreakdown {
            color: 1.0,
            eikonal: 1.0,
            sdf: 1.0,
            photometric: 1.0,
            ..Default::default()
        };
        let total = total_loss(&b, &LossWeights::default());
        assert!((total - 2.8).abs() < 1e-15);
        let zero = LossBreakdown::default();
        assert_eq!(total_loss(&zero, &LossWeights::default()), 0.0);
    }

    #[test]
    fn total_matches_formula_for_random_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(82);
        for _ in 0..50 {
            let b = LossBreakdown {
                color: rng.gen(),
                eikonal: rng.gen(),
                sdf: rng.gen(),
                photometric: rng.gen(),
                ..Default::default()
            };
            let w = LossWeights {
                alpha: rng.gen(),
                beta: rng.gen(),
                gamma: rng.gen(),
            };
            let expected = b.color + w.alpha * b.eikonal + w.beta * b.sdf + w.gamma * b.photometric;
            assert!((total_loss(&b, &w) - expected).abs() < 1e-15);
        }
    }
}
