//! SDF-to-opacity conversion and the discrete rendering weights.

use serde::{Deserialize, Serialize};

use super::RendererError;
use crate::tape::sigmoid_scalar;

/// Sharpness (inverse standard deviation) of the logistic CDF used to turn
/// signed distances into opacity. Stored in log space when learned.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SParameter(pub f64);

impl SParameter {
    pub fn from_log(log_s: f64) -> Self {
        Self(log_s.exp())
    }

    /// Logistic CDF of sharpness `s`.
    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        sigmoid_scalar(self.0 * x)
    }
}

/// Discrete opacities and weights from consecutive SDF samples:
/// `alpha_i = max((cdf(sdf_i) - cdf(sdf_{i+1})) / max(cdf(sdf_i), 1e-12), 0)`
/// and `w_i = alpha_i * prod_{j<i} (1 - alpha_j)`.
///
/// Both outputs have length `n - 1` for `n` input samples.
pub fn compute_weights(
    sdf_values: &[f64],
    t: &[f64],
    s: SParameter,
) -> Result<(Vec<f64>, Vec<f64>), RendererError> {
    if sdf_values.len() != t.len() {
        return Err(RendererError::LengthMismatch {
            sdf: sdf_values.len(),
            t: t.len(),
        });
    }
    if t.len() < 2 {
        return Err(RendererError::TooFewSamples(t.len()));
    }
    debug_assert!(t.windows(2).all(|w| w[0] < w[1]), "t must be sorted");

    let n = t.len() - 1;
    let mut alphas = Vec::with_capacity(n);
    for i in 0..n {
        let phi_i = s.cdf(sdf_values[i]);
        let phi_next = s.cdf(sdf_values[i + 1]);
        let alpha = ((phi_i - phi_next) / phi_i.max(1e-12)).max(0.0);
        alphas.push(alpha);
    }
    let mut weights = Vec::with_capacity(n);
    let mut transmittance = 1.0;
    for &alpha in &alphas {
        weights.push(alpha * transmittance);
        transmittance *= 1.0 - alpha;
    }
    Ok((alphas, weights))
}

/// Weight-averaged expected depth `sum(w t) / max(sum w, 1e-12)`.
pub fn render_depth(weights: &[f64], t: &[f64]) -> f64 {
    debug_assert_eq!(weights.len(), t.len());
    let wsum: f64 = weights.iter().sum();
    let acc: f64 = weights.iter().zip(t.iter()).map(|(w, tv)| w * tv).sum();
    acc / wsum.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn receding_surface_has_zero_weights() {
        let t = vec![0.0, 1.0, 2.0, 3.0];
        let sdf = vec![0.5, 1.0, 1.5, 2.0];
        let (alphas, weights) = compute_weights(&sdf, &t, SParameter(10.0)).unwrap();
        assert!(alphas.iter().all(|&a| a == 0.0));
        assert!(weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn saturated_crossing_takes_all_weight() {
        let t = vec![0.0, 1.0];
        let a = 5.0;
        let s = SParameter(100.0);
        let (alphas, weights) = compute_weights(&[a, -a], &t, s).unwrap();
        assert!((alphas[0] - 1.0).abs() < 1e-12);
        assert!((weights[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weight_sum_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..100 {
            let n = rng.gen_range(3..40);
            let t: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
            // Monotone decreasing sdf sequence.
            let mut sdf = Vec::with_capacity(n);
            let mut v = rng.gen_range(0.5..2.0);
            for _ in 0..n {
                sdf.push(v);
                v -= rng.gen_range(0.0..0.4);
            }
            let (alphas, weights) = compute_weights(&sdf, &t, SParameter(rng.gen_range(1.0..200.0))).unwrap();
            let wsum: f64 = weights.iter().sum();
            let prod: f64 = alphas.iter().map(|a| 1.0 - a).product();
            assert!((wsum - (1.0 - prod)).abs() < 1e-12);
            assert!(wsum <= 1.0 + 1e-6);
            assert!(weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn earlier_crossing_suppresses_downstream_weights() {
        let t: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let s = SParameter(50.0);
        let base = vec![3.0, 2.5, 2.0, 1.0, 0.5, -0.5, -1.0, -1.5];
        let (_, w_base) = compute_weights(&base, &t, s).unwrap();
        // Insert a saturated crossing early on.
        let blocked = vec![3.0, -3.0, 2.0, 1.0, 0.5, -0.5, -1.0, -1.5];
        let (_, w_blocked) = compute_weights(&blocked, &t, s).unwrap();
        for i in 2..w_base.len() {
            assert!(w_blocked[i] <= w_base[i] + 1e-15);
        }
    }

    #[test]
    fn depth_of_point_masses() {
        assert_eq!(render_depth(&[0.0, 1.0, 0.0], &[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(render_depth(&[0.5, 0.0, 0.5], &[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(matches!(
            compute_weights(&[1.0, 2.0], &[0.0, 1.0, 2.0], SParameter(1.0)),
            Err(RendererError::LengthMismatch { .. })
        ));
    }
}
