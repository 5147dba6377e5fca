//! Normalized cross correlation of pixel patches.

use super::SupervisionError;
use crate::geometry::PixelPatch;

/// Variance regularizer inside the NCC denominator.
pub const NCC_EPSILON: f64 = 1e-8;
/// Patches with variance below this are textureless; their NCC is
/// meaningless and the score is marked invalid.
pub const VARIANCE_INVALID_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy)]
pub struct NccScore {
    pub value: f64,
    pub valid: bool,
}

impl NccScore {
    pub fn invalid() -> Self {
        Self {
            value: 0.0,
            valid: false,
        }
    }
}

/// Population mean/variance/covariance over the patch samples:
/// `Cov(a,b) / sqrt(Var(a) Var(b) + eps^2)`.
pub fn ncc(ref_patch: &PixelPatch, src_patch: &PixelPatch) -> Result<NccScore, SupervisionError> {
    if !ref_patch.valid || !src_patch.valid {
        return Ok(NccScore::invalid());
    }
    if ref_patch.intensities.len() != src_patch.intensities.len() {
        return Err(SupervisionError::PatchSizeMismatch {
            left: ref_patch.intensities.len(),
            right: src_patch.intensities.len(),
        });
    }
    let score = ncc_values(&ref_patch.intensities, &src_patch.intensities);
    Ok(score)
}

/// NCC over raw intensity slices (the patch-free core shared with the
/// differentiable path).
pub fn ncc_values(a: &[f64], b: &[f64]) -> NccScore {
    let n = a.len() as f64;
    let mean_a: f64 = a.iter().sum::<f64>() / n;
    let mean_b: f64 = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        var_a += dx * dx;
        var_b += dy * dy;
    }
    cov /= n;
    var_a /= n;
    var_b /= n;
    if var_a < VARIANCE_INVALID_FLOOR || var_b < VARIANCE_INVALID_FLOOR {
        return NccScore::invalid();
    }
    NccScore {
        value: cov / (var_a * var_b + NCC_EPSILON * NCC_EPSILON).sqrt(),
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec2;
    use proptest::prelude::*;

    fn patch_of(values: Vec<f64>) -> PixelPatch {
        let size = (values.len() as f64).sqrt() as usize;
        PixelPatch::from_values(Vec2::new(0.0, 0.0), size, values)
    }

    #[test]
    fn identical_patches_score_one() {
        let p = patch_of((0..9).map(|i| i as f64 / 10.0).collect());
        let s = ncc(&p, &p).unwrap();
        assert!(s.valid);
        assert!((s.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn affine_intensity_invariance() {
        let p = patch_of((0..9).map(|i| (i as f64 * 0.7).sin() * 0.3 + 0.5).collect());
        let q = patch_of(p.intensities.iter().map(|v| 0.4 * v + 0.2).collect());
        let s = ncc(&p, &q).unwrap();
        assert!(s.valid);
        assert!((s.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn reversed_ramp_scores_minus_one() {
        let a: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
        let b: Vec<f64> = a.iter().rev().copied().collect();
        let s = ncc(&patch_of(a), &patch_of(b)).unwrap();
        assert!(s.valid);
        assert!((s.value + 1.0).abs() < 1e-6);
    }

    #[test]
    fn textureless_patch_is_invalid() {
        let flat = patch_of(vec![0.5; 9]);
        let ramp = patch_of((0..9).map(|i| i as f64 / 8.0).collect());
        assert!(!ncc(&flat, &ramp).unwrap().valid);
        let mut invalid = ramp.clone();
        invalid.valid = false;
        assert!(!ncc(&invalid, &ramp).unwrap().valid);
    }

    proptest! {
        #[test]
        fn ncc_is_bounded_and_affine_invariant(
            vals in proptest::collection::vec(0.0f64..1.0, 25),
            gain in 0.05f64..3.0,
            offset in -0.3f64..0.3,
        ) {
            let a = patch_of(vals.clone());
            let b = patch_of(vals.iter().map(|v| gain * v + offset).collect());
            let s = ncc(&a, &b).unwrap();
            if s.valid {
                prop_assert!(s.value.abs() <= 1.0 + 1e-9);
                prop_assert!((s.value - 1.0).abs() < 1e-6);
            }
        }
    }
}
