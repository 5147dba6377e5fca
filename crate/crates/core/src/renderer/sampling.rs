//! Stratified coarse sampling plus importance resampling along rays.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::weights::{compute_weights, SParameter};
use crate::field::SdfField;
use crate::geometry::Ray;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SamplingConfig {
    pub n_coarse: usize,
    pub n_importance: usize,
    pub importance_rounds: usize,
    pub near: f64,
    pub far: f64,
    /// Jitter coarse samples within their strata.
    pub stratified: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            n_coarse: 32,
            n_importance: 32,
            importance_rounds: 2,
            near: 0.05,
            far: 2.0,
            stratified: true,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.near >= self.far {
            return Err(format!("near {} must be < far {}", self.near, self.far));
        }
        if self.n_coarse < 2 {
            return Err("n_coarse must be >= 2".into());
        }
        Ok(())
    }

    pub fn with_bounds(mut self, near: f64, far: f64) -> Self {
        self.near = near;
        self.far = far;
        self
    }

    pub fn total_samples(&self) -> usize {
        self.n_coarse + self.n_importance
    }
}

/// Ray parameter interval inside the sphere of the given radius, or `None`
/// when the ray misses it.
pub fn near_far_unit_sphere(ray: &Ray, radius: f64) -> Option<(f64, f64)> {
    let oc = ray.origin;
    let b = oc.dot(ray.direction);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc <= 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t0 = -b - sq;
    let t1 = -b + sq;
    if t1 <= 1e-6 {
        return None;
    }
    Some((t0.max(1e-6), t1))
}

/// Stratified coarse samples in `[near, far]`, then `importance_rounds`
/// rounds of inverse-CDF resampling proportional to the current weights.
/// Output is sorted and deduplicated to a minimum separation of 1e-9.
pub fn sample_ray_hierarchical(
    field: &SdfField,
    ray: &Ray,
    cfg: &SamplingConfig,
    s: SParameter,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let span = cfg.far - cfg.near;
    let mut t: Vec<f64> = (0..cfg.n_coarse)
        .map(|i| {
            let u = if cfg.stratified { rng.gen::<f64>() } else { 0.5 };
            cfg.near + span * (i as f64 + u) / cfg.n_coarse as f64
        })
        .collect();

    if cfg.n_importance > 0 && cfg.importance_rounds > 0 {
        let per_round = cfg.n_importance / cfg.importance_rounds;
        for round in 0..cfg.importance_rounds {
            let n_new = if round + 1 == cfg.importance_rounds {
                cfg.n_importance - per_round * (cfg.importance_rounds - 1)
            } else {
                per_round
            };
            if n_new == 0 {
                continue;
            }
            let pts: Vec<_> = t.iter().map(|&tv| ray.at(tv)).collect();
            let sdf = field.eval_batch(&pts);
            let Ok((_, weights)) = compute_weights(&sdf, &t, s) else {
                break;
            };
            let new_t = sample_pdf(&t, &weights, n_new, cfg.stratified, rng);
            t.extend(new_t);
            t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        }
    } else {
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    t.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    t
}

/// Inverse-CDF sampling over the bins `[t_i, t_{i+1})` with probability
/// proportional to `weights[i]`.
fn sample_pdf(
    t: &[f64],
    weights: &[f64],
    n: usize,
    stratified: bool,
    rng: &mut impl Rng,
) -> Vec<f64> {
    debug_assert_eq!(weights.len() + 1, t.len());
    let eps = 1e-5;
    let total: f64 = weights.iter().sum::<f64>() + eps * weights.len() as f64;
    let mut cdf = Vec::with_capacity(weights.len() + 1);
    cdf.push(0.0);
    let mut acc = 0.0;
    for &w in weights {
        acc += (w + eps) / total;
        cdf.push(acc);
    }

    (0..n)
        .map(|i| {
            let u = if stratified {
                (i as f64 + rng.gen::<f64>()) / n as f64
            } else {
                (i as f64 + 0.5) / n as f64
            };
            // Find the bin containing u.
            let hi = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1).max(1);
            let lo = hi - 1;
            let denom = (cdf[hi] - cdf[lo]).max(1e-12);
            let frac = (u - cdf[lo]) / denom;
            t[lo] + frac * (t[hi] - t[lo])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticSdf;
    use crate::math::Vec3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe_ray() -> Ray {
        Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 1.0))
    }

    #[test]
    fn midpoints_without_jitter() {
        let field = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 0.5,
        });
        let cfg = SamplingConfig {
            n_coarse: 4,
            n_importance: 0,
            importance_rounds: 0,
            near: 0.0,
            far: 4.0,
            stratified: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = sample_ray_hierarchical(&field, &probe_ray(), &cfg, SParameter(64.0), &mut rng);
        assert_eq!(t, vec![0.5, 1.5, 2.5, 3.5]);
    }

    #[test]
    fn importance_concentrates_near_crossing() {
        let field = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 0.5,
        });
        let ray = probe_ray();
        // True crossing by bisection.
        let f = |t: f64| match &field {
            SdfField::Analytic(a) => a.eval(ray.at(t)),
            _ => unreachable!(),
        };
        let (mut lo, mut hi) = (0.5, 2.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let crossing = 0.5 * (lo + hi);

        let cfg = SamplingConfig {
            n_coarse: 16,
            n_importance: 32,
            importance_rounds: 2,
            near: 0.1,
            far: 3.5,
            stratified: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_ray_hierarchical(&field, &ray, &cfg, SParameter(64.0), &mut rng);
        // The coarse stratum containing the crossing.
        let span = cfg.far - cfg.near;
        let stratum = ((crossing - cfg.near) / span * cfg.n_coarse as f64).floor();
        let (s_lo, s_hi) = (
            cfg.near + span * stratum / cfg.n_coarse as f64,
            cfg.near + span * (stratum + 1.0) / cfg.n_coarse as f64,
        );
        let fine_inside = t
            .iter()
            .filter(|&&tv| tv >= s_lo && tv < s_hi)
            .count()
            .saturating_sub(1);
        assert!(
            fine_inside * 2 >= cfg.n_importance,
            "only {fine_inside} of {} importance samples near the crossing",
            cfg.n_importance
        );
    }

    #[test]
    fn fixed_seed_reproduces_samples() {
        let field = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 0.5,
        });
        let cfg = SamplingConfig::default().with_bounds(0.5, 3.5);
        let a = sample_ray_hierarchical(
            &field,
            &probe_ray(),
            &cfg,
            SParameter(32.0),
            &mut ChaCha8Rng::seed_from_u64(99),
        );
        let b = sample_ray_hierarchical(
            &field,
            &probe_ray(),
            &cfg,
            SParameter(32.0),
            &mut ChaCha8Rng::seed_from_u64(99),
        );
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn sphere_interval() {
        let r = probe_ray();
        let (near, far) = near_far_unit_sphere(&r, 1.0).unwrap();
        assert!((near - 1.0).abs() < 1e-12);
        assert!((far - 3.0).abs() < 1e-12);
        let miss = Ray::new(Vec3::new(0.0, 2.0, -2.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(near_far_unit_sphere(&miss, 1.0).is_none());
    }
}
