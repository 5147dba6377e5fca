//! Locating the zero-level set along sampled rays.

use super::RendererError;
use crate::field::{sdf_gradient, SdfField};
use crate::geometry::Ray;
use crate::math::Vec3;

/// A located surface point along a ray.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceIntersection {
    pub t: f64,
    pub point: Vec3,
    pub normal: Vec3,
    pub valid: bool,
}

impl SurfaceIntersection {
    pub fn invalid() -> Self {
        Self {
            t: f64::NAN,
            point: Vec3::ZERO,
            normal: Vec3::new(0.0, 0.0, 1.0),
            valid: false,
        }
    }
}

/// Indices `i` with a sign change between consecutive samples
/// (`sdf_i * sdf_{i+1} < 0`), plus samples lying exactly on the surface
/// (`sdf_i == 0`, a crossing at `t_i` by convention).
pub fn locate_zero_crossings(t: &[f64], sdf: &[f64]) -> Vec<usize> {
    debug_assert_eq!(t.len(), sdf.len());
    let mut out = Vec::new();
    for i in 0..sdf.len() {
        if sdf[i] == 0.0 {
            out.push(i);
        } else if i + 1 < sdf.len() && sdf[i] * sdf[i + 1] < 0.0 {
            out.push(i);
        }
    }
    out
}

/// Linear interpolation of the crossing inside `[t_i, t_{i+1}]`:
/// `t_hat = (sdf_i t_{i+1} - sdf_{i+1} t_i) / (sdf_i - sdf_{i+1})`.
pub fn interpolate_intersection(
    t_i: f64,
    t_next: f64,
    sdf_i: f64,
    sdf_next: f64,
) -> Result<f64, RendererError> {
    if sdf_i * sdf_next >= 0.0 {
        return Err(RendererError::NoSignChange);
    }
    Ok((sdf_i * t_next - sdf_next * t_i) / (sdf_i - sdf_next))
}

/// All interpolated crossing parameters along a sampled ray, ascending.
pub fn ray_crossings(t: &[f64], sdf: &[f64]) -> Vec<f64> {
    locate_zero_crossings(t, sdf)
        .into_iter()
        .map(|i| {
            if sdf[i] == 0.0 {
                t[i]
            } else {
                interpolate_intersection(t[i], t[i + 1], sdf[i], sdf[i + 1])
                    .expect("sign change checked by locate_zero_crossings")
            }
        })
        .collect()
}

/// First crossing along the ray (occlusion-aware choice), with the surface
/// normal from the normalized SDF gradient. Invalid when there are none.
pub fn first_intersection(
    crossings: &[f64],
    ray: &Ray,
    field: &SdfField,
) -> SurfaceIntersection {
    let Some(&t_star) = crossings
        .iter()
        .min_by(|a, b| a.partial_cmp(b).unwrap())
    else {
        return SurfaceIntersection::invalid();
    };
    let point = ray.at(t_star);
    let grad = sdf_gradient(field, point);
    let normal = grad.normalized().unwrap_or(Vec3::new(0.0, 0.0, 1.0));
    SurfaceIntersection {
        t: t_star,
        point,
        normal,
        valid: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::AnalyticSdf;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_crossing_found() {
        let t = vec![0.0, 1.0, 2.0, 3.0];
        let sdf = vec![1.0, 0.5, -0.5, -1.0];
        assert_eq!(locate_zero_crossings(&t, &sdf), vec![1]);
    }

    #[test]
    fn no_crossings_when_all_positive() {
        let t = vec![0.0, 1.0, 2.0];
        let sdf = vec![1.0, 0.5, 0.25];
        assert!(locate_zero_crossings(&t, &sdf).is_empty());
    }

    #[test]
    fn exact_zero_sample_is_a_crossing_at_that_sample() {
        let t = vec![0.0, 1.0, 2.0];
        let sdf = vec![1.0, 0.0, 1.0];
        assert_eq!(locate_zero_crossings(&t, &sdf), vec![1]);
        assert_eq!(ray_crossings(&t, &sdf), vec![1.0]);
    }

    #[test]
    fn matches_sign_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..20 {
            let n = 512;
            let t: Vec<f64> = (0..n).map(|i| i as f64 / 100.0).collect();
            // Smooth random field: sum of a few sinusoids.
            let (a, b, c) = (
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.5..2.0),
                rng.gen_range(-0.5..0.5),
            );
            let sdf: Vec<f64> = t.iter().map(|&x| (a * x).sin() + (b * x + 1.0).cos() * 0.5 + c).collect();
            let fast = locate_zero_crossings(&t, &sdf);
            let mut oracle = Vec::new();
            for i in 0..n {
                if sdf[i] == 0.0 || (i + 1 < n && sdf[i] * sdf[i + 1] < 0.0) {
                    oracle.push(i);
                }
            }
            assert_eq!(fast, oracle);
        }
    }

    #[test]
    fn interpolation_formula() {
        assert_eq!(interpolate_intersection(1.0, 2.0, 0.5, -0.5).unwrap(), 1.5);
        assert!((interpolate_intersection(0.0, 1.0, 0.9, -0.1).unwrap() - 0.9).abs() < 1e-15);
        assert!(interpolate_intersection(0.0, 1.0, 0.9, 0.1).is_err());
    }

    #[test]
    fn sphere_intersection_matches_bisection() {
        let field = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 1.0,
        });
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0));
        let n = 128;
        let t: Vec<f64> = (0..n).map(|i| 0.5 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let sdf: Vec<f64> = t
            .iter()
            .map(|&tv| match &field {
                SdfField::Analytic(a) => a.eval(ray.at(tv)),
                _ => unreachable!(),
            })
            .collect();
        let crossings = ray_crossings(&t, &sdf);
        assert_eq!(crossings.len(), 2);
        let hit = first_intersection(&crossings, &ray, &field);
        assert!(hit.valid);
        // Bisection oracle to 1e-10.
        let f = |tv: f64| ray.at(tv).norm() - 1.0;
        let (mut lo, mut hi) = (0.5, 3.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let exact = 0.5 * (lo + hi);
        assert!((hit.t - exact).abs() < 1e-3, "err {}", (hit.t - exact).abs());
        assert!((hit.normal - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-9);
    }

    #[test]
    fn first_hit_on_near_shell_of_two_spheres() {
        // Two separated spheres along the ray; the first piercing must win.
        let field = SdfField::Analytic(AnalyticSdf::Union {
            parts: vec![
                AnalyticSdf::Sphere {
                    center: Vec3::new(0.0, 0.0, 0.0),
                    radius: 0.4,
                },
                AnalyticSdf::Sphere {
                    center: Vec3::new(0.0, 0.0, 1.6),
                    radius: 0.4,
                },
            ],
        });
        let ray = Ray::new(Vec3::new(0.0, 0.0, -2.0), Vec3::new(0.0, 0.0, 1.0));
        let n = 256;
        let t: Vec<f64> = (0..n).map(|i| 0.2 + 4.0 * i as f64 / (n - 1) as f64).collect();
        let sdf = field.eval_batch(&t.iter().map(|&tv| ray.at(tv)).collect::<Vec<_>>());
        let crossings = ray_crossings(&t, &sdf);
        assert_eq!(crossings.len(), 4);
        let hit = first_intersection(&crossings, &ray, &field);
        // Analytic first hit: sphere at origin, entry at z = -0.4 -> t = 1.6.
        assert!((hit.t - 1.6).abs() < 1e-3);
        // Appending extra far crossings must not change the result.
        let mut extended = crossings.clone();
        extended.push(5.0);
        let hit2 = first_intersection(&extended, &ray, &field);
        assert_eq!(hit.t, hit2.t);
    }

    #[test]
    fn empty_crossings_are_invalid() {
        let field = SdfField::Analytic(AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 1.0,
        });
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0));
        let hit = first_intersection(&[], &ray, &field);
        assert!(!hit.valid);
    }
}
