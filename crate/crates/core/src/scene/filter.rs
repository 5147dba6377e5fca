//! Radius outlier filter for sparse point clouds.

use std::collections::HashMap;

use super::SparsePointSet;
use crate::math::Vec3;

/// Keeps points with at least `min_neighbors` other *retained* points within
/// `radius`, iterating the removal rule to a fixpoint so that re-filtering
/// the output is the identity. Visibility lists are remapped onto the
/// retained set.
pub fn radius_filter(pts: &SparsePointSet, radius: f64, min_neighbors: usize) -> SparsePointSet {
    assert!(radius > 0.0, "radius must be positive");
    let n = pts.points.len();

    // Uniform grid with cell size = radius; neighbors live in the 27 cells
    // around a query point.
    let cell = radius;
    let key = |p: Vec3| -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in pts.points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }

    let r2 = radius * radius;
    let mut keep = vec![true; n];
    loop {
        let mut removed_any = false;
        let next: Vec<bool> = (0..n)
            .map(|i| {
                if !keep[i] {
                    return false;
                }
                let p = pts.points[i];
                let (kx, ky, kz) = key(p);
                let mut count = 0;
                for dx in -1..=1 {
                    for dy in -1..=1 {
                        for dz in -1..=1 {
                            if let Some(bucket) = grid.get(&(kx + dx, ky + dy, kz + dz)) {
                                for &j in bucket {
                                    if j != i
                                        && keep[j]
                                        && (pts.points[j] - p).norm_squared() <= r2
                                    {
                                        count += 1;
                                        if count >= min_neighbors {
                                            return true;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                false
            })
            .collect();
        for i in 0..n {
            if keep[i] && !next[i] {
                removed_any = true;
            }
        }
        keep = next;
        if !removed_any {
            break;
        }
    }

    let mut remap = vec![usize::MAX; n];
    let mut points = Vec::new();
    let mut residuals = pts.reprojection_residuals.as_ref().map(|_| Vec::new());
    for i in 0..n {
        if keep[i] {
            remap[i] = points.len();
            points.push(pts.points[i]);
            if let (Some(out), Some(src)) = (&mut residuals, &pts.reprojection_residuals) {
                out.push(src[i]);
            }
        }
    }
    let visibility = pts
        .visibility
        .iter()
        .map(|list| {
            list.iter()
                .filter(|&&i| keep[i])
                .map(|&i| remap[i])
                .collect()
        })
        .collect();

    SparsePointSet {
        points,
        visibility,
        reprojection_residuals: residuals,
    }
}

/// Median nearest-neighbor distance, the basis for the default filter radius.
pub fn median_nn_distance(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut dists: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| (q - p).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    dists[dists.len() / 2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_of(points: Vec<Vec3>) -> SparsePointSet {
        let visibility = vec![(0..points.len()).collect::<Vec<_>>(), vec![]];
        SparsePointSet {
            points,
            visibility,
            reprojection_residuals: None,
        }
    }

    #[test]
    fn isolated_point_removed() {
        let mut points: Vec<Vec3> = (0..10)
            .map(|i| Vec3::new(i as f64 * 0.01, 0.0, 0.0))
            .collect();
        points.push(Vec3::new(10.0, 10.0, 10.0));
        let filtered = radius_filter(&set_of(points), 0.05, 2);
        assert_eq!(filtered.points.len(), 10);
        assert!(filtered.points.iter().all(|p| p.norm() < 1.0));
        // Visibility indices remapped and in range.
        for list in &filtered.visibility {
            for &i in list {
                assert!(i < filtered.points.len());
            }
        }
    }

    #[test]
    fn coincident_points_all_kept() {
        let points = vec![Vec3::new(0.5, 0.5, 0.5); 5];
        let filtered = radius_filter(&set_of(points), 0.1, 2);
        assert_eq!(filtered.points.len(), 5);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..10 {
            let n = 200;
            let points: Vec<Vec3> = (0..n)
                .map(|_| {
                    Vec3::new(
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                        rng.gen_range(-1.0..1.0),
                    )
                })
                .collect();
            let radius = rng.gen_range(0.05..0.4);
            let min_neighbors = rng.gen_range(1..5);
            let filtered = radius_filter(&set_of(points.clone()), radius, min_neighbors);

            // O(n^2) neighbor-count oracle, iterated with the same
            // remove-until-stable rule.
            let mut keep = vec![true; n];
            loop {
                let next: Vec<bool> = (0..n)
                    .map(|i| {
                        keep[i]
                            && points
                                .iter()
                                .enumerate()
                                .filter(|&(j, &q)| {
                                    j != i
                                        && keep[j]
                                        && (q - points[i]).norm_squared() <= radius * radius
                                })
                                .count()
                                >= min_neighbors
                    })
                    .collect();
                if next == keep {
                    break;
                }
                keep = next;
            }
            let oracle_keep: Vec<Vec3> = points
                .iter()
                .zip(keep.iter())
                .filter(|(_, &k)| k)
                .map(|(&p, _)| p)
                .collect();
            assert_eq!(filtered.points.len(), oracle_keep.len());
            for (a, b) in filtered.points.iter().zip(oracle_keep.iter()) {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn filter_is_idempotent_at_default_parameters() {
        // Surface-like cloud plus isolated outliers, filtered with the
        // default radius (2x median nearest-neighbor distance) and
        // min_neighbors = 2.
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let mut points: Vec<Vec3> = (0..400)
            .map(|_| {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                v.normalized().unwrap_or(Vec3::new(1.0, 0.0, 0.0)) * 0.9
            })
            .collect();
        for i in 0..6 {
            points.push(Vec3::new(3.0 + i as f64, 5.0, -2.0 * i as f64));
        }
        let radius = 3.0 * median_nn_distance(&points);
        let once = radius_filter(&set_of(points.clone()), radius, 2);
        assert!(once.points.len() <= points.len());
        assert!(once.points.len() >= 300, "filter removed too many inliers");
        assert!(
            once.points.iter().all(|p| p.norm() < 1.0),
            "an outlier survived"
        );
        let twice = radius_filter(&once, radius, 2);
        assert_eq!(once.points.len(), twice.points.len());
        for (a, b) in once.points.iter().zip(twice.points.iter()) {
            assert_eq!(a, b);
        }
    }
}
