//! Synthetic scene generation: exact ray-cast rendering of an analytic SDF
//! with procedural albedo, plus on-surface sparse points with ray-cast
//! visibility. Everything is deterministic for a fixed seed.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::save_scene;
use super::types::{GroundTruth, NormalizationTransform, Scene, SparsePointSet};
use super::SceneError;
use crate::field::AnalyticSdf;
use crate::geometry::{ray_through_pixel, to_gray, CameraModel, Ray, RgbImage};
use crate::math::{Mat3, Vec2, Vec3};

/// Multi-octave value noise mapped to an albedo ramp.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    pub octaves: usize,
    pub base_frequency: f64,
    /// Albedo at noise 0 and noise 1 per channel.
    pub color_low: [f64; 3],
    pub color_high: [f64; 3],
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            octaves: 4,
            base_frequency: 6.0,
            color_low: [0.08, 0.12, 0.25],
            color_high: [0.95, 0.85, 0.55],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraRingSpec {
    pub count: usize,
    pub radius: f64,
    pub elevation_degrees: f64,
    pub width: usize,
    pub height: usize,
    /// Focal length in pixels; derived from the ring geometry when absent.
    pub focal_px: Option<f64>,
}

impl Default for CameraRingSpec {
    fn default() -> Self {
        Self {
            count: 20,
            radius: 2.6,
            elevation_degrees: 22.0,
            width: 96,
            height: 96,
            focal_px: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneSpec {
    pub sdf: AnalyticSdf,
    pub texture: TextureSpec,
    pub cameras: CameraRingSpec,
    pub sparse_point_count: usize,
    /// Per-channel gaussian pixel noise before 8-bit quantization.
    pub sigma_image: f64,
    /// Jitter of sparse points along the surface normal.
    pub sigma_point: f64,
    pub background: [f64; 3],
    pub seed: u64,
}

impl Default for SyntheticSceneSpec {
    fn default() -> Self {
        Self {
            sdf: AnalyticSdf::Sphere {
                center: Vec3::ZERO,
                radius: 0.9,
            },
            texture: TextureSpec::default(),
            cameras: CameraRingSpec::default(),
            sparse_point_count: 500,
            sigma_image: 0.0,
            sigma_point: 0.0,
            background: [0.0, 0.0, 0.0],
            seed: 0,
        }
    }
}

impl SyntheticSceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if self.cameras.count < 2 {
            return Err(SceneError::SpecInvalid(format!(
                "camera count must be >= 2, got {}",
                self.cameras.count
            )));
        }
        if self.cameras.width < 16 || self.cameras.height < 16 {
            return Err(SceneError::SpecInvalid("image size below 16 px".into()));
        }
        if self.cameras.radius <= 1.0 {
            return Err(SceneError::SpecInvalid(
                "camera ring radius must exceed the unit sphere".into(),
            ));
        }
        if self.sparse_point_count == 0 {
            return Err(SceneError::SpecInvalid("need at least one sparse point".into()));
        }
        Ok(())
    }
}

/// Integer lattice hash in [0, 1).
fn lattice_hash(x: i64, y: i64, z: i64, seed: u64) -> f64 {
    let mut h = seed
        ^ (x as u64).wrapping_mul(0x9E3779B97F4A7C15)
        ^ (y as u64).wrapping_mul(0xC2B2AE3D27D4EB4F)
        ^ (z as u64).wrapping_mul(0x165667B19E3779F9);
    h ^= h >> 30;
    h = h.wrapping_mul(0xBF58476D1CE4E5B9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94D049BB133111EB);
    h ^= h >> 31;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Trilinear value noise at `p`.
fn value_noise(p: Vec3, seed: u64) -> f64 {
    let xf = p.x.floor();
    let yf = p.y.floor();
    let zf = p.z.floor();
    let (x0, y0, z0) = (xf as i64, yf as i64, zf as i64);
    let (tx, ty, tz) = (smoothstep(p.x - xf), smoothstep(p.y - yf), smoothstep(p.z - zf));
    let mut acc = 0.0;
    for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
        for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
            for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                acc += wx * wy * wz * lattice_hash(x0 + dx, y0 + dy, z0 + dz, seed);
            }
        }
    }
    acc
}

/// Multi-octave noise in [0, 1].
pub fn albedo_noise(p: Vec3, spec: &TextureSpec, seed: u64) -> f64 {
    let mut amp = 1.0;
    let mut freq = spec.base_frequency;
    let mut acc = 0.0;
    let mut total = 0.0;
    for octave in 0..spec.octaves.max(1) {
        acc += amp * value_noise(p * freq, seed.wrapping_add(octave as u64));
        total += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    acc / total
}

fn albedo(p: Vec3, spec: &TextureSpec, seed: u64) -> [f64; 3] {
    let t = albedo_noise(p, spec, seed);
    [
        spec.color_low[0] + t * (spec.color_high[0] - spec.color_low[0]),
        spec.color_low[1] + t * (spec.color_high[1] - spec.color_low[1]),
        spec.color_low[2] + t * (spec.color_high[2] - spec.color_low[2]),
    ]
}

/// Sphere-traced first hit of `ray` against an analytic SDF; returns the ray
/// parameter refined by bisection.
pub fn sphere_trace(sdf: &AnalyticSdf, ray: &Ray, t_max: f64) -> Option<f64> {
    let mut t = 1e-4;
    let mut prev_t = t;
    let mut prev_d = sdf.eval(ray.at(t));
    if prev_d < 0.0 {
        return Some(t);
    }
    for _ in 0..512 {
        let step = prev_d.max(1e-6);
        t += step;
        if t > t_max {
            return None;
        }
        let d = sdf.eval(ray.at(t));
        if d < 0.0 {
            // Bracketed: refine to high precision.
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if sdf.eval(ray.at(mid)) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        if d < 1e-9 {
            return Some(t);
        }
        prev_t = t;
        prev_d = d;
    }
    None
}

fn look_at_camera(
    position: Vec3,
    target: Vec3,
    spec: &CameraRingSpec,
) -> Result<CameraModel, SceneError> {
    let forward = (target - position)
        .normalized()
        .ok_or_else(|| SceneError::SpecInvalid("camera position coincides with target".into()))?;
    let up_hint = Vec3::new(0.0, 0.0, 1.0);
    let x_axis = up_hint
        .cross(forward)
        .normalized()
        .ok_or_else(|| SceneError::SpecInvalid("camera looks along the pole".into()))?;
    let y_axis = forward.cross(x_axis);
    let rotation = Mat3::from_rows(x_axis.to_array(), y_axis.to_array(), forward.to_array());
    let translation = -(rotation * position);
    let focal = spec.focal_px.unwrap_or_else(|| {
        // Object of radius ~1 at ring distance fills most of the image.
        let half_angle = (1.0 / spec.radius).asin() * 1.15;
        spec.width as f64 * 0.5 / half_angle.tan()
    });
    CameraModel::new(
        focal,
        focal,
        (spec.width as f64 - 1.0) * 0.5,
        (spec.height as f64 - 1.0) * 0.5,
        rotation,
        translation,
        spec.width,
        spec.height,
    )
    .map_err(|e| SceneError::SpecInvalid(format!("derived camera invalid: {e}")))
}

fn render_view(
    cam: &CameraModel,
    spec: &SyntheticSceneSpec,
    light: Vec3,
    rng: &mut ChaCha8Rng,
) -> (RgbImage, usize) {
    let mut img = RgbImage::filled(cam.width, cam.height, spec.background);
    let mut object_pixels = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let ray = ray_through_pixel(cam, Vec2::new(x as f64, y as f64));
            if let Some(t) = sphere_trace(&spec.sdf, &ray, spec.cameras.radius + 2.5) {
                object_pixels += 1;
                let p = ray.at(t);
                let n = spec.sdf.gradient(p);
                let lambert = n.dot(light).max(0.0);
                let a = albedo(p, &spec.texture, spec.seed);
                let shade = 0.25 + 0.75 * lambert;
                img.set(
                    x,
                    y,
                    [a[0] * shade, a[1] * shade, a[2] * shade],
                );
            }
        }
    }
    if spec.sigma_image > 0.0 {
        for px in &mut img.data {
            for c in px.iter_mut() {
                let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                *c = (*c + spec.sigma_image * g).clamp(0.0, 1.0);
            }
        }
    }
    // 8-bit quantization is part of the test realism.
    for px in &mut img.data {
        for c in px.iter_mut() {
            *c = (*c * 255.0).round().clamp(0.0, 255.0) / 255.0;
        }
    }
    (img, object_pixels)
}

/// Uniform sample on the surface of one primitive.
fn sample_primitive_surface(sdf: &AnalyticSdf, rng: &mut ChaCha8Rng) -> Option<(Vec3, Vec3)> {
    match sdf {
        AnalyticSdf::Sphere { center, radius } => {
            let p = loop {
                let v = Vec3::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                );
                let n = v.norm();
                if n > 1e-6 && n <= 1.0 {
                    break v / n;
                }
            };
            Some((*center + p * *radius, p))
        }
        AnalyticSdf::Box {
            center,
            half_extents,
        } => {
            let h = *half_extents;
            let areas = [h.y * h.z, h.x * h.z, h.x * h.y];
            let total: f64 = areas.iter().sum::<f64>() * 2.0;
            let mut pick = rng.gen_range(0.0..total);
            for axis in 0..3 {
                for sign in [-1.0, 1.0] {
                    let a = areas[axis];
                    if pick < a {
                        let u = rng.gen_range(-1.0..1.0);
                        let v = rng.gen_range(-1.0..1.0);
                        let (p, n) = match axis {
                            0 => (
                                Vec3::new(sign * h.x, u * h.y, v * h.z),
                                Vec3::new(sign, 0.0, 0.0),
                            ),
                            1 => (
                                Vec3::new(u * h.x, sign * h.y, v * h.z),
                                Vec3::new(0.0, sign, 0.0),
                            ),
                            _ => (
                                Vec3::new(u * h.x, v * h.y, sign * h.z),
                                Vec3::new(0.0, 0.0, sign),
                            ),
                        };
                        return Some((*center + p, n));
                    }
                    pick -= a;
                }
            }
            None
        }
        AnalyticSdf::Plane { .. } => None,
        AnalyticSdf::Union { parts } => {
            // Pick a part weighted by rough surface area, rejecting samples
            // swallowed by the union.
            let weights: Vec<f64> = parts
                .iter()
                .map(|p| match p {
                    AnalyticSdf::Sphere { radius, .. } => radius * radius,
                    AnalyticSdf::Box { half_extents: h, .. } => {
                        2.0 * (h.x * h.y + h.y * h.z + h.x * h.z)
                    }
                    _ => 0.0,
                })
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                return None;
            }
            for _ in 0..256 {
                let mut pick = rng.gen_range(0.0..total);
                let mut chosen = 0;
                for (i, w) in weights.iter().enumerate() {
                    if pick < *w {
                        chosen = i;
                        break;
                    }
                    pick -= w;
                }
                if let Some((p, n)) = sample_primitive_surface(&parts[chosen], rng) {
                    let full = AnalyticSdf::Union {
                        parts: parts.clone(),
                    };
                    if full.eval(p) > -1e-9 {
                        return Some((p, n));
                    }
                }
            }
            None
        }
    }
}

/// Ray-cast visibility oracle: the surface point must be the first hit of
/// the camera-to-point ray, within 1e-6.
pub fn point_visible(sdf: &AnalyticSdf, cam: &CameraModel, point: Vec3) -> bool {
    let Ok((px, _)) = crate::geometry::project(cam, point) else {
        return false;
    };
    if !cam.contains_pixel(px) {
        return false;
    }
    let origin = cam.center();
    let Some(dir) = (point - origin).normalized() else {
        return false;
    };
    let ray = Ray::new(origin, dir);
    let dist = (point - origin).norm();
    match sphere_trace(sdf, &ray, dist + 1.0) {
        Some(t) => (ray.at(t) - point).norm() < 1e-6,
        None => false,
    }
}

/// Generates and writes a synthetic scene; returns the in-memory scene.
pub fn synth_scene(spec: &SyntheticSceneSpec, out_path: &Path) -> Result<Scene, SceneError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let light = Vec3::new(0.5, -0.3, 0.8).normalized().unwrap();

    // Camera ring.
    let mut cameras = Vec::with_capacity(spec.cameras.count);
    let elev = spec.cameras.elevation_degrees.to_radians();
    for k in 0..spec.cameras.count {
        let az = 2.0 * std::f64::consts::PI * k as f64 / spec.cameras.count as f64;
        let pos = Vec3::new(
            spec.cameras.radius * elev.cos() * az.cos(),
            spec.cameras.radius * elev.cos() * az.sin(),
            spec.cameras.radius * elev.sin(),
        );
        cameras.push(look_at_camera(pos, Vec3::ZERO, &spec.cameras)?);
    }

    // Images.
    let mut images = Vec::with_capacity(cameras.len());
    let min_object = spec.cameras.width * spec.cameras.height / 10;
    for (i, cam) in cameras.iter().enumerate() {
        let (img, object_pixels) = render_view(cam, spec, light, &mut rng);
        if object_pixels < min_object {
            return Err(SceneError::SpecInvalid(format!(
                "camera {i} sees only {object_pixels} object pixels (need {min_object})"
            )));
        }
        images.push(img);
    }

    // Sparse points: uniform on the true surface, jittered along the normal;
    // visibility from the ray-cast oracle on the pre-jitter point.
    let mut points = Vec::with_capacity(spec.sparse_point_count);
    let mut visibility = vec![Vec::new(); cameras.len()];
    let mut guard = 0;
    while points.len() < spec.sparse_point_count {
        guard += 1;
        if guard > spec.sparse_point_count * 200 {
            return Err(SceneError::SpecInvalid(
                "could not sample enough visible surface points".into(),
            ));
        }
        let Some((p, n)) = sample_primitive_surface(&spec.sdf, &mut rng) else {
            return Err(SceneError::SpecInvalid(
                "surface sampling unsupported for this sdf (unbounded?)".into(),
            ));
        };
        let views: Vec<usize> = cameras
            .iter()
            .enumerate()
            .filter(|(_, cam)| point_visible(&spec.sdf, cam, p))
            .map(|(i, _)| i)
            .collect();
        if views.is_empty() {
            continue;
        }
        let jitter = if spec.sigma_point > 0.0 {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            n * (spec.sigma_point * g)
        } else {
            Vec3::ZERO
        };
        let idx = points.len();
        points.push(p + jitter);
        for v in views {
            visibility[v].push(idx);
        }
    }

    // Ground-truth surface samples for evaluation.
    let mut surface_samples = Vec::with_capacity(4000);
    for _ in 0..4000 {
        if let Some((p, _)) = sample_primitive_surface(&spec.sdf, &mut rng) {
            surface_samples.push(p);
        }
    }

    let scene = Scene {
        cameras,
        images: images.clone(),
        gray: images.iter().map(to_gray).collect(),
        sparse: SparsePointSet {
            points,
            visibility,
            reprojection_residuals: None,
        },
        normalization: NormalizationTransform::identity(),
        background: spec.background,
        ground_truth: Some(GroundTruth {
            sdf: spec.sdf.clone(),
            surface_samples,
        }),
        seed: Some(spec.seed),
    };
    scene.validate()?;
    save_scene(&scene, out_path)?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> SyntheticSceneSpec {
        SyntheticSceneSpec {
            cameras: CameraRingSpec {
                count: 4,
                width: 48,
                height: 48,
                ..CameraRingSpec::default()
            },
            sparse_point_count: 40,
            seed: 5,
            ..SyntheticSceneSpec::default()
        }
    }

    #[test]
    fn generated_points_lie_on_surface() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let scene = synth_scene(&spec, dir.path()).unwrap();
        for p in &scene.sparse.points {
            assert!(spec.sdf.eval(*p).abs() < 1e-9);
        }
        assert_eq!(scene.sparse.points.len(), 40);
    }

    #[test]
    fn visibility_matches_raycast_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let spec = tiny_spec();
        let scene = synth_scene(&spec, dir.path()).unwrap();
        for (v, cam) in scene.cameras.iter().enumerate() {
            for (i, p) in scene.sparse.points.iter().enumerate() {
                let listed = scene.sparse.visibility[v].contains(&i);
                let oracle = point_visible(&spec.sdf, cam, *p);
                assert_eq!(listed, oracle, "point {i} view {v}");
            }
        }
    }

    #[test]
    fn framing_check_rejects_bad_specs() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSceneSpec {
            sdf: AnalyticSdf::Sphere {
                center: Vec3::ZERO,
                radius: 0.05,
            },
            ..tiny_spec()
        };
        assert!(matches!(
            synth_scene(&spec, dir.path()),
            Err(SceneError::SpecInvalid(_))
        ));
    }

    #[test]
    fn noise_is_deterministic() {
        let p = Vec3::new(0.3, 0.4, 0.5);
        let spec = TextureSpec::default();
        assert_eq!(albedo_noise(p, &spec, 3), albedo_noise(p, &spec, 3));
        assert_ne!(albedo_noise(p, &spec, 3), albedo_noise(p, &spec, 4));
        for _ in 0..20 {
            let v = albedo_noise(p, &spec, 3);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn sphere_trace_hits_sphere_exactly() {
        let sdf = AnalyticSdf::Sphere {
            center: Vec3::ZERO,
            radius: 0.9,
        };
        let ray = Ray::new(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.0, 0.0, 1.0));
        let t = sphere_trace(&sdf, &ray, 10.0).unwrap();
        assert!((t - 2.1).abs() < 1e-8);
        let miss = Ray::new(Vec3::new(0.0, 2.0, -3.0), Vec3::new(0.0, 0.0, 1.0));
        assert!(sphere_trace(&sdf, &miss, 10.0).is_none());
    }
}
