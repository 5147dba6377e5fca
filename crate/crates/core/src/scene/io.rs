//! Scene directory layout:
//!
//! ```text
//! cameras.json       per-view {fx, fy, cx, cy, r (row-major 3x3), t, width, height}
//! scene.json         {normalization, background, seed}
//! images/view_%03d.png
//! points.json        {points: [[x,y,z]...], visibility: [[idx...] per view]}
//! ground_truth.json  optional {sdf, surface_samples}
//! ```
//!
//! Saving a loaded scene reproduces the directory byte-for-byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{GroundTruth, NormalizationTransform, Scene, SceneMeta, SparsePointSet};
use super::SceneError;
use crate::field::AnalyticSdf;
use crate::geometry::{to_gray, CameraModel, RgbImage};
use crate::math::{Mat3, Vec3};

#[derive(Serialize, Deserialize)]
struct CameraRecord {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    r: [f64; 9],
    t: [f64; 3],
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct PointsFile {
    points: Vec<[f64; 3]>,
    visibility: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct GroundTruthFile {
    sdf: AnalyticSdf,
    surface_samples: Vec<[f64; 3]>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SceneError> {
    let bytes = fs::read(path).map_err(|_| SceneError::MissingFile(path.display().to_string()))?;
    serde_json::from_slice(&bytes).map_err(|e| SceneError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SceneError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| SceneError::Json {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| SceneError::io(path, e))
}

pub fn save_scene(scene: &Scene, dir: &Path) -> Result<(), SceneError> {
    fs::create_dir_all(dir.join("images")).map_err(|e| SceneError::io(dir, e))?;

    let cameras: Vec<CameraRecord> = scene
        .cameras
        .iter()
        .map(|c| CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            r: c.rotation.m,
            t: c.translation.to_array(),
            width: c.width,
            height: c.height,
        })
        .collect();
    write_json(&dir.join("cameras.json"), &cameras)?;

    write_json(
        &dir.join("scene.json"),
        &SceneMeta {
            normalization: scene.normalization,
            background: scene.background,
            seed: scene.seed,
        },
    )?;

    for (i, img) in scene.images.iter().enumerate() {
        let path = dir.join("images").join(format!("view_{i:03}.png"));
        let mut buf = image::RgbImage::new(img.width as u32, img.height as u32);
        for y in 0..img.height {
            for x in 0..img.width {
                let [r, g, b] = img.get(x, y);
                let q = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
                buf.put_pixel(x as u32, y as u32, image::Rgb([q(r), q(g), q(b)]));
            }
        }
        buf.save(&path).map_err(|e| SceneError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }

    write_json(
        &dir.join("points.json"),
        &PointsFile {
            points: scene.sparse.points.iter().map(|p| p.to_array()).collect(),
            visibility: scene.sparse.visibility.clone(),
        },
    )?;

    if let Some(gt) = &scene.ground_truth {
        write_json(
            &dir.join("ground_truth.json"),
            &GroundTruthFile {
                sdf: gt.sdf.clone(),
                surface_samples: gt.surface_samples.iter().map(|p| p.to_array()).collect(),
            },
        )?;
    }
    Ok(())
}

pub fn load_scene(dir: &Path) -> Result<Scene, SceneError> {
    let camera_records: Vec<CameraRecord> = read_json(&dir.join("cameras.json"))?;
    let mut cameras = Vec::with_capacity(camera_records.len());
    for (index, rec) in camera_records.iter().enumerate() {
        let cam = CameraModel::new(
            rec.fx,
            rec.fy,
            rec.cx,
            rec.cy,
            Mat3::from_row_major(rec.r),
            Vec3::from_array(rec.t),
            rec.width,
            rec.height,
        )
        .map_err(|e| SceneError::MalformedCamera {
            index,
            message: e.to_string(),
        })?;
        cameras.push(cam);
    }

    let mut images = Vec::with_capacity(cameras.len());
    for i in 0..cameras.len() {
        let path = dir.join("images").join(format!("view_{i:03}.png"));
        let img = image::open(&path)
            .map_err(|_| SceneError::MissingFile(path.display().to_string()))?
            .to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        if w != cameras[i].width || h != cameras[i].height {
            return Err(SceneError::MalformedScene(format!(
                "image {i} is {w}x{h} but camera says {}x{}",
                cameras[i].width, cameras[i].height
            )));
        }
        let data = img
            .pixels()
            .map(|p| {
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ]
            })
            .collect();
        images.push(RgbImage::new(w, h, data));
    }

    let points_file: PointsFile = read_json(&dir.join("points.json"))?;
    let mut sparse = SparsePointSet {
        points: points_file.points.iter().map(|&a| Vec3::from_array(a)).collect(),
        visibility: points_file.visibility,
        reprojection_residuals: None,
    };

    let gt_path = dir.join("ground_truth.json");
    let mut ground_truth = if gt_path.exists() {
        let file: GroundTruthFile = read_json(&gt_path)?;
        Some(GroundTruth {
            sdf: file.sdf,
            surface_samples: file
                .surface_samples
                .iter()
                .map(|&a| Vec3::from_array(a))
                .collect(),
        })
    } else {
        None
    };

    // A stored transform means the directory is already normalized.
    let meta_path = dir.join("scene.json");
    let (normalization, background, seed) = if meta_path.exists() {
        let meta: SceneMeta = read_json(&meta_path)?;
        (meta.normalization, meta.background, meta.seed)
    } else {
        let basis: Vec<Vec3> = match &ground_truth {
            Some(gt) if !gt.surface_samples.is_empty() => gt.surface_samples.clone(),
            _ => sparse.points.clone(),
        };
        let t = NormalizationTransform::from_points(&basis);
        for p in &mut sparse.points {
            *p = t.apply(*p);
        }
        if let Some(gt) = &mut ground_truth {
            for p in &mut gt.surface_samples {
                *p = t.apply(*p);
            }
        }
        for cam in &mut cameras {
            *cam = t.apply_to_camera(cam);
        }
        (t, [0.0, 0.0, 0.0], None)
    };

    let gray = images.iter().map(to_gray).collect();
    let scene = Scene {
        cameras,
        images,
        gray,
        sparse,
        normalization,
        background,
        ground_truth,
        seed,
    };
    scene.validate()?;
    Ok(scene)
}
