//! Ingestion of SFM text exports (`cameras.txt`, `images.txt`,
//! `points3D.txt` with 2D-3D track correspondences) into the scene layout.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::io::save_scene;
use super::types::{NormalizationTransform, Scene, SparsePointSet};
use super::SceneError;
use crate::geometry::{to_gray, CameraModel, RgbImage};
use crate::math::{Mat3, Vec3};

fn quaternion_to_rotation(qw: f64, qx: f64, qy: f64, qz: f64) -> Result<Mat3, SceneError> {
    let n = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
    if n < 1e-12 {
        return Err(SceneError::MalformedSfm("zero quaternion".into()));
    }
    let (w, x, y, z) = (qw / n, qx / n, qy / n, qz / n);
    Ok(Mat3::from_rows(
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ))
}

struct SfmCamera {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

struct SfmImage {
    image_id: u64,
    rotation: Mat3,
    translation: Vec3,
    camera_id: u64,
    name: String,
}

fn data_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn parse_cameras(text: &str) -> Result<HashMap<u64, SfmCamera>, SceneError> {
    let mut out = HashMap::new();
    for line in data_lines(text) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 4 {
            return Err(SceneError::MalformedSfm(format!("camera line: {line}")));
        }
        let id: u64 = tok[0]
            .parse()
            .map_err(|_| SceneError::MalformedSfm(format!("camera id: {line}")))?;
        let model = tok[1];
        let width: usize = tok[2]
            .parse()
            .map_err(|_| SceneError::MalformedSfm(format!("camera width: {line}")))?;
        let height: usize = tok[3]
            .parse()
            .map_err(|_| SceneError::MalformedSfm(format!("camera height: {line}")))?;
        let params: Vec<f64> = tok[4..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| SceneError::MalformedSfm(format!("camera params: {line}")))?;
        let (fx, fy, cx, cy) = match model {
            "PINHOLE" if params.len() == 4 => (params[0], params[1], params[2], params[3]),
            "SIMPLE_PINHOLE" if params.len() == 3 => (params[0], params[0], params[1], params[2]),
            other => {
                return Err(SceneError::MalformedSfm(format!(
                    "unsupported camera model {other} (undistorted PINHOLE exports only)"
                )))
            }
        };
        out.insert(
            id,
            SfmCamera {
                fx,
                fy,
                cx,
                cy,
                width,
                height,
            },
        );
    }
    Ok(out)
}

fn parse_images(text: &str) -> Result<Vec<SfmImage>, SceneError> {
    let mut out = Vec::new();
    let mut lines = data_lines(text);
    while let Some(header) = lines.next() {
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() < 10 {
            return Err(SceneError::MalformedSfm(format!("image line: {header}")));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| SceneError::MalformedSfm(format!("image pose: {header}")))
        };
        let image_id: u64 = tok[0]
            .parse()
            .map_err(|_| SceneError::MalformedSfm(format!("image id: {header}")))?;
        let rotation = quaternion_to_rotation(
            parse_f(tok[1])?,
            parse_f(tok[2])?,
            parse_f(tok[3])?,
            parse_f(tok[4])?,
        )?;
        let translation = Vec3::new(parse_f(tok[5])?, parse_f(tok[6])?, parse_f(tok[7])?);
        let camera_id: u64 = tok[8]
            .parse()
            .map_err(|_| SceneError::MalformedSfm(format!("image camera id: {header}")))?;
        let name = tok[9].to_string();
        // The second line per image holds the 2D observations; the 3D ids
        // there duplicate the track info in points3D.txt, so it is skipped.
        let _observations = lines.next();
        out.push(SfmImage {
            image_id,
            rotation,
            translation,
            camera_id,
            name,
        });
    }
    Ok(out)
}

/// Converts an SFM text export into a normalized scene directory.
///
/// `sfm_dir` must contain `cameras.txt`, `images.txt`, and `points3D.txt`;
/// image files are resolved relative to `images_dir` by the names recorded
/// in `images.txt`.
pub fn ingest_sfm_text(
    sfm_dir: &Path,
    images_dir: &Path,
    out_dir: &Path,
) -> Result<Scene, SceneError> {
    let read = |name: &str| -> Result<String, SceneError> {
        fs::read_to_string(sfm_dir.join(name))
            .map_err(|_| SceneError::MissingFile(sfm_dir.join(name).display().to_string()))
    };
    let cameras_txt = parse_cameras(&read("cameras.txt")?)?;
    let mut images_txt = parse_images(&read("images.txt")?)?;
    images_txt.sort_by_key(|img| img.image_id);
    let view_of_image: HashMap<u64, usize> = images_txt
        .iter()
        .enumerate()
        .map(|(v, img)| (img.image_id, v))
        .collect();

    // points3D.txt: POINT3D_ID X Y Z R G B ERROR (IMAGE_ID POINT2D_IDX)*
    let mut points = Vec::new();
    let mut residuals = Vec::new();
    let mut visibility = vec![Vec::new(); images_txt.len()];
    for line in data_lines(&read("points3D.txt")?) {
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() < 8 {
            return Err(SceneError::MalformedSfm(format!("point line: {line}")));
        }
        let parse_f = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| SceneError::MalformedSfm(format!("point coords: {line}")))
        };
        let idx = points.len();
        points.push(Vec3::new(parse_f(tok[1])?, parse_f(tok[2])?, parse_f(tok[3])?));
        residuals.push(parse_f(tok[7])?);
        let track = &tok[8..];
        if track.len() % 2 != 0 {
            return Err(SceneError::MalformedSfm(format!("odd track length: {line}")));
        }
        for pair in track.chunks_exact(2) {
            let image_id: u64 = pair[0]
                .parse()
                .map_err(|_| SceneError::MalformedSfm(format!("track image id: {line}")))?;
            let view = *view_of_image.get(&image_id).ok_or_else(|| {
                SceneError::MalformedSfm(format!("track references unknown image {image_id}"))
            })?;
            if !visibility[view].contains(&idx) {
                visibility[view].push(idx);
            }
        }
    }

    // Normalize into the unit sphere; using the sparse cloud as the basis.
    let transform = NormalizationTransform::from_points(&points);
    for p in &mut points {
        *p = transform.apply(*p);
    }

    let mut cameras = Vec::with_capacity(images_txt.len());
    let mut rgb_images = Vec::with_capacity(images_txt.len());
    for (index, img) in images_txt.iter().enumerate() {
        let c = cameras_txt.get(&img.camera_id).ok_or_else(|| {
            SceneError::MalformedSfm(format!(
                "image {} references unknown camera {}",
                img.image_id, img.camera_id
            ))
        })?;
        let cam = CameraModel::new(
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            img.rotation,
            img.translation,
            c.width,
            c.height,
        )
        .map_err(|e| SceneError::MalformedCamera {
            index,
            message: e.to_string(),
        })?;
        cameras.push(transform.apply_to_camera(&cam));

        let path = images_dir.join(&img.name);
        let decoded = image::open(&path)
            .map_err(|_| SceneError::MissingFile(path.display().to_string()))?
            .to_rgb8();
        let (w, h) = (decoded.width() as usize, decoded.height() as usize);
        let data = decoded
            .pixels()
            .map(|p| {
                [
                    p.0[0] as f64 / 255.0,
                    p.0[1] as f64 / 255.0,
                    p.0[2] as f64 / 255.0,
                ]
            })
            .collect();
        rgb_images.push(RgbImage::new(w, h, data));
    }

    let scene = Scene {
        gray: rgb_images.iter().map(to_gray).collect(),
        cameras,
        images: rgb_images,
        sparse: SparsePointSet {
            points,
            visibility,
            reprojection_residuals: Some(residuals),
        },
        normalization: transform,
        background: [0.0, 0.0, 0.0],
        ground_truth: None,
        seed: None,
    };
    scene.validate()?;
    save_scene(&scene, out_dir)?;
    Ok(scene)
}
