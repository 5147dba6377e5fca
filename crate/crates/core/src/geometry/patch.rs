//! Square pixel patches used by the photometric consistency loss.

use super::{GeometryError, GrayImage};
use crate::math::Vec2;

pub const DEFAULT_PATCH_SIZE: usize = 11;

/// A size x size grid of intensities sampled around a center pixel with
/// 1-pixel spacing. Patches touching the image border are flagged invalid
/// rather than clamped.
#[derive(Debug, Clone)]
pub struct PixelPatch {
    pub center: Vec2,
    pub size: usize,
    pub intensities: Vec<f64>,
    pub valid: bool,
}

impl PixelPatch {
    /// Samples a patch from `img` centered at `center`.
    pub fn sample(img: &GrayImage, center: Vec2, size: usize) -> Result<Self, GeometryError> {
        let coords = patch_coords(center, size)?;
        match super::sample_gray_bilinear(img, &coords) {
            Some(intensities) => Ok(Self {
                center,
                size,
                intensities,
                valid: true,
            }),
            None => Ok(Self {
                center,
                size,
                intensities: Vec::new(),
                valid: false,
            }),
        }
    }

    pub fn from_values(center: Vec2, size: usize, intensities: Vec<f64>) -> Self {
        assert_eq!(intensities.len(), size * size);
        Self {
            center,
            size,
            intensities,
            valid: true,
        }
    }
}

/// Grid coordinates of a size x size patch around `center`, 1-pixel spacing,
/// row-major. `size` must be odd.
pub fn patch_coords(center: Vec2, size: usize) -> Result<Vec<Vec2>, GeometryError> {
    if size < 3 || size % 2 == 0 {
        return Err(GeometryError::InvalidPatchSize(size));
    }
    let half = (size / 2) as isize;
    let mut coords = Vec::with_capacity(size * size);
    for dy in -half..=half {
        for dx in -half..=half {
            coords.push(Vec2::new(center.x + dx as f64, center.y + dy as f64));
        }
    }
    Ok(coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_grid_shape() {
        let coords = patch_coords(Vec2::new(10.0, 20.0), 3).unwrap();
        assert_eq!(coords.len(), 9);
        assert_eq!(coords[0], Vec2::new(9.0, 19.0));
        assert_eq!(coords[4], Vec2::new(10.0, 20.0));
        assert_eq!(coords[8], Vec2::new(11.0, 21.0));
    }

    #[test]
    fn even_patch_size_rejected() {
        assert!(patch_coords(Vec2::new(0.0, 0.0), 4).is_err());
    }

    #[test]
    fn border_patch_is_invalid() {
        let img = GrayImage::filled(16, 16, 0.3);
        let p = PixelPatch::sample(&img, Vec2::new(1.0, 8.0), 11).unwrap();
        assert!(!p.valid);
        let p = PixelPatch::sample(&img, Vec2::new(8.0, 8.0), 11).unwrap();
        assert!(p.valid);
        assert_eq!(p.intensities.len(), 121);
    }
}
