//! Intensity images with sub-pixel bilinear sampling.

use crate::math::Vec2;

/// Grayscale image; intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn in_bounds(&self, c: Vec2) -> bool {
        c.x >= 0.0
            && c.y >= 0.0
            && c.x <= (self.width - 1) as f64
            && c.y <= (self.height - 1) as f64
    }

    /// Bilinear interpolation at a real coordinate assumed inside bounds.
    #[inline]
    pub fn bilinear(&self, c: Vec2) -> f64 {
        let x0 = (c.x.floor() as usize).min(self.width - 1);
        let y0 = (c.y.floor() as usize).min(self.height - 1);
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = c.x - x0 as f64;
        let fy = c.y - y0 as f64;
        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);
        (1.0 - fy) * ((1.0 - fx) * v00 + fx * v10) + fy * ((1.0 - fx) * v01 + fx * v11)
    }
}

/// RGB image; channel values in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// `[r, g, b]` per pixel.
    pub data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f64; 3]) {
        self.data[y * self.width + x] = v;
    }
}

/// Rec. 601 luma conversion.
pub fn to_gray(img: &RgbImage) -> GrayImage {
    let data = img
        .data
        .iter()
        .map(|[r, g, b]| 0.299 * r + 0.587 * g + 0.114 * b)
        .collect();
    GrayImage::new(img.width, img.height, data)
}

/// Bilinear samples at real coordinates. Returns `None` (patch invalid) when
/// any coordinate falls outside `[0, w-1] x [0, h-1]`; partial patches would
/// bias NCC, so they are dropped entirely.
pub fn sample_gray_bilinear(img: &GrayImage, coords: &[Vec2]) -> Option<Vec<f64>> {
    if coords.iter().any(|&c| !img.in_bounds(c)) {
        return None;
    }
    Some(coords.iter().map(|&c| img.bilinear(c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn integer_coordinates_are_exact() {
        let img = GrayImage::from_fn(4, 3, |x, y| (x + 10 * y) as f64 / 50.0);
        let coords = vec![Vec2::new(2.0, 1.0), Vec2::new(0.0, 0.0), Vec2::new(3.0, 2.0)];
        let vals = sample_gray_bilinear(&img, &coords).unwrap();
        assert_eq!(vals, vec![12.0 / 50.0, 0.0, 23.0 / 50.0]);
    }

    #[test]
    fn midpoint_interpolates() {
        let img = GrayImage::new(2, 1, vec![0.0, 1.0]);
        let vals = sample_gray_bilinear(&img, &[Vec2::new(0.5, 0.0)]).unwrap();
        assert_eq!(vals[0], 0.5);
    }

    #[test]
    fn out_of_bounds_invalidates_patch() {
        let img = GrayImage::filled(4, 4, 0.5);
        assert!(sample_gray_bilinear(&img, &[Vec2::new(0.0, 0.0), Vec2::new(3.01, 1.0)]).is_none());
        assert!(sample_gray_bilinear(&img, &[Vec2::new(-0.01, 1.0)]).is_none());
    }

    #[test]
    fn bilinear_reproduces_affine_images_exactly() {
        let (a, b, c) = (0.021, -0.013, 0.4);
        let img = GrayImage::from_fn(16, 16, |x, y| a * x as f64 + b * y as f64 + c);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let p = Vec2::new(rng.gen_range(0.0..15.0), rng.gen_range(0.0..15.0));
            let v = sample_gray_bilinear(&img, &[p]).unwrap()[0];
            let expected = a * p.x + b * p.y + c;
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn gray_conversion_coefficients() {
        let img = RgbImage::new(2, 1, vec![[1.0, 1.0, 1.0], [1.0, 0.0, 0.0]]);
        let gray = to_gray(&img);
        assert!((gray.get(0, 0) - 1.0).abs() < 1e-12);
        assert!((gray.get(1, 0) - 0.299).abs() < 1e-12);
    }

    #[test]
    fn gray_matches_per_pixel_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<[f64; 3]> = (0..64)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let img = RgbImage::new(8, 8, data.clone());
        let gray = to_gray(&img);
        for (g, [r, gr, b]) in gray.data.iter().zip(data.iter()) {
            let expected = 0.299 * r + 0.587 * gr + 0.114 * b;
            assert!((g - expected).abs() < 1e-15);
            assert!((0.0..=1.0).contains(g));
        }
    }
}
