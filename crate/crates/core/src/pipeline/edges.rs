//! Gradient edge maps from rasters or from scattered image points.

use nalgebra::Vector2;

use crate::raster::GrayImage;

/// Thresholded gradient magnitude over a pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    pub width: usize,
    pub height: usize,
    pub magnitude: Vec<f64>,
    /// Gradient angle in radians; NaN where unknown.
    pub direction: Vec<f64>,
    pub threshold: f64,
    /// Indices (`y * width + x`) of pixels with magnitude ≥ threshold.
    pub active: Vec<usize>,
}

impl EdgeMap {
    fn from_parts(width: usize, height: usize, magnitude: Vec<f64>, direction: Vec<f64>, threshold: f64) -> Self {
        let active = magnitude
            .iter()
            .enumerate()
            .filter(|(_, m)| **m >= threshold && **m > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            width,
            height,
            magnitude,
            direction,
            threshold,
            active,
        }
    }

    /// 3×3 Sobel gradients; pixels whose magnitude reaches
    /// `relative_threshold` times the image maximum become active.
    pub fn from_image(img: &GrayImage, relative_threshold: f64) -> Self {
        let (w, h) = (img.width, img.height);
        let mut magnitude = vec![0.0; w * h];
        let mut direction = vec![f64::NAN; w * h];
        if w >= 3 && h >= 3 {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let p = |dx: isize, dy: isize| img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as f64;
                    let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
                    let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
                    let i = y * w + x;
                    magnitude[i] = gx.hypot(gy);
                    if magnitude[i] > 0.0 {
                        direction[i] = gy.atan2(gx);
                    }
                }
            }
        }
        let max = magnitude.iter().copied().fold(0.0, f64::max);
        Self::from_parts(w, h, magnitude, direction, relative_threshold * max)
    }

    /// Marks a disc of `splat_radius` pixels around each point; gradient
    /// directions are unknown.
    pub fn from_points(width: usize, height: usize, points: &[Vector2<f64>], splat_radius: f64) -> Self {
        let mut magnitude = vec![0.0; width * height];
        let r = splat_radius.max(0.0);
        let ri = r.ceil() as isize;
        for p in points {
            let (cx, cy) = (p.x.floor() as isize, p.y.floor() as isize);
            for dy in -ri..=ri {
                for dx in -ri..=ri {
                    if ((dx * dx + dy * dy) as f64) > r * r {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
                        magnitude[y as usize * width + x as usize] = 1.0;
                    }
                }
            }
        }
        Self::from_parts(width, height, magnitude, vec![f64::NAN; width * height], 1.0)
    }

    /// Pixel-wise maximum of several maps of the same size.
    pub fn union(maps: &[EdgeMap]) -> Option<Self> {
        let first = maps.first()?;
        let (w, h) = (first.width, first.height);
        if maps.iter().any(|m| m.width != w || m.height != h) {
            return None;
        }
        let mut magnitude = vec![0.0; w * h];
        let mut direction = vec![f64::NAN; w * h];
        for m in maps {
            for &i in &m.active {
                if m.magnitude[i] > magnitude[i] {
                    magnitude[i] = m.magnitude[i];
                    direction[i] = m.direction[i];
                }
            }
        }
        let threshold = maps.iter().map(|m| m.threshold).fold(f64::INFINITY, f64::min);
        Some(Self::from_parts(w, h, magnitude, direction, threshold))
    }

    /// Pixel-center coordinates of an index.
    #[inline]
    pub fn center(&self, index: usize) -> Vector2<f64> {
        Vector2::new((index % self.width) as f64 + 0.5, (index / self.width) as f64 + 0.5)
    }

    pub fn has_directions(&self) -> bool {
        self.active.iter().any(|&i| !self.direction[i].is_nan())
    }
}
