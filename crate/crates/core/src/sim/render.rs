//! Anti-aliased line rendering and salt noise for raster frames.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::raster::{GrayImage, Intrinsics};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub background: u8,
    pub foreground: u8,
    /// Stroke width in pixels.
    pub width: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self {
            background: 0,
            foreground: 255,
            width: 2.0,
        }
    }
}

fn segment_distance(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * s)).norm()
}

/// Renders camera-frame 3D segments (already clipped to positive depth)
/// as anti-aliased strokes.
pub fn render_frame(segments: &[(Vector3<f64>, Vector3<f64>)], k: &Intrinsics, style: &RenderStyle) -> GrayImage {
    let mut img = GrayImage::new(k.width, k.height, style.background);
    let half = 0.5 * style.width;
    let (bg, fg) = (style.background as f64, style.foreground as f64);
    for (p, q) in segments {
        let a = k.to_pixel(&Vector2::new(p.x / p.z, p.y / p.z));
        let b = k.to_pixel(&Vector2::new(q.x / q.z, q.y / q.z));
        let pad = half + 1.0;
        let x0 = (a.x.min(b.x) - pad).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + pad).ceil().max(0.0) as usize).min(k.width);
        let y0 = (a.y.min(b.y) - pad).floor().max(0.0) as usize;
        let y1 = ((a.y.max(b.y) + pad).ceil().max(0.0) as usize).min(k.height);
        for y in y0..y1 {
            for x in x0..x1 {
                // pixel centers sit at integer + 0.5
                let c = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let coverage = (half + 0.5 - segment_distance(&c, &a, &b)).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let v = bg + (fg - bg) * coverage;
                    let old = img.get(x, y) as f64;
                    let blended = if fg >= bg { old.max(v) } else { old.min(v) };
                    img.set(x, y, blended.round() as u8);
                }
            }
        }
    }
    img
}

/// Sets a `fraction` of pixels to 255.
pub fn add_salt_noise(img: &mut GrayImage, fraction: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in img.data.iter_mut() {
        if rng.random::<f64>() < fraction {
            *v = 255;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizontal_stroke_is_two_pixels_wide() {
        let k = Intrinsics::default();
        // a quarter pixel below the boundary between rows 239 and 240
        let y = 0.25 / k.fy;
        let seg = (Vector3::new(-0.2, y, 1.0), Vector3::new(0.2, y, 1.0));
        let img = render_frame(&[seg], &k, &RenderStyle::default());
        let column: Vec<u8> = (236..244).map(|y| img.get(320, y)).collect();
        assert_eq!(column, vec![0, 0, 0, 191, 255, 64, 0, 0]);
        assert_eq!(img.get(100, 240), 0);
    }

    #[test]
    fn salt_noise_hits_the_requested_fraction() {
        let mut img = GrayImage::new(200, 200, 0);
        add_salt_noise(&mut img, 0.05, 3);
        let lit = img.data.iter().filter(|v| **v == 255).count() as f64 / 40_000.0;
        assert!((lit - 0.05).abs() < 0.005, "{lit}");
    }
}
