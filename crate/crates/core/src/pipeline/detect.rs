//! Initial line detection over the first frames and the parameter guess
//! built from it.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::edges::EdgeMap;
use super::hough::{detect_lines, HoughConfig, HoughLine};
use crate::error::{Error, Result};
use crate::estimator::{retract, SharedMotionParams, SurfaceSetParams};
use crate::geometry::{canonicalize_line, Observation};
use crate::raster::{GrayImage, Intrinsics};

/// Straight line in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageLine {
    /// Point of the line closest to the principal point.
    pub foot: Vector2<f64>,
    /// Unit direction.
    pub direction: Vector2<f64>,
}

impl ImageLine {
    pub fn through(a: &Vector2<f64>, b: &Vector2<f64>) -> Option<Self> {
        let direction = (b - a).try_normalize(1e-15)?;
        let foot = a - direction * a.dot(&direction);
        Some(Self { foot, direction })
    }

    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(-self.direction.y, self.direction.x)
    }

    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        (p - self.foot).dot(&self.normal()).abs()
    }
}

/// A detected line with the observations supporting it.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub line: ImageLine,
    pub hough: HoughLine,
    pub inliers: Vec<Observation>,
}

/// One frame of input to detection.
#[derive(Debug, Clone, Copy)]
pub enum DetectionFrame<'a> {
    Raster { t: f64, image: &'a GrayImage },
    Points { t: f64, observations: &'a [Observation] },
}

impl DetectionFrame<'_> {
    pub fn t(&self) -> f64 {
        match self {
            DetectionFrame::Raster { t, .. } | DetectionFrame::Points { t, .. } => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub hough: HoughConfig,
    /// Number of lines to track.
    pub num_lines: usize,
    /// Radius around an accepted line whose pixels are removed before the
    /// next peak is taken (normalized units).
    pub suppression_radius: f64,
    /// Points within this distance of a detected line support it
    /// (normalized units).
    pub inlier_distance: f64,
    /// Splat radius when rasterizing point observations (pixels).
    pub point_splat_radius: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            hough: HoughConfig::default(),
            num_lines: 4,
            suppression_radius: 0.05,
            inlier_distance: 0.01,
            point_splat_radius: 1.5,
        }
    }
}

fn edge_map(frame: &DetectionFrame, k: &Intrinsics, config: &DetectionConfig) -> EdgeMap {
    match frame {
        DetectionFrame::Raster { image, .. } => EdgeMap::from_image(image, config.hough.edge_threshold),
        DetectionFrame::Points { observations, .. } => {
            let px: Vec<Vector2<f64>> = observations.iter().map(|o| k.to_pixel(&o.p)).collect();
            EdgeMap::from_points(k.width, k.height, &px, config.point_splat_radius)
        }
    }
}

fn to_image_line(h: &HoughLine, k: &Intrinsics) -> Option<ImageLine> {
    ImageLine::through(&k.to_normalized(&h.start), &k.to_normalized(&h.end))
}

/// Re-fits `line` to nearby points by total least squares, returning the
/// fitted line (or the input if too few points).
fn refit(line: &ImageLine, pts: &[Vector2<f64>], band: f64) -> ImageLine {
    let near: Vec<&Vector2<f64>> = pts.iter().filter(|p| line.distance(p) <= band).collect();
    if near.len() < 2 {
        return *line;
    }
    let c = near.iter().copied().sum::<Vector2<f64>>() / near.len() as f64;
    let mut cov = nalgebra::Matrix2::zeros();
    for p in &near {
        let d = *p - c;
        cov += d * d.transpose();
    }
    let eig = nalgebra::SymmetricEigen::new(cov);
    let i = if eig.eigenvalues[0] >= eig.eigenvalues[1] { 0 } else { 1 };
    let dir = eig.eigenvectors.column(i).into_owned();
    ImageLine::through(&c, &(c + dir)).unwrap_or(*line)
}

/// Detects `num_lines` lines on the union of the frames' edge maps, then
/// collects per-frame supporting observations. A point near more than one
/// detected line is discarded.
pub fn detect_initial_lines(frames: &[DetectionFrame], k: &Intrinsics, config: &DetectionConfig) -> Result<Vec<Detection>> {
    let wanted = config.num_lines;
    if frames.is_empty() {
        return Err(Error::NotEnoughLines { found: 0, wanted });
    }
    let maps: Vec<EdgeMap> = frames.iter().map(|f| edge_map(f, k, config)).collect();
    let merged = EdgeMap::union(&maps)
        .ok_or_else(|| Error::InvalidInput("frames differ in size".into()))?;
    let suppression_px = config.suppression_radius * k.fx.max(k.fy);
    let hough = detect_lines(&merged, &config.hough, wanted, suppression_px);
    let lines: Vec<(HoughLine, ImageLine)> = hough
        .into_iter()
        .filter_map(|h| to_image_line(&h, k).map(|l| (h, l)))
        .collect();
    if lines.len() < wanted {
        return Err(Error::NotEnoughLines { found: lines.len(), wanted });
    }

    let mut detections: Vec<Detection> = lines
        .iter()
        .map(|(h, l)| Detection { line: *l, hough: *h, inliers: Vec::new() })
        .collect();
    let tol = config.inlier_distance;
    for (frame, map) in frames.iter().zip(&maps) {
        let t = frame.t();
        let pts: Vec<Vector2<f64>> = match frame {
            DetectionFrame::Points { observations, .. } => observations.iter().map(|o| o.p).collect(),
            DetectionFrame::Raster { .. } => map.active.iter().map(|&i| k.to_normalized(&map.center(i))).collect(),
        };
        // follow each line's small motion within the interval
        let local: Vec<ImageLine> = lines
            .iter()
            .map(|(_, l)| refit(&refit(l, &pts, 2.0 * tol), &pts, tol))
            .collect();
        for p in &pts {
            let mut hit = local.iter().enumerate().filter(|(_, l)| l.distance(p) <= tol);
            if let (Some((i, _)), None) = (hit.next(), hit.next()) {
                detections[i].inliers.push(Observation { t, p: *p });
            }
        }
    }
    Ok(detections)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InitConfig {
    /// Assumed depth of every line (m).
    pub a_init: f64,
    /// Initial gravitational bias (m/s²).
    pub g_init: Vector3<f64>,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            a_init: 1.0,
            g_init: Vector3::zeros(),
        }
    }
}

/// Back-projects each image line to a fronto-parallel 3D line at depth
/// `a_init`, with zero velocity and `g = g_init`.
pub fn init_surface_params(lines: &[ImageLine], config: &InitConfig) -> Result<SurfaceSetParams> {
    if lines.is_empty() {
        return Err(Error::InvalidInput("at least one detection is required".into()));
    }
    let states = lines
        .iter()
        .map(|l| {
            let x0 = Vector3::new(l.foot.x * config.a_init, l.foot.y * config.a_init, config.a_init);
            let v0 = Vector3::new(l.direction.x, l.direction.y, 0.0);
            canonicalize_line(&x0, &v0)
        })
        .collect::<Result<Vec<_>>>()?;
    retract(&SurfaceSetParams::from_lines(
        &states,
        SharedMotionParams::new(Vector3::zeros(), config.g_init),
    ))
}
