//! Error statistics of an estimate against simulator ground truth.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GroundTruth;
use crate::error::{Error, Result};
use crate::geometry::LineState;
use crate::pipeline::OdometryResult;

/// Points sampled along each true segment for line errors.
const LINE_SAMPLES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AxisStats {
    /// meters
    pub mean: f64,
    /// meters
    pub std: f64,
}

impl AxisStats {
    fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Per-axis statistics of `|estimated − true|` camera position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    #[serde(rename = "X")]
    pub x: AxisStats,
    #[serde(rename = "Y")]
    pub y: AxisStats,
    #[serde(rename = "Z")]
    pub z: AxisStats,
    pub samples: usize,
}

impl TrajectoryErrors {
    pub fn axes(&self) -> [AxisStats; 3] {
        [self.x, self.y, self.z]
    }

    pub fn max_mean(&self) -> f64 {
        self.x.mean.max(self.y.mean).max(self.z.mean)
    }
}

/// Mean distance from points on each true line to its matched estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineErrors {
    /// Index of the true line each estimated line was matched to.
    pub matched: Vec<usize>,
    /// meters, one per estimated line
    pub mean_distance: Vec<f64>,
}

fn interpolate(times: &[f64], values: &[Vector3<f64>], t: f64) -> Option<Vector3<f64>> {
    if times.is_empty() || t < times[0] || t > times[times.len() - 1] {
        return None;
    }
    let i = times.partition_point(|&s| s < t);
    if times[i] == t {
        return Some(values[i]);
    }
    let w = (t - times[i - 1]) / (times[i] - times[i - 1]);
    Some(values[i - 1] * (1.0 - w) + values[i] * w)
}

/// Compares positions (in the first camera's basis) against truth, with
/// the estimate interpolated to the truth frame times it covers.
pub fn evaluate_trajectory(times: &[f64], positions: &[Vector3<f64>], truth: &GroundTruth) -> Result<TrajectoryErrors> {
    if times.len() != positions.len() {
        return Err(Error::InvalidInput("times and positions differ in length".into()));
    }
    let truth_pos = truth.positions_in_start_frame();
    let mut errs: [Vec<f64>; 3] = Default::default();
    for (frame, tp) in truth.frames.iter().zip(&truth_pos) {
        if let Some(p) = interpolate(times, positions, frame.t) {
            for (axis, e) in errs.iter_mut().enumerate() {
                e.push((p[axis] - tp[axis]).abs());
            }
        }
    }
    if errs[0].is_empty() {
        return Err(Error::TimeRangeMismatch);
    }
    Ok(TrajectoryErrors {
        x: AxisStats::of(&errs[0]),
        y: AxisStats::of(&errs[1]),
        z: AxisStats::of(&errs[2]),
        samples: errs[0].len(),
    })
}

pub fn evaluate(estimate: &OdometryResult, truth: &GroundTruth) -> Result<TrajectoryErrors> {
    evaluate_trajectory(&estimate.timestamps, &estimate.positions, truth)
}

fn mean_distance(truth: &[Vector3<f64>], line: &LineState) -> f64 {
    truth.iter().map(|p| line.distance_to_point(p)).sum::<f64>() / truth.len() as f64
}

/// Line errors averaged over windows. Each entry of `windows` holds the
/// estimated lines of one window in the first camera's basis; estimated
/// lines are matched to true lines by the first window.
pub fn evaluate_lines(windows: &[Vec<LineState>], truth: &GroundTruth) -> Result<LineErrors> {
    let first = windows.first().ok_or(Error::TimeRangeMismatch)?;
    let samples: Vec<Vec<Vector3<f64>>> = truth
        .lines_in_start_frame()
        .iter()
        .map(|l| {
            let [a, b] = l.endpoints();
            (0..LINE_SAMPLES)
                .map(|i| a + (b - a) * (i as f64 / (LINE_SAMPLES - 1) as f64))
                .collect()
        })
        .collect();
    let matched: Vec<usize> = first
        .iter()
        .map(|est| {
            (0..samples.len())
                .min_by(|&i, &j| mean_distance(&samples[i], est).total_cmp(&mean_distance(&samples[j], est)))
                .unwrap_or(0)
        })
        .collect();
    let mut mean = vec![0.0; first.len()];
    for lines in windows {
        for (k, line) in lines.iter().enumerate().take(first.len()) {
            mean[k] += mean_distance(&samples[matched[k]], line) / windows.len() as f64;
        }
    }
    Ok(LineErrors {
        matched,
        mean_distance: mean,
    })
}
