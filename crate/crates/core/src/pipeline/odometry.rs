//! Camera trajectory from consecutive window displacements.
//!
//! Each window contributes the scene displacement over its first frame
//! step, rotated into the basis of the first camera pose and negated; the
//! last window contributes its whole tail.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::window::WindowEstimate;
use crate::error::{Error, Result};
use crate::geometry::{canonicalize_line, LineState};
use crate::imu::rechain_window_rotation;

/// Lines of one window, in its own (derotated) camera frame and in the
/// basis of the first camera pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLines {
    pub t_start: f64,
    pub camera: Vec<LineState>,
    pub basis: Vec<LineState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdometryResult {
    pub timestamps: Vec<f64>,
    /// Camera positions in the basis of the first camera pose (m).
    pub positions: Vec<Vector3<f64>>,
    /// Camera orientations relative to the first camera pose.
    pub orientations: Vec<UnitQuaternion<f64>>,
    pub window_lines: Vec<WindowLines>,
}

/// Incremental accumulation; pushing windows one by one or in batches
/// gives identical results.
#[derive(Debug, Clone)]
pub struct OdometryAccumulator {
    result: OdometryResult,
    basis_from_center: UnitQuaternion<f64>,
    /// Camera position at the pending window's start; `None` for the very
    /// first window, whose start is the origin.
    origin: Option<Vector3<f64>>,
    pending: Option<WindowEstimate>,
    count: usize,
}

impl Default for OdometryAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl OdometryAccumulator {
    pub fn new() -> Self {
        Self {
            result: OdometryResult {
                timestamps: Vec::new(),
                positions: Vec::new(),
                orientations: Vec::new(),
                window_lines: Vec::new(),
            },
            basis_from_center: UnitQuaternion::identity(),
            origin: None,
            pending: None,
            count: 0,
        }
    }

    fn camera_position(&self, window: &WindowEstimate, t: f64) -> Result<Vector3<f64>> {
        let step = self.basis_from_center * window.translation_signal().at(t)?;
        Ok(match self.origin {
            None => -step,
            Some(o) => o - step,
        })
    }

    pub fn push(&mut self, window: &WindowEstimate) -> Result<&mut Self> {
        if let Some(prev) = self.pending.take() {
            let expected = prev.frame_times.get(1).copied().unwrap_or(f64::NAN);
            if window.t_start() != expected {
                let err = Error::SeamMismatch {
                    index: self.count,
                    start: window.t_start(),
                    expected,
                };
                self.pending = Some(prev);
                return Err(err);
            }
            let origin = self.camera_position(&prev, expected)?;
            self.basis_from_center = rechain_window_rotation(&self.basis_from_center, &prev.rotation, expected)?;
            self.origin = Some(origin);
        }
        let position = match self.origin {
            Some(o) => o,
            None => self.camera_position(window, window.t_start())?,
        };
        self.result.timestamps.push(window.t_start());
        self.result.positions.push(position);
        self.result.orientations.push(self.basis_from_center);
        let camera = window.line_states()?;
        let basis = camera
            .iter()
            .map(|l| canonicalize_line(&(self.basis_from_center * l.x0 + position), &(self.basis_from_center * l.v0)))
            .collect::<Result<Vec<_>>>()?;
        self.result.window_lines.push(WindowLines {
            t_start: window.t_start(),
            camera,
            basis,
        });
        self.pending = Some(window.clone());
        self.count += 1;
        Ok(self)
    }

    pub fn extend<'a>(&mut self, windows: impl IntoIterator<Item = &'a WindowEstimate>) -> Result<&mut Self> {
        for w in windows {
            self.push(w)?;
        }
        Ok(self)
    }

    /// Adds the tail of the last window and returns the trajectory.
    pub fn finish(mut self) -> Result<OdometryResult> {
        let last = self
            .pending
            .take()
            .ok_or_else(|| Error::InvalidInput("no windows to accumulate".into()))?;
        for &t in &last.frame_times[1..] {
            let p = self.camera_position(&last, t)?;
            self.result.timestamps.push(t);
            self.result.positions.push(p);
            self.result.orientations.push(self.basis_from_center * last.rotation.at(t)?);
        }
        Ok(self.result)
    }
}

/// Accumulates chronologically ordered windows whose starts advance one
/// frame at a time.
pub fn accumulate_odometry(windows: &[WindowEstimate]) -> Result<OdometryResult> {
    let mut acc = OdometryAccumulator::new();
    acc.extend(windows)?;
    acc.finish()
}
