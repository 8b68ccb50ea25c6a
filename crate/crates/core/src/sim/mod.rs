//! Synthetic scenes: 3D line segments seen by a camera moving along a
//! closed-form trajectory, with a matching IMU stream and ground truth.

mod evaluate;
mod render;
mod synth;
mod trajectory;

pub use evaluate::{evaluate, evaluate_lines, evaluate_trajectory, AxisStats, LineErrors, TrajectoryErrors};
pub use render::{add_salt_noise, render_frame, RenderStyle};
pub use synth::{synthesize, FrameObservations, GroundTruth, SimOutput, TruthFrame, WindowTruth};
pub use trajectory::{axis_rotation, CameraState, Motion, RotationAxis, RotationSpec, TrajectorySpec};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LineState;
use crate::raster::Intrinsics;

/// A finite line segment in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneLine {
    pub point: Vector3<f64>,
    pub direction: Vector3<f64>,
    /// Extent on either side of `point`, in units of `direction`'s length.
    pub half_length: f64,
}

impl SceneLine {
    pub fn new(point: Vector3<f64>, direction: Vector3<f64>, half_length: f64) -> Self {
        Self {
            point,
            direction,
            half_length,
        }
    }

    pub fn endpoints(&self) -> [Vector3<f64>; 2] {
        [
            self.point - self.direction * self.half_length,
            self.point + self.direction * self.half_length,
        ]
    }

    pub fn as_line(&self) -> LineState {
        LineState {
            x0: self.point,
            v0: self.direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// White accelerometer noise σ (m/s²).
    pub accel_sigma: f64,
    /// White gyro noise σ (rad/s).
    pub gyro_sigma: f64,
    /// Constant accelerometer bias in the camera frame (m/s²).
    pub accel_bias: Vector3<f64>,
    /// Gravity in the world frame (m/s²).
    pub gravity: Vector3<f64>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            accel_sigma: 0.05,
            gyro_sigma: 0.002,
            accel_bias: Vector3::zeros(),
            gravity: Vector3::new(0.0, -9.81, 0.0),
        }
    }
}

impl NoiseSpec {
    /// No noise, no bias, gravity unchanged.
    pub fn noiseless() -> Self {
        Self {
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
            ..Self::default()
        }
    }
}

/// Everything needed to generate a deterministic synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub lines: Vec<SceneLine>,
    pub trajectory: TrajectorySpec,
    pub rotation: RotationSpec,
    /// seconds
    pub duration: f64,
    pub fps: f64,
    pub imu_rate: f64,
    pub noise: NoiseSpec,
    /// Image-point noise σ in normalized units.
    pub obs_noise: f64,
    pub outlier_fraction: f64,
    pub points_per_line: usize,
    pub intrinsics: Intrinsics,
    pub raster: bool,
    /// Render only frames within this many seconds of the start; `None`
    /// renders every frame. Detection needs just the first interval.
    pub raster_duration: Option<f64>,
    pub render: RenderStyle,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            lines: Self::default_lines(),
            trajectory: TrajectorySpec::default(),
            rotation: RotationSpec::default(),
            duration: 12.0,
            fps: 90.0,
            imu_rate: 200.0,
            noise: NoiseSpec::default(),
            obs_noise: 0.0,
            outlier_fraction: 0.0,
            points_per_line: 50,
            intrinsics: Intrinsics::default(),
            raster: false,
            raster_duration: None,
            render: RenderStyle::default(),
            seed: 0,
        }
    }
}

impl ScenarioSpec {
    /// Four mutually non-parallel segments two to three meters ahead of the
    /// starting camera.
    pub fn default_lines() -> Vec<SceneLine> {
        vec![
            SceneLine::new(Vector3::new(0.0, -0.45, 2.5), Vector3::new(1.0, 0.0, 0.1).normalize(), 3.0),
            SceneLine::new(Vector3::new(0.55, 0.0, 2.2), Vector3::new(0.0, 1.0, 0.15).normalize(), 2.0),
            SceneLine::new(Vector3::new(-0.4, 0.25, 2.8), Vector3::new(1.0, 1.0, -0.2).normalize(), 2.0),
            SceneLine::new(Vector3::new(0.1, 0.55, 2.0), Vector3::new(1.0, -0.3, 0.3).normalize(), 2.0),
        ]
    }

    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, why: &str| Err(Error::InvalidInput(format!("field `{name}`: {why}")));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return field("duration", "must be positive");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return field("fps", "must be positive");
        }
        if !(self.imu_rate > 0.0 && self.imu_rate.is_finite()) {
            return field("imu_rate", "must be positive");
        }
        if self.lines.is_empty() {
            return field("lines", "at least one line is required");
        }
        for (i, l) in self.lines.iter().enumerate() {
            if !(l.direction.norm() > 1e-12) || !(l.half_length > 0.0) || !l.point.iter().all(|v| v.is_finite()) {
                return field(&format!("lines[{i}]"), "needs a finite point, a non-zero direction and a positive half_length");
            }
        }
        let n = &self.noise;
        if !(n.accel_sigma >= 0.0) {
            return field("noise.accel_sigma", "must be non-negative");
        }
        if !(n.gyro_sigma >= 0.0) {
            return field("noise.gyro_sigma", "must be non-negative");
        }
        if !(self.obs_noise >= 0.0) {
            return field("obs_noise", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) {
            return field("outlier_fraction", "must lie in [0, 1]");
        }
        if self.points_per_line == 0 {
            return field("points_per_line", "must be positive");
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let traj_ok = match &self.trajectory {
            TrajectorySpec::LinearParallel { period, .. }
            | TrajectorySpec::LinearPerpendicular { period, .. }
            | TrajectorySpec::CircularParallel { period, .. }
            | TrajectorySpec::CircularPerpendicular { period, .. }
            | TrajectorySpec::CircularTilted { period, .. } => positive(*period),
            TrajectorySpec::Zigzag { segment_duration, .. } => positive(*segment_duration),
            TrajectorySpec::Square { segment_duration, dwell, .. } => positive(*segment_duration) && *dwell >= 0.0,
            TrajectorySpec::Waypoints { points, segment_duration, dwell } => {
                !points.is_empty() && positive(*segment_duration) && *dwell >= 0.0
            }
        };
        if !traj_ok {
            return field("trajectory", "periods and segment durations must be positive, dwell non-negative, waypoints non-empty");
        }
        if let Some(d) = self.raster_duration {
            if !(d >= 0.0) {
                return field("raster_duration", "must be non-negative");
            }
        }
        if let Some(p) = self.rotation.period {
            if !positive(p) {
                return field("rotation.period", "must be positive");
            }
        }
        self.intrinsics
            .validate()
            .or_else(|e| field("intrinsics", &e.to_string()))
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frame_count()).map(|i| i as f64 / self.fps).collect()
    }

    pub fn motion(&self) -> Motion {
        Motion::new(&self.trajectory, self.rotation)
    }

    /// Named scenarios. `linear`, `rotation`, `zigzag` and `square` share
    /// the noisy sensor setup (accelerometer σ 0.05 m/s², bias 0.02 m/s² per
    /// axis, image noise 0.002); `noiseless` is the default scene without
    /// any noise. All of them render rasters over the first 0.1 s for line
    /// detection.
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            raster: true,
            raster_duration: Some(0.1),
            ..Self::default()
        };
        let noisy = Self {
            noise: NoiseSpec {
                accel_bias: Vector3::repeat(0.02),
                ..NoiseSpec::default()
            },
            obs_noise: 0.002,
            ..base.clone()
        };
        Ok(match name {
            "linear" => noisy,
            "rotation" => Self {
                rotation: RotationSpec { axis: RotationAxis::RotZ, rate: 0.3, period: None },
                ..noisy
            },
            "zigzag" => Self {
                trajectory: TrajectorySpec::Zigzag { amplitude: 0.3, segment_duration: 0.5 },
                ..noisy
            },
            "square" => Self {
                trajectory: TrajectorySpec::Square { side: 0.3, segment_duration: 0.5, dwell: 0.2 },
                ..noisy
            },
            "noiseless" => Self {
                noise: NoiseSpec::noiseless(),
                ..base
            },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown preset `{other}`; expected one of {}",
                    Self::PRESETS.join(", ")
                )))
            }
        })
    }

    pub const PRESETS: [&'static str; 5] = ["linear", "rotation", "zigzag", "square", "noiseless"];
}
