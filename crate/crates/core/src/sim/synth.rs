use nalgebra::{UnitQuaternion, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::render::render_frame;
use super::{ScenarioSpec, SceneLine};
use crate::error::{Error, Result};
use crate::estimator::{SharedMotionParams, SurfaceSetParams};
use crate::geometry::{canonicalize_line, LineState, Observation};
use crate::imu::{GammaTable, ImuSample, ImuTrack, RotationTable};
use crate::raster::GrayImage;

/// Closest a sampled point may come to the camera plane (m).
const MIN_SAMPLE_DEPTH: f64 = 0.05;
/// Fraction of frames a line may be out of view before synthesis fails.
const MAX_INVISIBLE_FRACTION: f64 = 0.1;

/// Observations of one frame, in the camera frame at capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameObservations {
    pub t: f64,
    pub observations: Vec<Observation>,
    /// Source line of each observation; `None` for outliers.
    pub labels: Vec<Option<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthFrame {
    pub t: f64,
    /// Camera position in the world frame.
    pub position: Vector3<f64>,
    /// Camera-to-world rotation.
    pub orientation: UnitQuaternion<f64>,
}

/// Simulator ground truth; carries the scenario so any quantity can be
/// re-evaluated in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub frames: Vec<TruthFrame>,
    pub lines: Vec<SceneLine>,
    pub scenario: ScenarioSpec,
}

/// Exact model quantities for one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTruth {
    pub params: SurfaceSetParams,
    pub gamma: GammaTable,
    pub rotation: RotationTable,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub imu: ImuTrack,
    pub frames: Vec<FrameObservations>,
    pub rasters: Option<Vec<GrayImage>>,
    pub truth: GroundTruth,
}

impl GroundTruth {
    pub fn frame_times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.t).collect()
    }

    /// Camera positions in the basis of the first camera pose.
    pub fn positions_in_start_frame(&self) -> Vec<Vector3<f64>> {
        let first = &self.frames[0];
        let inv = first.orientation.inverse();
        self.frames.iter().map(|f| inv * (f.position - first.position)).collect()
    }

    /// Line segments in the basis of the first camera pose.
    pub fn lines_in_start_frame(&self) -> Vec<SceneLine> {
        let first = &self.frames[0];
        let inv = first.orientation.inverse();
        self.lines
            .iter()
            .map(|l| SceneLine::new(inv * (l.point - first.position), inv * l.direction, l.half_length))
            .collect()
    }

    /// Canonical line states in the camera frame at time `t`.
    pub fn lines_in_camera(&self, t: f64) -> Result<Vec<LineState>> {
        let s = self.scenario.motion().state(t);
        let inv = s.orientation.inverse();
        self.lines
            .iter()
            .map(|l| canonicalize_line(&(inv * (l.point - s.position)), &(inv * l.direction)))
            .collect()
    }

    /// Scene displacement relative to the camera, `X(t)`, expressed in the
    /// camera frame at `t0`.
    pub fn displacement(&self, t0: f64, t: f64) -> Vector3<f64> {
        let motion = self.scenario.motion();
        let (s0, s) = (motion.state(t0), motion.state(t));
        -(s0.orientation.inverse() * (s.position - s0.position))
    }

    /// Exact window parameters for a window starting at `times[0]`, with Γ
    /// and the rotation table sampled at `times`.
    ///
    /// Velocity is taken at the window origin and `g` is gravity plus bias
    /// in the origin camera frame; Γ holds whatever remains of `X(t)`.
    pub fn window_truth(&self, times: &[f64]) -> Result<WindowTruth> {
        if times.len() < 2 {
            return Err(Error::InvalidInput("window truth needs at least two times".into()));
        }
        let motion = self.scenario.motion();
        let t0 = times[0];
        let s0 = motion.state(t0);
        let inv0 = s0.orientation.inverse();
        let velocity = -(inv0 * s0.velocity);
        let g = inv0 * self.scenario.noise.gravity + self.scenario.noise.accel_bias;
        let lines = self.lines_in_camera(t0)?;
        let params = SurfaceSetParams::from_lines(&lines, SharedMotionParams::new(velocity, g));

        let mut values = Vec::with_capacity(times.len());
        let mut velocities = Vec::with_capacity(times.len());
        let mut rotations = Vec::with_capacity(times.len());
        for &t in times {
            let s = motion.state(t);
            let tau = t - t0;
            let x = -(inv0 * (s.position - s0.position));
            let xdot = -(inv0 * s.velocity);
            if t == t0 {
                values.push(Vector3::zeros());
                velocities.push(Vector3::zeros());
            } else {
                values.push(x - velocity * tau - g * (0.5 * tau * tau));
                velocities.push(xdot - velocity - g * tau);
            }
            rotations.push(inv0 * s.orientation);
        }
        Ok(WindowTruth {
            params,
            gamma: GammaTable::from_samples(times.to_vec(), values, velocities)?,
            rotation: RotationTable::from_rotations(t0, times.to_vec(), rotations)?,
        })
    }
}

/// Range of `α` for which `p + α·d` (camera frame) is in front of the
/// camera and inside the field of view.
fn visible_interval(p: &Vector3<f64>, d: &Vector3<f64>, half_len: f64, fov: &Vector2<f64>) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (-half_len, half_len);
    // each constraint reads k·α ≤ m
    let constraints = [
        (-d.z, p.z - MIN_SAMPLE_DEPTH),
        (d.x - fov.x * d.z, fov.x * p.z - p.x),
        (-d.x - fov.x * d.z, fov.x * p.z + p.x),
        (d.y - fov.y * d.z, fov.y * p.z - p.y),
        (-d.y - fov.y * d.z, fov.y * p.z + p.y),
    ];
    for (k, m) in constraints {
        if k.abs() < 1e-15 {
            if m < 0.0 {
                return None;
            }
        } else if k > 0.0 {
            hi = hi.min(m / k);
        } else {
            lo = lo.max(m / k);
        }
    }
    (hi > lo).then_some((lo, hi))
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive σ"))
}

fn gaussian3(dist: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
    match dist {
        Some(d) => Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng)),
        None => Vector3::zeros(),
    }
}

/// Generates an IMU track, per-frame observations, optional rasters and
/// ground truth. Identical specs give bit-identical output.
pub fn synthesize(spec: &ScenarioSpec) -> Result<SimOutput> {
    spec.validate()?;
    let motion = spec.motion();
    let noise = &spec.noise;

    let mut imu_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    imu_rng.set_stream(1);
    let accel_noise = normal(noise.accel_sigma);
    let gyro_noise = normal(noise.gyro_sigma);
    let n_imu = (spec.duration * spec.imu_rate).ceil() as usize;
    let samples = (0..=n_imu)
        .map(|i| {
            let t = i as f64 / spec.imu_rate;
            let s = motion.state(t);
            let accel = s.orientation.inverse() * (s.acceleration + noise.gravity)
                + noise.accel_bias
                + gaussian3(&accel_noise, &mut imu_rng);
            let gyro = s.body_rate + gaussian3(&gyro_noise, &mut imu_rng);
            ImuSample { t, accel, gyro }
        })
        .collect();
    let imu = ImuTrack::new(samples)?;

    let mut obs_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    obs_rng.set_stream(2);
    let obs_noise = normal(spec.obs_noise);
    let fov = spec.intrinsics.half_fov();
    let (bmin, bmax) = spec.intrinsics.normalized_bounds();
    let mut invisible = vec![0usize; spec.lines.len()];
    let mut frames = Vec::with_capacity(spec.frame_count());
    let mut truth_frames = Vec::with_capacity(spec.frame_count());
    let mut rasters = spec.raster.then(Vec::new);
    for t in spec.frame_times() {
        let s = motion.state(t);
        let inv = s.orientation.inverse();
        let mut observations = Vec::with_capacity(spec.lines.len() * spec.points_per_line);
        let mut labels = Vec::with_capacity(observations.capacity());
        let mut segments = Vec::with_capacity(spec.lines.len());
        for (li, line) in spec.lines.iter().enumerate() {
            let p = inv * (line.point - s.position);
            let d = inv * line.direction;
            let Some((lo, hi)) = visible_interval(&p, &d, line.half_length, &fov) else {
                invisible[li] += 1;
                continue;
            };
            segments.push((p + d * lo, p + d * hi));
            for _ in 0..spec.points_per_line {
                if spec.outlier_fraction > 0.0 && obs_rng.random::<f64>() < spec.outlier_fraction {
                    let x = obs_rng.random_range(bmin.x..bmax.x);
                    let y = obs_rng.random_range(bmin.y..bmax.y);
                    observations.push(Observation::new(t, x, y));
                    labels.push(None);
                    continue;
                }
                let q = p + d * obs_rng.random_range(lo..hi);
                let mut img = Vector2::new(q.x / q.z, q.y / q.z);
                if let Some(dist) = &obs_noise {
                    img += Vector2::new(dist.sample(&mut obs_rng), dist.sample(&mut obs_rng));
                }
                observations.push(Observation { t, p: img });
                labels.push(Some(li));
            }
        }
        let in_raster_span = spec.raster_duration.is_none_or(|d| t <= d + 1e-9);
        if let (Some(r), true) = (rasters.as_mut(), in_raster_span) {
            r.push(render_frame(&segments, &spec.intrinsics, &spec.render));
        }
        frames.push(FrameObservations { t, observations, labels });
        truth_frames.push(TruthFrame {
            t,
            position: s.position,
            orientation: s.orientation,
        });
    }
    let n_frames = frames.len().max(1) as f64;
    for (line, &count) in invisible.iter().enumerate() {
        let fraction = count as f64 / n_frames;
        if fraction > MAX_INVISIBLE_FRACTION {
            return Err(Error::LineNotVisible {
                line,
                fraction: 100.0 * fraction,
            });
        }
    }
    Ok(SimOutput {
        imu,
        frames,
        rasters,
        truth: GroundTruth {
            frames: truth_frames,
            lines: spec.lines.clone(),
            scenario: spec.clone(),
        },
    })
}
