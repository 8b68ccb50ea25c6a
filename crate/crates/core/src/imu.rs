//! Inertial measurements: the double-integral operator Γ, gyro orientation
//! tables and derotation of image observations into a window's rotation
//! center.
//!
//! Rotation tables hold, for each IMU timestamp, the orientation of the
//! camera at that instant relative to the camera at the table's center time.
//! Applied to a vector it maps camera-frame coordinates at `t` into the
//! center frame, so derotating an observation is a single rotation of its
//! viewing ray.

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Observation, MIN_DEPTH};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Specific force in the camera frame (m/s²).
    pub accel: Vector3<f64>,
    /// Angular velocity in the camera frame (rad/s).
    pub gyro: Vector3<f64>,
}

/// Time-ordered IMU samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuTrack {
    samples: Vec<ImuSample>,
    sample_rate_hint: f64,
}

impl ImuTrack {
    pub fn new(samples: Vec<ImuSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "IMU track needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            let finite = s.t.is_finite()
                && s.accel.iter().all(|v| v.is_finite())
                && s.gyro.iter().all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidInput(format!("IMU sample {i} is not finite")));
            }
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidInput(format!(
                "IMU timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        let span = samples[samples.len() - 1].t - samples[0].t;
        let sample_rate_hint = (samples.len() - 1) as f64 / span;
        Ok(Self {
            samples,
            sample_rate_hint,
        })
    }

    pub fn samples(&self) -> &[ImuSample] {
        &self.samples
    }

    pub fn sample_rate_hint(&self) -> f64 {
        self.sample_rate_hint
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    fn check_covered(&self, t: f64) -> Result<()> {
        if t >= self.start() && t <= self.end() {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            })
        }
    }

    /// Index `i` of the interval `[t_i, t_{i+1}]` holding `t` (assumes `t`
    /// is covered).
    fn interval(&self, t: f64) -> usize {
        let idx = self.samples.partition_point(|s| s.t <= t);
        idx.saturating_sub(1).min(self.samples.len() - 2)
    }

    /// Linearly interpolated specific force at `t`.
    fn accel_at(&self, t: f64) -> Vector3<f64> {
        let i = self.interval(t);
        let (s0, s1) = (&self.samples[i], &self.samples[i + 1]);
        if t == s0.t {
            return s0.accel;
        }
        if t == s1.t {
            return s1.accel;
        }
        let w = (t - s0.t) / (s1.t - s0.t);
        s0.accel * (1.0 - w) + s1.accel * w
    }
}

/// Gyro-integrated orientations relative to a center time.
#[derive(Debug, Clone, PartialEq)]
pub struct RotationTable {
    center: f64,
    timestamps: Vec<f64>,
    rotations: Vec<UnitQuaternion<f64>>,
    // body rate held over [timestamps[i], timestamps[i + 1])
    rates: Vec<Vector3<f64>>,
}

fn rotation_step(rate: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(rate * dt)
}

fn renormalized(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

impl RotationTable {
    /// Table of identity rotations spanning `[start, end]`.
    pub fn identity(start: f64, end: f64) -> Self {
        Self {
            center: start,
            timestamps: vec![start, end],
            rotations: vec![UnitQuaternion::identity(); 2],
            rates: vec![Vector3::zeros()],
        }
    }

    /// Builds a table from explicit orientations; between samples the body
    /// rate is taken constant.
    pub fn from_rotations(
        center: f64,
        timestamps: Vec<f64>,
        rotations: Vec<UnitQuaternion<f64>>,
    ) -> Result<Self> {
        if timestamps.len() < 2 || timestamps.len() != rotations.len() {
            return Err(Error::InvalidInput(
                "rotation table needs matching timestamps and rotations (at least 2)".into(),
            ));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("rotation timestamps must increase".into()));
        }
        let rates = timestamps
            .windows(2)
            .zip(rotations.windows(2))
            .map(|(t, q)| (q[0].inverse() * q[1]).scaled_axis() / (t[1] - t[0]))
            .collect();
        Ok(Self {
            center,
            timestamps,
            rotations,
            rates,
        })
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn rotations(&self) -> &[UnitQuaternion<f64>] {
        &self.rotations
    }

    pub fn start(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn end(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    /// Orientation at time `t` relative to the center.
    pub fn at(&self, t: f64) -> Result<UnitQuaternion<f64>> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let idx = self.timestamps.partition_point(|&s| s <= t);
        let i = idx.saturating_sub(1).min(self.timestamps.len() - 2);
        if t == self.timestamps[i] {
            return Ok(self.rotations[i]);
        }
        if t == self.timestamps[i + 1] {
            return Ok(self.rotations[i + 1]);
        }
        Ok(self.rotations[i] * rotation_step(&self.rates[i], t - self.timestamps[i]))
    }

    /// Table with every orientation inverted (sample times only are exact).
    pub fn inverse(&self) -> Self {
        let rotations = self.rotations.iter().map(|q| q.inverse()).collect();
        Self::from_rotations(self.center, self.timestamps.clone(), rotations)
            .expect("same timestamps")
    }
}

/// Γ evaluated on a set of times, relative to the window origin `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    t0: f64,
    timestamps: Vec<f64>,
    values: Vec<Vector3<f64>>,
    velocities: Vec<Vector3<f64>>,
}

impl GammaTable {
    /// A table that is identically zero over `[t0, t_end]`.
    pub fn zeros(t0: f64, t_end: f64) -> Self {
        let mut timestamps = vec![t0];
        if t_end > t0 {
            timestamps.push(t_end);
        }
        let n = timestamps.len();
        Self {
            t0,
            timestamps,
            values: vec![Vector3::zeros(); n],
            velocities: vec![Vector3::zeros(); n],
        }
    }

    /// Table from precomputed samples; the first timestamp must be the
    /// origin with zero value and velocity.
    pub fn from_samples(
        timestamps: Vec<f64>,
        values: Vec<Vector3<f64>>,
        velocities: Vec<Vector3<f64>>,
    ) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != values.len() || values.len() != velocities.len() {
            return Err(Error::InvalidInput("gamma table arrays must be non-empty and equal length".into()));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("gamma timestamps must increase".into()));
        }
        if values[0] != Vector3::zeros() || velocities[0] != Vector3::zeros() {
            return Err(Error::InvalidInput("gamma must vanish at its origin".into()));
        }
        Ok(Self {
            t0: timestamps[0],
            timestamps,
            values,
            velocities,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[Vector3<f64>] {
        &self.values
    }

    pub fn end(&self) -> f64 {
        self.timestamps[self.timestamps.len() - 1]
    }

    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !(t >= self.t0 && t <= self.end()) {
            return Err(Error::OutOfRange {
                t,
                start: self.t0,
                end: self.end(),
            });
        }
        let idx = self.timestamps.partition_point(|&s| s < t);
        if idx < self.timestamps.len() && self.timestamps[idx] == t {
            return Ok((idx, 0.0));
        }
        let i = idx - 1;
        let w = (t - self.timestamps[i]) / (self.timestamps[i + 1] - self.timestamps[i]);
        Ok((i, w))
    }

    fn lerp(samples: &[Vector3<f64>], (i, w): (usize, f64)) -> Vector3<f64> {
        if w == 0.0 {
            samples[i]
        } else {
            samples[i] * (1.0 - w) + samples[i + 1] * w
        }
    }

    /// Γ at `t` (exact at table times, linear in between).
    pub fn at(&self, t: f64) -> Result<Vector3<f64>> {
        Ok(Self::lerp(&self.values, self.locate(t)?))
    }

    /// First integral of the acceleration at `t`.
    pub fn velocity_at(&self, t: f64) -> Result<Vector3<f64>> {
        Ok(Self::lerp(&self.velocities, self.locate(t)?))
    }

    /// Γ of the negated acceleration.
    pub fn negated(&self) -> Self {
        Self {
            t0: self.t0,
            timestamps: self.timestamps.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            velocities: self.velocities.iter().map(|v| -v).collect(),
        }
    }
}

/// Double integral of the derotated specific force, starting at rest at `t0`.
///
/// Integration nodes are the IMU sample times plus `t0` and every query time
/// (acceleration linearly interpolated there); both integration layers use
/// the trapezoidal rule.
pub fn integrate_gamma(
    track: &ImuTrack,
    t0: f64,
    query_times: &[f64],
    derotation: &RotationTable,
) -> Result<GammaTable> {
    track.check_covered(t0)?;
    for &t in query_times {
        track.check_covered(t)?;
        if t < t0 {
            return Err(Error::OutOfRange {
                t,
                start: t0,
                end: track.end(),
            });
        }
    }
    let t_max = query_times.iter().copied().fold(t0, f64::max);

    let mut queries: Vec<f64> = query_times.iter().copied().filter(|&t| t > t0).collect();
    queries.sort_by(f64::total_cmp);
    queries.dedup();

    let mut nodes: Vec<f64> = Vec::with_capacity(queries.len() + 64);
    nodes.push(t0);
    let first = track.samples.partition_point(|s| s.t <= t0);
    let mut samples = track.samples[first..].iter().map(|s| s.t).take_while(|&t| t <= t_max).peekable();
    let mut qs = queries.iter().copied().peekable();
    loop {
        let next = match (samples.peek(), qs.peek()) {
            (Some(&a), Some(&b)) => {
                if a <= b {
                    samples.next();
                    if a == b {
                        qs.next();
                    }
                    a
                } else {
                    qs.next();
                    b
                }
            }
            (Some(&a), None) => {
                samples.next();
                a
            }
            (None, Some(&b)) => {
                qs.next();
                b
            }
            (None, None) => break,
        };
        nodes.push(next);
    }

    let accel = |t: f64| -> Result<Vector3<f64>> { Ok(derotation.at(t)? * track.accel_at(t)) };

    let mut timestamps = vec![t0];
    let mut values = vec![Vector3::zeros()];
    let mut velocities = vec![Vector3::zeros()];
    let mut qi = 0;
    let (mut pos, mut vel) = (Vector3::zeros(), Vector3::<f64>::zeros());
    let mut a_prev = accel(t0)?;
    for w in nodes.windows(2) {
        let dt = w[1] - w[0];
        let a_next = accel(w[1])?;
        let vel_next = vel + (a_prev + a_next) * (0.5 * dt);
        pos += (vel + vel_next) * (0.5 * dt);
        vel = vel_next;
        a_prev = a_next;
        if qi < queries.len() && queries[qi] == w[1] {
            timestamps.push(w[1]);
            values.push(pos);
            velocities.push(vel);
            qi += 1;
        }
    }
    Ok(GammaTable {
        t0,
        timestamps,
        values,
        velocities,
    })
}

/// Integrates body rates into orientations relative to `center_time`.
pub fn integrate_gyro(track: &ImuTrack, center_time: f64) -> Result<RotationTable> {
    track.check_covered(center_time)?;
    let samples = &track.samples;
    let n = samples.len();
    let timestamps: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let rates: Vec<Vector3<f64>> = samples[..n - 1].iter().map(|s| s.gyro).collect();

    let k = track.interval(center_time);
    let mut rotations = vec![UnitQuaternion::identity(); n];
    rotations[k] = rotation_step(&rates[k], center_time - timestamps[k]).inverse();
    rotations[k + 1] = rotation_step(&rates[k], timestamps[k + 1] - center_time);
    for i in k + 1..n - 1 {
        let step = rotation_step(&rates[i], timestamps[i + 1] - timestamps[i]);
        rotations[i + 1] = renormalized(rotations[i] * step);
    }
    for i in (0..k).rev() {
        let step = rotation_step(&rates[i], timestamps[i + 1] - timestamps[i]);
        rotations[i] = renormalized(rotations[i + 1] * step.inverse());
    }
    Ok(RotationTable {
        center: center_time,
        timestamps,
        rotations,
        rates,
    })
}

/// Rotates each observation's viewing ray into the table's center frame.
///
/// Returns the derotated observations and the number dropped because the
/// rotated ray points behind the camera.
pub fn derotate_observations(
    obs: &[Observation],
    rot: &RotationTable,
) -> Result<(Vec<Observation>, usize)> {
    let mut out = Vec::with_capacity(obs.len());
    let mut dropped = 0;
    for o in obs {
        match derotate_point(&o.p, &rot.at(o.t)?) {
            Some(p) => out.push(Observation { t: o.t, p }),
            None => dropped += 1,
        }
    }
    Ok((out, dropped))
}

/// Derotates a single normalized point; `None` when it lands behind the
/// camera.
pub fn derotate_point(p: &Vector2<f64>, q: &UnitQuaternion<f64>) -> Option<Vector2<f64>> {
    let r = q * Vector3::new(p.x, p.y, 1.0);
    (r.z > MIN_DEPTH).then(|| Vector2::new(r.x / r.z, r.y / r.z))
}

/// Orientation of the camera at `new_center` in the global basis, given the
/// orientation of the previous center and a table centered on it.
pub fn rechain_window_rotation(
    global_from_prev_center: &UnitQuaternion<f64>,
    rot: &RotationTable,
    new_center: f64,
) -> Result<UnitQuaternion<f64>> {
    Ok(global_from_prev_center * rot.at(new_center)?)
}
