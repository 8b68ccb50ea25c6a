//! Closed-form camera motion: position with its first two derivatives and
//! orientation with its body rate.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Translational part of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrajectorySpec {
    /// `x(t) = A sin(ωt)` along the camera x axis.
    LinearParallel { amplitude: f64, period: f64 },
    /// `z(t) = A sin(ωt)` along the optical axis.
    LinearPerpendicular { amplitude: f64, period: f64 },
    /// Circle in the image-parallel x-y plane.
    CircularParallel { amplitude: f64, period: f64 },
    /// Circle in the x-z plane.
    CircularPerpendicular { amplitude: f64, period: f64 },
    /// Circle in a plane tilted 45° about x.
    CircularTilted { amplitude: f64, period: f64 },
    /// Back-and-forth zigzag in the x-y plane, stopping at each vertex.
    Zigzag { amplitude: f64, segment_duration: f64 },
    /// Square in the x-y plane with a pause at each corner.
    Square {
        side: f64,
        segment_duration: f64,
        dwell: f64,
    },
    /// Straight segments through the given points, then at rest.
    Waypoints {
        points: Vec<Vector3<f64>>,
        segment_duration: f64,
        dwell: f64,
    },
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::LinearParallel {
            amplitude: 0.3,
            period: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationAxis {
    #[default]
    None,
    RotX,
    RotY,
    RotZ,
}

/// Rotation about a fixed camera axis. Without a period the rate is
/// constant; with one the angle oscillates with peak rate `rate`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationSpec {
    pub axis: RotationAxis,
    /// rad/s
    pub rate: f64,
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Camera-to-world rotation.
    pub orientation: UnitQuaternion<f64>,
    /// Angular velocity in the camera frame.
    pub body_rate: Vector3<f64>,
}

/// Piecewise constant-acceleration leg with a trapezoidal speed profile:
/// accelerate for a quarter of the leg, cruise for half, brake for the rest.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Leg {
    from: Vector3<f64>,
    to: Vector3<f64>,
    duration: f64,
}

impl Leg {
    fn eval(&self, tau: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let delta = self.to - self.from;
        let len = delta.norm();
        if len == 0.0 || self.duration <= 0.0 {
            return (self.from, Vector3::zeros(), Vector3::zeros());
        }
        let dir = delta / len;
        let t = self.duration;
        let ta = 0.25 * t;
        let v_max = 4.0 * len / (3.0 * t);
        let acc = v_max / ta;
        let tau = tau.clamp(0.0, t);
        let (s, v, a) = if tau < ta {
            (0.5 * acc * tau * tau, acc * tau, acc)
        } else if tau < t - ta {
            (0.5 * acc * ta * ta + v_max * (tau - ta), v_max, 0.0)
        } else {
            let r = t - tau;
            (len - 0.5 * acc * r * r, acc * r, -acc)
        };
        (self.from + dir * s, dir * v, dir * a)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Path {
    Analytic(TrajectorySpec),
    Legs {
        legs: Vec<Leg>,
        dwell: f64,
        cyclic: bool,
    },
}

/// Evaluates a trajectory and rotation profile at arbitrary times.
#[derive(Debug, Clone, PartialEq)]
pub struct Motion {
    path: Path,
    rotation: RotationSpec,
}

fn legs_through(points: &[Vector3<f64>], segment_duration: f64) -> Vec<Leg> {
    points
        .windows(2)
        .map(|w| Leg {
            from: w[0],
            to: w[1],
            duration: segment_duration,
        })
        .collect()
}

impl Motion {
    pub fn new(trajectory: &TrajectorySpec, rotation: RotationSpec) -> Self {
        let path = match trajectory {
            TrajectorySpec::Zigzag {
                amplitude,
                segment_duration,
            } => {
                let h = 0.5 * amplitude;
                let forward = [
                    Vector3::zeros(),
                    Vector3::new(h, h, 0.0),
                    Vector3::new(2.0 * h, 0.0, 0.0),
                    Vector3::new(3.0 * h, h, 0.0),
                    Vector3::new(4.0 * h, 0.0, 0.0),
                ];
                let mut pts = forward.to_vec();
                pts.extend(forward.iter().rev().skip(1));
                Path::Legs {
                    legs: legs_through(&pts, *segment_duration),
                    dwell: 0.0,
                    cyclic: true,
                }
            }
            TrajectorySpec::Square {
                side,
                segment_duration,
                dwell,
            } => {
                let pts = [
                    Vector3::zeros(),
                    Vector3::new(*side, 0.0, 0.0),
                    Vector3::new(*side, *side, 0.0),
                    Vector3::new(0.0, *side, 0.0),
                    Vector3::zeros(),
                ];
                Path::Legs {
                    legs: legs_through(&pts, *segment_duration),
                    dwell: *dwell,
                    cyclic: true,
                }
            }
            TrajectorySpec::Waypoints {
                points,
                segment_duration,
                dwell,
            } => {
                let legs = if points.len() == 1 {
                    vec![Leg { from: points[0], to: points[0], duration: *segment_duration }]
                } else {
                    legs_through(points, *segment_duration)
                };
                Path::Legs {
                    legs,
                    dwell: *dwell,
                    cyclic: false,
                }
            }
            other => Path::Analytic(other.clone()),
        };
        Self { path, rotation }
    }

    fn translation(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        match &self.path {
            Path::Analytic(spec) => analytic(spec, t),
            Path::Legs { legs, dwell, cyclic } => {
                let slot = legs[0].duration + dwell;
                let cycle = slot * legs.len() as f64;
                let local = if *cyclic {
                    t.rem_euclid(cycle)
                } else if t >= cycle {
                    return (legs[legs.len() - 1].to, Vector3::zeros(), Vector3::zeros());
                } else {
                    t
                };
                let i = ((local / slot) as usize).min(legs.len() - 1);
                let tau = local - i as f64 * slot;
                if tau >= legs[i].duration {
                    (legs[i].to, Vector3::zeros(), Vector3::zeros())
                } else {
                    legs[i].eval(tau)
                }
            }
        }
    }

    /// `(angle, rate)` of the rotation profile.
    fn angle(&self, t: f64) -> (f64, f64) {
        let r = &self.rotation;
        match r.period {
            Some(p) if p > 0.0 => {
                let w = TAU / p;
                (r.rate / w * (w * t).sin(), r.rate * (w * t).cos())
            }
            _ => (r.rate * t, r.rate),
        }
    }

    pub fn state(&self, t: f64) -> CameraState {
        let (position, velocity, acceleration) = self.translation(t);
        let axis = match self.rotation.axis {
            RotationAxis::None => None,
            RotationAxis::RotX => Some(Vector3::x_axis()),
            RotationAxis::RotY => Some(Vector3::y_axis()),
            RotationAxis::RotZ => Some(Vector3::z_axis()),
        };
        let (orientation, body_rate) = match axis {
            None => (UnitQuaternion::identity(), Vector3::zeros()),
            Some(axis) => {
                let (angle, rate) = self.angle(t);
                (UnitQuaternion::from_axis_angle(&axis, angle), axis.into_inner() * rate)
            }
        };
        CameraState {
            position,
            velocity,
            acceleration,
            orientation,
            body_rate,
        }
    }
}

fn analytic(spec: &TrajectorySpec, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
    // unit circle starting at the origin: (sin, 1 - cos)
    let circle = |a: f64, p: f64, u: Vector3<f64>, v: Vector3<f64>| {
        let w = TAU / p;
        let (s, c) = (w * t).sin_cos();
        (
            (u * s + v * (1.0 - c)) * a,
            (u * c + v * s) * (a * w),
            (-u * s + v * c) * (a * w * w),
        )
    };
    let line = |a: f64, p: f64, u: Vector3<f64>| {
        let w = TAU / p;
        let (s, c) = (w * t).sin_cos();
        (u * (a * s), u * (a * w * c), u * (-a * w * w * s))
    };
    match *spec {
        TrajectorySpec::LinearParallel { amplitude, period } => line(amplitude, period, Vector3::x()),
        TrajectorySpec::LinearPerpendicular { amplitude, period } => line(amplitude, period, Vector3::z()),
        TrajectorySpec::CircularParallel { amplitude, period } => circle(amplitude, period, Vector3::x(), Vector3::y()),
        TrajectorySpec::CircularPerpendicular { amplitude, period } => {
            circle(amplitude, period, Vector3::x(), Vector3::z())
        }
        TrajectorySpec::CircularTilted { amplitude, period } => circle(
            amplitude,
            period,
            Vector3::x(),
            Vector3::new(0.0, FRAC_1_SQRT_2, FRAC_1_SQRT_2),
        ),
        _ => unreachable!("leg-based trajectories are handled by Motion"),
    }
}

/// Rotation about `axis` by `angle`, exposed for tests and scene setup.
pub fn axis_rotation(axis: Vector3<f64>, angle: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Unit::new_normalize(axis), angle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(motion: &Motion, t: f64) {
        let h = 1e-5;
        let (a, b) = (motion.state(t - h), motion.state(t + h));
        let s = motion.state(t);
        assert!(((b.position - a.position) / (2.0 * h) - s.velocity).norm() < 1e-6);
        assert!(((b.velocity - a.velocity) / (2.0 * h) - s.acceleration).norm() < 1e-4);
        let dq = a.orientation.inverse() * b.orientation;
        assert!((dq.scaled_axis() / (2.0 * h) - s.body_rate).norm() < 1e-6);
    }

    #[test]
    fn analytic_paths_start_at_origin_with_consistent_derivatives() {
        for spec in [
            TrajectorySpec::LinearParallel { amplitude: 0.3, period: 4.0 },
            TrajectorySpec::LinearPerpendicular { amplitude: 0.2, period: 3.0 },
            TrajectorySpec::CircularParallel { amplitude: 0.3, period: 5.0 },
            TrajectorySpec::CircularPerpendicular { amplitude: 0.3, period: 5.0 },
            TrajectorySpec::CircularTilted { amplitude: 0.3, period: 5.0 },
        ] {
            let rot = RotationSpec { axis: RotationAxis::RotY, rate: 0.2, period: Some(3.0) };
            let m = Motion::new(&spec, rot);
            assert_eq!(m.state(0.0).position, Vector3::zeros());
            for t in [0.3, 1.7, 4.2] {
                fd_check(&m, t);
            }
        }
    }

    #[test]
    fn sine_acceleration_closed_form() {
        let m = Motion::new(&TrajectorySpec::LinearParallel { amplitude: 0.3, period: 4.0 }, RotationSpec::default());
        let w = TAU / 4.0;
        for t in [0.1, 1.0, 2.5] {
            let a = m.state(t).acceleration;
            assert!((a.x + 0.3 * w * w * (w * t).sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn square_visits_corners_and_pauses() {
        let spec = TrajectorySpec::Square { side: 0.4, segment_duration: 1.0, dwell: 0.5 };
        let m = Motion::new(&spec, RotationSpec::default());
        assert!((m.state(1.0).position - Vector3::new(0.4, 0.0, 0.0)).norm() < 1e-12);
        let pause = m.state(1.2);
        assert_eq!(pause.velocity, Vector3::zeros());
        assert!((m.state(2.5).position - Vector3::new(0.4, 0.4, 0.0)).norm() < 1e-12);
        assert!((m.state(6.0).position).norm() < 1e-12);
        for t in [0.1, 0.6, 1.6, 2.3] {
            fd_check(&m, t);
        }
    }

    #[test]
    fn zigzag_is_bounded_and_periodic() {
        let spec = TrajectorySpec::Zigzag { amplitude: 0.4, segment_duration: 0.8 };
        let m = Motion::new(&spec, RotationSpec::default());
        let cycle = 8.0 * 0.8;
        for i in 0..200 {
            let t = i as f64 * 0.07;
            let p = m.state(t).position;
            assert!(p.x >= -1e-12 && p.x <= 0.8 + 1e-12 && p.y >= -1e-12 && p.y <= 0.2 + 1e-12);
            assert!((m.state(t + cycle).position - p).norm() < 1e-9);
        }
    }

    #[test]
    fn waypoints_rest_at_the_end() {
        let pts = vec![Vector3::zeros(), Vector3::new(0.0, 0.0, 0.5)];
        let m = Motion::new(&TrajectorySpec::Waypoints { points: pts, segment_duration: 1.0, dwell: 0.0 }, RotationSpec::default());
        let s = m.state(3.0);
        assert_eq!(s.position, Vector3::new(0.0, 0.0, 0.5));
        assert_eq!(s.acceleration, Vector3::zeros());
    }

    #[test]
    fn constant_rotation_about_z() {
        let rot = RotationSpec { axis: RotationAxis::RotZ, rate: 0.3, period: None };
        let m = Motion::new(&TrajectorySpec::default(), rot);
        let s = m.state(2.0);
        assert!((s.orientation.angle() - 0.6).abs() < 1e-12);
        assert_eq!(s.body_rate, Vector3::new(0.0, 0.0, 0.3));
        let q = axis_rotation(Vector3::z(), 0.6);
        assert!(q.angle_to(&s.orientation) < 1e-12);
    }
}
