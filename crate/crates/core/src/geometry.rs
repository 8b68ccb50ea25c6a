//! Lines, rulings and their pinhole projection.
//!
//! Everything here lives on the normalized image plane (focal length 1,
//! principal point at the origin). A line in the camera frame at the window
//! start is `x0 + α·v0`; translating it by the displacement `X(t)` gives the
//! ruling at time `t`, and projecting that ruling gives the image line the
//! estimator fits.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest direction norm accepted before a line is considered degenerate.
pub const MIN_DIRECTION_NORM: f64 = 1e-12;
/// Depth floor (meters) below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-6;
/// Minimum image separation of the two ruling anchors.
pub const MIN_ENDPOINT_SEPARATION: f64 = 1e-9;
/// Components with magnitude at or below this do not decide the sign of `v0`.
const SIGN_EPS: f64 = 1e-9;

/// Canonical unbounded 3D line: `x0` is the foot of the perpendicular from
/// the origin and `v0` a unit direction whose first significant component is
/// positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineState {
    pub x0: Vector3<f64>,
    pub v0: Vector3<f64>,
}

impl LineState {
    /// Point on the line at parameter `alpha`.
    pub fn point(&self, alpha: f64) -> Vector3<f64> {
        self.x0 + self.v0 * alpha
    }

    /// Euclidean distance from `q` to the line.
    pub fn distance_to_point(&self, q: &Vector3<f64>) -> f64 {
        let rel = q - self.x0;
        (rel - self.v0 * rel.dot(&self.v0)).norm()
    }

    /// The same line translated by `offset`, re-canonicalized.
    pub fn translated(&self, offset: &Vector3<f64>) -> LineState {
        canonicalize_line(&(self.x0 + offset), &self.v0).expect("unit direction")
    }
}

/// A 2D point on the normalized image plane observed at time `t` (seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub p: Vector2<f64>,
}

impl Observation {
    /// Normalized coordinates beyond this magnitude are rejected as garbage.
    pub const MAX_COORD: f64 = 10.0;

    pub fn new(t: f64, x: f64, y: f64) -> Self {
        Self {
            t,
            p: Vector2::new(x, y),
        }
    }

    pub fn is_sane(&self) -> bool {
        self.t.is_finite()
            && self.p.iter().all(|v| v.is_finite() && v.abs() <= Self::MAX_COORD)
    }
}

/// Full per-line parameter block in the lumped parameterization: the line
/// (`a`, `c`, `d`, `e`) together with the motion terms it shares with the
/// other lines (`b`, `f`, `g`). `ξ` is folded into `b` and `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulingParams {
    /// Depth of the directrix, `x0.z`.
    pub a: f64,
    /// Initial z-velocity plus bias.
    pub b: f64,
    /// `v0.z`.
    pub c: f64,
    /// `v0.xy`.
    pub d: Vector2<f64>,
    /// `x0.xy`.
    pub e: Vector2<f64>,
    /// Initial xy-velocity plus bias.
    pub f: Vector2<f64>,
    /// Gravitational bias.
    pub g: Vector3<f64>,
}

impl RulingParams {
    /// Line block of `line` with the given shared motion terms.
    pub fn from_line_state(line: &LineState, b: f64, f: Vector2<f64>, g: Vector3<f64>) -> Self {
        Self {
            a: line.x0.z,
            b,
            c: line.v0.z,
            d: line.v0.xy(),
            e: line.x0.xy(),
            f,
            g,
        }
    }

    /// Raw (not canonicalized) line encoded by the block.
    pub fn to_line_state(&self) -> LineState {
        LineState {
            x0: Vector3::new(self.e.x, self.e.y, self.a),
            v0: Vector3::new(self.d.x, self.d.y, self.c),
        }
    }
}

fn apply_sign_rule(v: Vector3<f64>) -> Vector3<f64> {
    match v.iter().find(|c| c.abs() > SIGN_EPS) {
        Some(c) if *c < 0.0 => -v,
        _ => v,
    }
}

/// Canonical representation of the line through `x0_raw` with direction
/// `v0_raw`.
pub fn canonicalize_line(x0_raw: &Vector3<f64>, v0_raw: &Vector3<f64>) -> Result<LineState> {
    let norm = v0_raw.norm();
    if !(norm > MIN_DIRECTION_NORM) {
        return Err(Error::ZeroDirection);
    }
    let v0 = apply_sign_rule(v0_raw / norm);
    let x0 = x0_raw - v0 * x0_raw.dot(&v0);
    Ok(LineState { x0, v0 })
}

/// Projection of the point at parameter `alpha` on `line` translated by `xt`.
pub fn project_ruling_point(line: &LineState, xt: &Vector3<f64>, alpha: f64) -> Result<Vector2<f64>> {
    let q = line.x0 + line.v0 * alpha + xt;
    if !(q.z > MIN_DEPTH) {
        return Err(Error::NonPositiveDepth { depth: q.z });
    }
    Ok(Vector2::new(q.x / q.z, q.y / q.z))
}

/// Image anchors of the translated ruling at `α = 0` and `α = 1`.
pub fn ruling_endpoints_in_image(
    line: &LineState,
    xt: &Vector3<f64>,
) -> Result<(Vector2<f64>, Vector2<f64>)> {
    let r1 = project_ruling_point(line, xt, 0.0)?;
    let r2 = project_ruling_point(line, xt, 1.0)?;
    if (r2 - r1).norm() < MIN_ENDPOINT_SEPARATION {
        return Err(Error::DegenerateProjection);
    }
    Ok((r1, r2))
}

/// Unsigned distance between `p` and the infinite image line through two
/// distinct points.
pub fn point_to_image_line_distance(p: &Vector2<f64>, r1: &Vector2<f64>, r2: &Vector2<f64>) -> f64 {
    let dy = r2.y - r1.y;
    let dx = r2.x - r1.x;
    let num = dy * p.x - dx * p.y + r2.x * r1.y - r2.y * r1.x;
    num.abs() / dx.hypot(dy)
}

/// Perpendicular image distance from `p` to the projection of `line`
/// translated by `xt`.
pub fn point_to_ruling_distance(p: &Vector2<f64>, line: &LineState, xt: &Vector3<f64>) -> Result<f64> {
    let (r1, r2) = ruling_endpoints_in_image(line, xt)?;
    Ok(point_to_image_line_distance(p, &r1, &r2))
}
