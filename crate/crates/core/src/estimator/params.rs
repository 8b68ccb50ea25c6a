use nalgebra::{DVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{canonicalize_line, LineState, RulingParams};
use crate::imu::GammaTable;

/// Number of free parameters per line block: `[a, c, d.x, d.y, e.x, e.y]`.
pub const LINE_BLOCK: usize = 6;
/// Number of shared parameters: `[b, f.x, f.y, g.x, g.y, g.z]`.
pub const SHARED_BLOCK: usize = 6;
/// Sanity bound on the gravitational bias magnitude (m/s²).
pub const MAX_GRAVITY: f64 = 20.0;

/// Motion terms common to every line in a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharedMotionParams {
    /// z-velocity plus lumped bias (m/s).
    pub b: f64,
    /// xy-velocity plus lumped bias (m/s).
    pub f: Vector2<f64>,
    /// Gravitational bias (m/s²).
    pub g: Vector3<f64>,
}

impl Default for SharedMotionParams {
    fn default() -> Self {
        Self {
            b: 0.0,
            f: Vector2::zeros(),
            g: Vector3::zeros(),
        }
    }
}

impl SharedMotionParams {
    pub fn new(velocity: Vector3<f64>, g: Vector3<f64>) -> Self {
        Self {
            b: velocity.z,
            f: velocity.xy(),
            g,
        }
    }

    pub fn velocity(&self) -> Vector3<f64> {
        Vector3::new(self.f.x, self.f.y, self.b)
    }

    pub fn is_valid(&self) -> bool {
        let finite = self.b.is_finite()
            && self.f.iter().all(|v| v.is_finite())
            && self.g.iter().all(|v| v.is_finite());
        finite && self.g.norm() <= MAX_GRAVITY
    }
}

/// Per-line block of the lumped parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineParams {
    pub a: f64,
    pub c: f64,
    pub d: Vector2<f64>,
    pub e: Vector2<f64>,
}

impl LineParams {
    pub fn from_line_state(line: &LineState) -> Self {
        Self {
            a: line.x0.z,
            c: line.v0.z,
            d: line.v0.xy(),
            e: line.x0.xy(),
        }
    }

    /// The encoded line, without canonicalization.
    pub fn raw_line(&self) -> LineState {
        LineState {
            x0: Vector3::new(self.e.x, self.e.y, self.a),
            v0: Vector3::new(self.d.x, self.d.y, self.c),
        }
    }

    pub fn to_line_state(&self) -> Result<LineState> {
        let raw = self.raw_line();
        canonicalize_line(&raw.x0, &raw.v0)
    }

    /// `|‖(d, c)‖ - 1|` and `|(e, a)·(d, c)|`.
    pub fn constraint_violation(&self) -> (f64, f64) {
        let raw = self.raw_line();
        ((raw.v0.norm() - 1.0).abs(), raw.x0.dot(&raw.v0).abs())
    }
}

/// Parameters of a set of ruled surfaces sharing one camera motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSetParams {
    pub lines: Vec<LineParams>,
    pub shared: SharedMotionParams,
}

impl SurfaceSetParams {
    pub fn from_lines(lines: &[LineState], shared: SharedMotionParams) -> Self {
        Self {
            lines: lines.iter().map(LineParams::from_line_state).collect(),
            shared,
        }
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    /// Length of the flat parameter vector, `6M + 6`.
    pub fn num_params(&self) -> usize {
        LINE_BLOCK * self.lines.len() + SHARED_BLOCK
    }

    /// Degrees of freedom left once each line is canonicalized, `4M + 6`.
    pub fn effective_dof(&self) -> usize {
        4 * self.lines.len() + SHARED_BLOCK
    }

    pub fn ruling(&self, line: usize) -> RulingParams {
        let l = &self.lines[line];
        RulingParams {
            a: l.a,
            b: self.shared.b,
            c: l.c,
            d: l.d,
            e: l.e,
            f: self.shared.f,
            g: self.shared.g,
        }
    }

    pub fn line_states(&self) -> Result<Vec<LineState>> {
        self.lines.iter().map(LineParams::to_line_state).collect()
    }

    /// Flat layout: line blocks `[a, c, d.x, d.y, e.x, e.y]` in line order,
    /// then `[b, f.x, f.y, g.x, g.y, g.z]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.num_params());
        for (i, l) in self.lines.iter().enumerate() {
            let o = LINE_BLOCK * i;
            v[o] = l.a;
            v[o + 1] = l.c;
            v[o + 2] = l.d.x;
            v[o + 3] = l.d.y;
            v[o + 4] = l.e.x;
            v[o + 5] = l.e.y;
        }
        let o = LINE_BLOCK * self.lines.len();
        let s = &self.shared;
        for (k, val) in [s.b, s.f.x, s.f.y, s.g.x, s.g.y, s.g.z].into_iter().enumerate() {
            v[o + k] = val;
        }
        v
    }

    pub fn from_flat(num_lines: usize, v: &DVector<f64>) -> Result<Self> {
        if v.len() != LINE_BLOCK * num_lines + SHARED_BLOCK {
            return Err(Error::InvalidInput(format!(
                "flat parameter vector has length {}, expected {}",
                v.len(),
                LINE_BLOCK * num_lines + SHARED_BLOCK
            )));
        }
        let lines = (0..num_lines)
            .map(|i| {
                let o = LINE_BLOCK * i;
                LineParams {
                    a: v[o],
                    c: v[o + 1],
                    d: Vector2::new(v[o + 2], v[o + 3]),
                    e: Vector2::new(v[o + 4], v[o + 5]),
                }
            })
            .collect();
        let o = LINE_BLOCK * num_lines;
        Ok(Self {
            lines,
            shared: SharedMotionParams {
                b: v[o],
                f: Vector2::new(v[o + 1], v[o + 2]),
                g: Vector3::new(v[o + 3], v[o + 4], v[o + 5]),
            },
        })
    }

    pub fn translation_signal(&self, gamma: &GammaTable) -> TranslationSignal {
        TranslationSignal::new(&self.shared, gamma.clone())
    }
}

/// Displacement of the scene relative to the camera within a window:
/// `X(t) = τ·v + Γ(t) + ½τ²·g` with `τ = t - t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationSignal {
    pub velocity: Vector3<f64>,
    pub gravity: Vector3<f64>,
    pub gamma: GammaTable,
}

impl TranslationSignal {
    pub fn new(shared: &SharedMotionParams, gamma: GammaTable) -> Self {
        Self {
            velocity: shared.velocity(),
            gravity: shared.g,
            gamma,
        }
    }

    pub fn t0(&self) -> f64 {
        self.gamma.t0()
    }

    pub fn at(&self, t: f64) -> Result<Vector3<f64>> {
        let tau = t - self.gamma.t0();
        Ok(self.velocity * tau + self.gamma.at(t)? + self.gravity * (0.5 * tau * tau))
    }

    /// Time derivative of [`Self::at`].
    pub fn velocity_at(&self, t: f64) -> Result<Vector3<f64>> {
        let tau = t - self.gamma.t0();
        Ok(self.velocity + self.gamma.velocity_at(t)? + self.gravity * tau)
    }
}
