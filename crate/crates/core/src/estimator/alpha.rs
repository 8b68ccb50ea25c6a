//! Closed-form inner solve for the position `α` of an observation along its
//! ruling.
//!
//! Clearing the denominator of the projection gives two equations linear in
//! `α`, `P·α = Φ`, with
//!
//! ```text
//! P = p·c - d
//! Φ = e + X_xy(t) - p·(a + X_z(t))
//! ```
//!
//! whose least-squares solution is `α = PᵀΦ / PᵀP`.

use nalgebra::{Vector2, Vector3};

use super::params::{LineParams, SharedMotionParams, SurfaceSetParams};
use crate::error::{Error, Result};
use crate::geometry::Observation;
use crate::imu::GammaTable;

/// Below this `PᵀP` the observation does not pin down `α`.
pub const MIN_CONDITIONING: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSolve {
    pub alpha: f64,
    pub p_mat: Vector2<f64>,
    pub phi: Vector2<f64>,
    pub conditioning: f64,
}

/// Scene displacement `X(τ)` for the shared motion block.
#[inline]
pub(crate) fn displacement(shared: &SharedMotionParams, tau: f64, gamma: &Vector3<f64>) -> Vector3<f64> {
    Vector3::new(
        tau * shared.f.x + gamma.x + 0.5 * tau * tau * shared.g.x,
        tau * shared.f.y + gamma.y + 0.5 * tau * tau * shared.g.y,
        tau * shared.b + gamma.z + 0.5 * tau * tau * shared.g.z,
    )
}

/// `(P, Φ, PᵀP)` for an observation `p` given the window displacement `x`.
#[inline]
pub(crate) fn alpha_system(line: &LineParams, p: &Vector2<f64>, x: &Vector3<f64>) -> (Vector2<f64>, Vector2<f64>, f64) {
    let p_mat = p * line.c - line.d;
    let w = line.a + x.z;
    let phi = line.e + x.xy() - p * w;
    (p_mat, phi, p_mat.norm_squared())
}

pub fn solve_alpha(
    params: &SurfaceSetParams,
    line_index: usize,
    obs: &Observation,
    gamma: &GammaTable,
) -> Result<AlphaSolve> {
    let line = params.lines.get(line_index).ok_or_else(|| {
        Error::InvalidInput(format!("line index {line_index} out of range ({} lines)", params.lines.len()))
    })?;
    let tau = obs.t - gamma.t0();
    let x = displacement(&params.shared, tau, &gamma.at(obs.t)?);
    let (p_mat, phi, conditioning) = alpha_system(line, &obs.p, &x);
    if !(conditioning > MIN_CONDITIONING) {
        return Err(Error::DegenerateAlpha { conditioning });
    }
    Ok(AlphaSolve {
        alpha: p_mat.dot(&phi) / conditioning,
        p_mat,
        phi,
        conditioning,
    })
}

/// The algebraic objective minimized by the α solve, `‖P·α - Φ‖²`.
pub fn alpha_objective(params: &SurfaceSetParams, line_index: usize, obs: &Observation, gamma: &GammaTable, alpha: f64) -> Result<f64> {
    let line = &params.lines[line_index];
    let tau = obs.t - gamma.t0();
    let x = displacement(&params.shared, tau, &gamma.at(obs.t)?);
    let (p_mat, phi, _) = alpha_system(line, &obs.p, &x);
    Ok((p_mat * alpha - phi).norm_squared())
}
