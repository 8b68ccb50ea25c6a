//! Ruling reprojection residuals and their total-derivative Jacobian.
//!
//! Each observation contributes the 2-vector `p - p̂(t, α)` where `α` comes
//! from the closed-form inner solve, so the residual is a function of the
//! outer parameters alone. The Jacobian carries the `∂α/∂θ` terms through.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x6, Matrix6, Vector2, Vector3, Vector6};

use super::alpha::{alpha_system, displacement, MIN_CONDITIONING};
use super::params::{LineParams, SharedMotionParams, SurfaceSetParams, LINE_BLOCK};
use crate::error::{Error, Result};
use crate::geometry::{Observation, MIN_DEPTH};
use crate::imu::GammaTable;

/// Residual assigned to observations that cannot be evaluated.
pub const DEFAULT_PENALTY: f64 = 10.0;

/// How a single observation was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsStatus {
    Ok,
    DegenerateAlpha,
    NonPositiveDepth,
}

/// Stacked residuals of a window, two rows per observation in line order.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub values: DVector<f64>,
    pub status: Vec<ObsStatus>,
}

impl ResidualVector {
    /// Sum of squared residuals.
    pub fn loss(&self) -> f64 {
        self.values.norm_squared()
    }

    pub fn flagged(&self) -> usize {
        self.status.iter().filter(|s| **s != ObsStatus::Ok).count()
    }
}

/// An observation with its window-relative time and Γ looked up.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PreparedObs {
    pub line: usize,
    pub p: Vector2<f64>,
    pub tau: f64,
    pub gamma: Vector3<f64>,
}

pub(crate) fn prepare(obs_by_line: &[Vec<Observation>], gamma: &GammaTable) -> Result<Vec<PreparedObs>> {
    let mut out = Vec::with_capacity(obs_by_line.iter().map(Vec::len).sum());
    for (line, list) in obs_by_line.iter().enumerate() {
        for o in list {
            out.push(PreparedObs {
                line,
                p: o.p,
                tau: o.t - gamma.t0(),
                gamma: gamma.at(o.t)?,
            });
        }
    }
    Ok(out)
}

pub(crate) struct LocalEval {
    pub residual: Vector2<f64>,
    pub status: ObsStatus,
    /// Columns `[a, c, d.x, d.y, e.x, e.y]`.
    pub jac_line: Matrix2x6<f64>,
    /// Columns `[b, f.x, f.y, g.x, g.y, g.z]`.
    pub jac_shared: Matrix2x6<f64>,
}

fn penalized(status: ObsStatus, penalty: f64) -> LocalEval {
    LocalEval {
        residual: Vector2::new(penalty, 0.0),
        status,
        jac_line: Matrix2x6::zeros(),
        jac_shared: Matrix2x6::zeros(),
    }
}

/// Residual of one observation and, when `with_jacobian`, its derivatives.
pub(crate) fn evaluate_obs(
    line: &LineParams,
    shared: &SharedMotionParams,
    obs: &PreparedObs,
    penalty: f64,
    with_jacobian: bool,
) -> LocalEval {
    let p = obs.p;
    let tau = obs.tau;
    let x = displacement(shared, tau, &obs.gamma);
    let (pm, phi, s) = alpha_system(line, &p, &x);
    if !(s > MIN_CONDITIONING) {
        return penalized(ObsStatus::DegenerateAlpha, penalty);
    }
    let alpha = pm.dot(&phi) / s;
    let u = line.e + x.xy();
    let w = line.a + x.z;
    let depth = w + alpha * line.c;
    // Points behind the camera keep their ordinary residual so the loss stays
    // continuous; they are only counted. The projection itself is undefined
    // at zero depth.
    if !(depth.abs() > MIN_DEPTH) {
        return penalized(ObsStatus::NonPositiveDepth, penalty);
    }
    let status = if depth > MIN_DEPTH { ObsStatus::Ok } else { ObsStatus::NonPositiveDepth };
    let p_hat = (line.d * alpha + u) / depth;
    let residual = p - p_hat;
    if !with_jacobian {
        return LocalEval {
            residual,
            status,
            jac_line: Matrix2x6::zeros(),
            jac_shared: Matrix2x6::zeros(),
        };
    }

    let inv_d = 1.0 / depth;
    // ∂p̂/∂α
    let k = (line.d - p_hat * line.c) * inv_d;
    let pp = pm.dot(&p);
    let dalpha_du = pm / s;
    let dalpha_dw = -pp / s;
    let dalpha_dc = (p.dot(&phi) - 2.0 * alpha * pp) / s;
    let dalpha_dd = (pm * (2.0 * alpha) - phi) / s;

    let dphat_du: Matrix2<f64> = Matrix2::identity() * inv_d + k * dalpha_du.transpose();
    let dphat_dw: Vector2<f64> = -p_hat * inv_d + k * dalpha_dw;
    let dphat_dc: Vector2<f64> = -p_hat * (alpha * inv_d) + k * dalpha_dc;
    let dphat_dd: Matrix2<f64> = Matrix2::identity() * (alpha * inv_d) + k * dalpha_dd.transpose();

    let mut jac_line = Matrix2x6::zeros();
    jac_line.set_column(0, &-dphat_dw);
    jac_line.set_column(1, &-dphat_dc);
    jac_line.fixed_view_mut::<2, 2>(0, 2).copy_from(&-dphat_dd);
    jac_line.fixed_view_mut::<2, 2>(0, 4).copy_from(&-dphat_du);

    let half_tau2 = 0.5 * tau * tau;
    let mut jac_shared = Matrix2x6::zeros();
    jac_shared.set_column(0, &(-dphat_dw * tau));
    jac_shared.fixed_view_mut::<2, 2>(0, 1).copy_from(&(-dphat_du * tau));
    jac_shared.fixed_view_mut::<2, 2>(0, 3).copy_from(&(-dphat_du * half_tau2));
    jac_shared.set_column(5, &(-dphat_dw * half_tau2));

    LocalEval {
        residual,
        status,
        jac_line,
        jac_shared,
    }
}

fn check_lines(params: &SurfaceSetParams, obs_by_line: &[Vec<Observation>]) -> Result<()> {
    if obs_by_line.len() != params.num_lines() {
        return Err(Error::InvalidInput(format!(
            "{} observation lists for {} lines",
            obs_by_line.len(),
            params.num_lines()
        )));
    }
    Ok(())
}

/// Residual vector of the ruling reprojection loss.
///
/// Observations with a degenerate α solve, or whose point lands on the
/// camera plane, contribute `(penalty, 0)`. Points behind the camera keep
/// their residual. Both kinds are flagged.
pub fn residuals(
    params: &SurfaceSetParams,
    obs_by_line: &[Vec<Observation>],
    gamma: &GammaTable,
    penalty: f64,
) -> Result<ResidualVector> {
    check_lines(params, obs_by_line)?;
    let prepared = prepare(obs_by_line, gamma)?;
    let mut values = DVector::zeros(2 * prepared.len());
    let mut status = Vec::with_capacity(prepared.len());
    for (i, o) in prepared.iter().enumerate() {
        let ev = evaluate_obs(&params.lines[o.line], &params.shared, o, penalty, false);
        values[2 * i] = ev.residual.x;
        values[2 * i + 1] = ev.residual.y;
        status.push(ev.status);
    }
    Ok(ResidualVector { values, status })
}

/// Dense Jacobian of [`residuals`] with respect to the flat parameter vector.
pub fn loss_jacobian(
    params: &SurfaceSetParams,
    obs_by_line: &[Vec<Observation>],
    gamma: &GammaTable,
    penalty: f64,
) -> Result<DMatrix<f64>> {
    check_lines(params, obs_by_line)?;
    let prepared = prepare(obs_by_line, gamma)?;
    let shared_col = LINE_BLOCK * params.num_lines();
    let mut jac = DMatrix::zeros(2 * prepared.len(), params.num_params());
    for (i, o) in prepared.iter().enumerate() {
        let ev = evaluate_obs(&params.lines[o.line], &params.shared, o, penalty, true);
        jac.fixed_view_mut::<2, 6>(2 * i, LINE_BLOCK * o.line).copy_from(&ev.jac_line);
        jac.fixed_view_mut::<2, 6>(2 * i, shared_col).copy_from(&ev.jac_shared);
    }
    Ok(jac)
}

/// Gauss-Newton normal equations accumulated block-wise.
pub(crate) struct NormalEquations {
    pub hessian: DMatrix<f64>,
    pub gradient: DVector<f64>,
    pub cost: f64,
    pub degenerate: usize,
    pub behind: usize,
}

pub(crate) fn normal_equations(params: &SurfaceSetParams, prepared: &[PreparedObs], penalty: f64) -> NormalEquations {
    let m = params.num_lines();
    let mut h_ll = vec![Matrix6::<f64>::zeros(); m];
    let mut h_ls = vec![Matrix6::<f64>::zeros(); m];
    let mut g_l = vec![Vector6::<f64>::zeros(); m];
    let mut h_ss = Matrix6::<f64>::zeros();
    let mut g_s = Vector6::<f64>::zeros();
    let (mut cost, mut degenerate, mut behind) = (0.0, 0, 0);
    for o in prepared {
        let ev = evaluate_obs(&params.lines[o.line], &params.shared, o, penalty, true);
        cost += ev.residual.norm_squared();
        match ev.status {
            ObsStatus::Ok => {}
            ObsStatus::DegenerateAlpha => {
                degenerate += 1;
                continue;
            }
            ObsStatus::NonPositiveDepth => behind += 1,
        }
        let jl_t = ev.jac_line.transpose();
        h_ll[o.line] += jl_t * ev.jac_line;
        h_ls[o.line] += jl_t * ev.jac_shared;
        g_l[o.line] += jl_t * ev.residual;
        let js_t = ev.jac_shared.transpose();
        h_ss += js_t * ev.jac_shared;
        g_s += js_t * ev.residual;
    }
    let n = params.num_params();
    let s = LINE_BLOCK * m;
    let mut hessian = DMatrix::zeros(n, n);
    let mut gradient = DVector::zeros(n);
    for l in 0..m {
        let o = LINE_BLOCK * l;
        hessian.fixed_view_mut::<6, 6>(o, o).copy_from(&h_ll[l]);
        hessian.fixed_view_mut::<6, 6>(o, s).copy_from(&h_ls[l]);
        hessian.fixed_view_mut::<6, 6>(s, o).copy_from(&h_ls[l].transpose());
        gradient.fixed_rows_mut::<6>(o).copy_from(&g_l[l]);
    }
    hessian.fixed_view_mut::<6, 6>(s, s).copy_from(&h_ss);
    gradient.fixed_rows_mut::<6>(s).copy_from(&g_s);
    NormalEquations {
        hessian,
        gradient,
        cost,
        degenerate,
        behind,
    }
}

/// Loss and number of behind-camera observations.
pub(crate) fn cost_only(params: &SurfaceSetParams, prepared: &[PreparedObs], penalty: f64) -> (f64, usize) {
    let (mut cost, mut behind) = (0.0, 0);
    for o in prepared {
        let ev = evaluate_obs(&params.lines[o.line], &params.shared, o, penalty, false);
        cost += ev.residual.norm_squared();
        behind += usize::from(ev.status == ObsStatus::NonPositiveDepth);
    }
    (cost, behind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{canonicalize_line, project_ruling_point};

    fn two_lines() -> SurfaceSetParams {
        let l1 = canonicalize_line(&Vector3::new(0.0, 0.3, 2.0), &Vector3::new(1.0, 0.0, 0.1)).unwrap();
        let l2 = canonicalize_line(&Vector3::new(-0.2, 0.0, 2.5), &Vector3::new(0.1, 1.0, -0.2)).unwrap();
        SurfaceSetParams::from_lines(&[l1, l2], SharedMotionParams::new(Vector3::new(0.1, 0.0, -0.05), Vector3::new(0.0, 0.3, 0.0)))
    }

    fn sample(params: &SurfaceSetParams, gamma: &GammaTable, times: &[f64], alphas: &[f64]) -> Vec<Vec<Observation>> {
        let sig = params.translation_signal(gamma);
        params
            .lines
            .iter()
            .map(|l| {
                let line = l.raw_line();
                times
                    .iter()
                    .flat_map(|&t| {
                        let x = sig.at(t).unwrap();
                        alphas.iter().map(move |&a| Observation { t, p: project_ruling_point(&line, &x, a).unwrap() })
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn exact_samples_have_zero_residual() {
        let params = two_lines();
        let gamma = GammaTable::zeros(0.0, 1.0);
        let obs = sample(&params, &gamma, &[0.0, 0.3, 0.9], &[-0.4, 0.1, 0.5]);
        let r = residuals(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert_eq!(r.values.len(), 36);
        assert!(r.values.amax() < 1e-9);
        assert_eq!(r.flagged(), 0);
    }

    #[test]
    fn perpendicular_offset_shows_up_in_residual() {
        // horizontal ruling: a perpendicular image offset is not absorbed by α
        let line = canonicalize_line(&Vector3::new(0.0, 0.2, 2.0), &Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let params = SurfaceSetParams::from_lines(&[line], SharedMotionParams::default());
        let gamma = GammaTable::zeros(0.0, 1.0);
        let p = project_ruling_point(&line, &Vector3::zeros(), 0.3).unwrap();
        let obs = vec![vec![Observation { t: 0.0, p: p + Vector2::new(0.0, 0.01) }]];
        let r = residuals(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert!((r.values[0] - 0.0).abs() < 1e-6 && (r.values[1] - 0.01).abs() < 1e-6, "{:?}", r.values);
    }

    #[test]
    fn empty_input_gives_empty_outputs() {
        let params = two_lines();
        let gamma = GammaTable::zeros(0.0, 1.0);
        let obs = vec![vec![], vec![]];
        let r = residuals(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert_eq!(r.values.len(), 0);
        assert_eq!(r.loss(), 0.0);
        let j = loss_jacobian(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert_eq!(j.shape(), (0, 18));
        assert!(residuals(&params, &[vec![]], &gamma, DEFAULT_PENALTY).is_err());
    }

    #[test]
    fn gravity_columns_vanish_at_window_origin() {
        let params = two_lines();
        let gamma = GammaTable::zeros(0.0, 1.0);
        let obs = sample(&params, &gamma, &[0.0], &[-0.3, 0.2]);
        let j = loss_jacobian(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        for col in 15..18 {
            assert!(j.column(col).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn degenerate_observations_get_the_penalty() {
        let line = canonicalize_line(&Vector3::new(0.0, 0.0, 2.0), &Vector3::new(0.0, 0.6, 0.8)).unwrap();
        let params = SurfaceSetParams::from_lines(&[line], SharedMotionParams::default());
        let gamma = GammaTable::zeros(0.0, 1.0);
        let vp = Vector2::new(line.v0.x / line.v0.z, line.v0.y / line.v0.z);
        let obs = vec![vec![Observation { t: 0.0, p: vp }]];
        let r = residuals(&params, &obs, &gamma, 7.0).unwrap();
        assert_eq!(r.status, vec![ObsStatus::DegenerateAlpha]);
        assert_eq!(r.loss(), 49.0);
    }

    #[test]
    fn points_behind_the_camera_are_flagged_but_not_penalized() {
        let line = canonicalize_line(&Vector3::new(0.0, 0.0, 2.0), &Vector3::new(0.0, 0.6, 0.8)).unwrap();
        let params = SurfaceSetParams::from_lines(&[line], SharedMotionParams::default());
        let gamma = GammaTable::zeros(0.0, 1.0);
        // α = -5 on this line projects to (0, 1.5) from depth -2
        let obs = vec![vec![Observation { t: 0.0, p: Vector2::new(0.0, 1.5) }]];
        let r = residuals(&params, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert_eq!(r.status, vec![ObsStatus::NonPositiveDepth]);
        assert!(r.loss() < 1e-24);
    }

    #[test]
    fn blockwise_normal_equations_match_dense_jacobian() {
        let params = two_lines();
        let gamma = GammaTable::zeros(0.0, 1.0);
        let mut obs = sample(&params, &gamma, &[0.0, 0.4, 0.8], &[-0.2, 0.3]);
        for (i, o) in obs.iter_mut().flatten().enumerate() {
            o.p.x += 0.003 * (i as f64).sin();
        }
        let mut perturbed = params.clone();
        perturbed.shared.b += 0.02;
        perturbed.lines[1].a += 0.1;
        let prepared = prepare(&obs, &gamma).unwrap();
        let ne = normal_equations(&perturbed, &prepared, DEFAULT_PENALTY);
        let j = loss_jacobian(&perturbed, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        let r = residuals(&perturbed, &obs, &gamma, DEFAULT_PENALTY).unwrap();
        assert!((ne.hessian - j.transpose() * &j).amax() < 1e-10);
        assert!((ne.gradient - j.transpose() * &r.values).amax() < 1e-12);
        assert!((ne.cost - r.loss()).abs() < 1e-15);
    }
}
