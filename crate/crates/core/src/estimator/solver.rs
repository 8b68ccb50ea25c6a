//! Damped least squares over a window, with retraction onto the line
//! constraints after each step and random restarts when the fit is poor.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{LineParams, SurfaceSetParams, LINE_BLOCK};
use super::residual::{cost_only, normal_equations, prepare, PreparedObs, DEFAULT_PENALTY};
use crate::error::{Error, Result};
use crate::geometry::{canonicalize_line, Observation};
use crate::imu::GammaTable;

/// Two rulings whose unit directions have a cross product below this are
/// treated as parallel.
pub const PARALLEL_EPS: f64 = 1e-3;

/// Project every line block back onto `‖(d, c)‖ = 1`, `(e, a)·(d, c) = 0`
/// with the canonical sign. Shared parameters pass through.
pub fn retract(params: &SurfaceSetParams) -> Result<SurfaceSetParams> {
    let lines = params
        .lines
        .iter()
        .map(|l| {
            let raw = l.raw_line();
            canonicalize_line(&raw.x0, &raw.v0).map(|c| LineParams::from_line_state(&c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceSetParams {
        lines,
        shared: params.shared,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Mean squared residual per observation above which the solve restarts.
    pub restart_threshold: f64,
    pub max_restarts: usize,
    /// Perturbation σ on `a`, `c`, `d`, `e`.
    pub sigma_line: f64,
    /// Perturbation σ on `b`, `f`.
    pub sigma_velocity: f64,
    /// Perturbation σ on `g`.
    pub sigma_gravity: f64,
    pub seed: u64,
    /// Residual assigned to degenerate or behind-camera observations.
    pub penalty: f64,
    pub gradient_tol: f64,
    pub step_tol: f64,
    /// Stop once an accepted step improves the loss by less than this
    /// fraction.
    pub cost_tol: f64,
    pub initial_lambda: f64,
    /// Fraction of behind-camera observations beyond which a solution is
    /// infeasible.
    pub infeasible_fraction: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            restart_threshold: 0.01,
            max_restarts: 10,
            sigma_line: 0.05,
            sigma_velocity: 0.02,
            sigma_gravity: 0.1,
            seed: 0,
            penalty: DEFAULT_PENALTY,
            gradient_tol: 1e-8,
            step_tol: 1e-10,
            cost_tol: 1e-12,
            initial_lambda: 1e-3,
            infeasible_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// Damping grew without bound; no descent direction was found.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Iterations of the attempt that produced the returned solution.
    pub iterations: usize,
    /// Iterations summed over all attempts.
    pub total_iterations: usize,
    pub restarts: usize,
    pub termination: Termination,
    pub final_loss: f64,
    pub mean_loss: f64,
    pub observations: usize,
    /// Best loss after each attempt; non-increasing.
    pub best_loss_history: Vec<f64>,
    pub degenerate: usize,
    pub depth_violations: usize,
    pub infeasible: bool,
    /// Set when the lines leave a translation direction unconstrained.
    pub unbounded_direction: bool,
    /// Largest line-constraint violation seen after any accepted step.
    pub max_constraint_violation: f64,
    pub accepted_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSolution {
    pub params: SurfaceSetParams,
    pub loss: f64,
    pub diagnostics: Diagnostics,
}

/// True when fewer than two non-parallel lines constrain the solution.
pub fn has_unbounded_direction(params: &SurfaceSetParams) -> bool {
    let dirs: Vec<Vector3<f64>> = params
        .lines
        .iter()
        .filter_map(|l| l.raw_line().v0.try_normalize(1e-12))
        .collect();
    for i in 0..dirs.len() {
        for j in i + 1..dirs.len() {
            if dirs[i].cross(&dirs[j]).norm() >= PARALLEL_EPS {
                return false;
            }
        }
    }
    true
}

struct Attempt {
    params: SurfaceSetParams,
    cost: f64,
    iterations: usize,
    termination: Termination,
    max_violation: f64,
    accepted: usize,
}

fn max_violation(params: &SurfaceSetParams) -> f64 {
    params
        .lines
        .iter()
        .map(|l| {
            let (n, o) = l.constraint_violation();
            n.max(o)
        })
        .fold(0.0, f64::max)
}

fn apply_step(params: &SurfaceSetParams, delta: &DVector<f64>) -> Option<SurfaceSetParams> {
    let theta = params.to_flat() + delta;
    let candidate = SurfaceSetParams::from_flat(params.num_lines(), &theta).ok()?;
    let retracted = retract(&candidate).ok()?;
    retracted.shared.is_valid().then_some(retracted)
}

fn levenberg_marquardt(init: &SurfaceSetParams, prepared: &[PreparedObs], config: &SolverConfig) -> Attempt {
    let mut params = init.clone();
    let mut lambda = config.initial_lambda;
    let mut nu = 2.0;
    let mut ne = normal_equations(&params, prepared, config.penalty);
    let mut attempt = Attempt {
        params: params.clone(),
        cost: ne.cost,
        iterations: 0,
        termination: Termination::MaxIterations,
        max_violation: max_violation(&params),
        accepted: 0,
    };
    let n = params.num_params();
    let behind_budget = (config.infeasible_fraction * prepared.len() as f64).floor() as usize;
    for iter in 0..config.max_iters {
        attempt.iterations = iter + 1;
        if ne.gradient.amax() < config.gradient_tol {
            attempt.termination = Termination::Gradient;
            attempt.iterations = iter;
            break;
        }
        let diag_max = ne.hessian.diagonal().amax().max(1e-300);
        let scale = DVector::from_fn(n, |i, _| ne.hessian[(i, i)].max(1e-9 * diag_max));
        let mut accepted = false;
        let mut small_step = false;
        // Inner loop: raise damping until a step lowers the loss.
        while lambda < 1e16 {
            let mut damped = ne.hessian.clone();
            for i in 0..n {
                damped[(i, i)] += lambda * scale[i];
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= nu;
                nu *= 2.0;
                continue;
            };
            let delta = chol.solve(&(-&ne.gradient));
            let theta_norm = params.to_flat().norm();
            if delta.norm() < config.step_tol * (theta_norm + config.step_tol) {
                small_step = true;
                break;
            }
            let predicted = -delta.dot(&ne.gradient) + lambda * delta.component_mul(&scale).dot(&delta);
            let candidate = apply_step(&params, &delta);
            let new_cost = match candidate.as_ref().map(|c| cost_only(c, prepared, config.penalty)) {
                // a step may not push more points behind the camera than the
                // feasibility budget allows
                Some((cost, behind)) if behind <= behind_budget.max(ne.behind) => cost,
                _ => f64::INFINITY,
            };
            let rho = if predicted > 0.0 { (ne.cost - new_cost) / predicted } else { -1.0 };
            if new_cost.is_finite() && new_cost < ne.cost && rho > 0.0 {
                let old_cost = ne.cost;
                params = candidate.expect("finite cost implies a candidate");
                ne = normal_equations(&params, prepared, config.penalty);
                lambda *= (1.0f64 / 3.0).max(1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                attempt.accepted += 1;
                attempt.max_violation = attempt.max_violation.max(max_violation(&params));
                accepted = true;
                if old_cost - ne.cost <= config.cost_tol * old_cost {
                    attempt.termination = Termination::Cost;
                }
                break;
            }
            lambda *= nu;
            nu *= 2.0;
        }
        if small_step {
            attempt.termination = Termination::Step;
            break;
        }
        if !accepted {
            attempt.termination = Termination::Stalled;
            break;
        }
        if attempt.termination == Termination::Cost {
            break;
        }
    }
    attempt.params = params;
    attempt.cost = ne.cost;
    attempt
}

fn perturb(params: &SurfaceSetParams, config: &SolverConfig, rng: &mut ChaCha8Rng) -> SurfaceSetParams {
    let noise = |sigma: f64, rng: &mut ChaCha8Rng| -> f64 {
        if sigma > 0.0 {
            Normal::new(0.0, sigma).map(|d| d.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        }
    };
    for _ in 0..16 {
        let mut theta = params.to_flat();
        let shared = LINE_BLOCK * params.num_lines();
        for i in 0..theta.len() {
            let sigma = match i.checked_sub(shared) {
                None => config.sigma_line,
                Some(0..=2) => config.sigma_velocity,
                Some(_) => config.sigma_gravity,
            };
            theta[i] += noise(sigma, rng);
        }
        if let Some(p) = SurfaceSetParams::from_flat(params.num_lines(), &theta)
            .ok()
            .and_then(|p| retract(&p).ok())
        {
            return p;
        }
    }
    params.clone()
}

/// Minimize the ruling reprojection loss over one window.
///
/// Infeasibility is reported through [`Diagnostics::infeasible`] rather than
/// as an error, so the caller decides how to proceed.
pub fn solve_window(
    init: &SurfaceSetParams,
    obs_by_line: &[Vec<Observation>],
    gamma: &GammaTable,
    config: &SolverConfig,
) -> Result<WindowSolution> {
    if obs_by_line.len() != init.num_lines() || init.lines.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} observation lists for {} lines",
            obs_by_line.len(),
            init.num_lines()
        )));
    }
    if let Some(line) = obs_by_line.iter().position(Vec::is_empty) {
        return Err(Error::NoObservations { line });
    }
    let prepared = prepare(obs_by_line, gamma)?;
    let n_obs = prepared.len();
    let start = retract(init)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let feasibility = |p: &SurfaceSetParams| {
        let ne = normal_equations(p, &prepared, config.penalty);
        let infeasible = ne.behind as f64 > config.infeasible_fraction * n_obs as f64;
        (ne.degenerate, ne.behind, infeasible)
    };

    let mut best = levenberg_marquardt(&start, &prepared, config);
    let mut total_iterations = best.iterations;
    let mut max_violation = best.max_violation;
    let mut accepted_steps = best.accepted;
    let mut best_loss_history = vec![best.cost];
    let mut best_feasibility = feasibility(&best.params);
    let mut restarts = 0;
    while restarts < config.max_restarts
        && (best.cost / n_obs as f64 > config.restart_threshold || best_feasibility.2)
    {
        restarts += 1;
        let seed = perturb(&best.params, config, &mut rng);
        let attempt = levenberg_marquardt(&seed, &prepared, config);
        total_iterations += attempt.iterations;
        max_violation = max_violation.max(attempt.max_violation);
        accepted_steps += attempt.accepted;
        let attempt_feasibility = feasibility(&attempt.params);
        // A feasible result beats an infeasible one regardless of loss.
        let better = match (best_feasibility.2, attempt_feasibility.2) {
            (true, false) => true,
            (false, true) => false,
            _ => attempt.cost < best.cost,
        };
        if better {
            best = attempt;
            best_feasibility = attempt_feasibility;
        }
        best_loss_history.push(best.cost);
    }
    // Make the history monotone even when feasibility overrode a lower loss.
    for i in 1..best_loss_history.len() {
        best_loss_history[i] = best_loss_history[i].min(best_loss_history[i - 1]);
    }

    let (degenerate, depth_violations, infeasible) = best_feasibility;
    let diagnostics = Diagnostics {
        iterations: best.iterations,
        total_iterations,
        restarts,
        termination: best.termination,
        final_loss: best.cost,
        mean_loss: best.cost / n_obs as f64,
        observations: n_obs,
        best_loss_history,
        degenerate,
        depth_violations,
        infeasible,
        unbounded_direction: has_unbounded_direction(&best.params),
        max_constraint_violation: max_violation,
        accepted_steps,
    };
    Ok(WindowSolution {
        loss: best.cost,
        params: best.params,
        diagnostics,
    })
}

/// Numerical rank of a matrix from its singular values.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.amax();
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::SharedMotionParams;
    use nalgebra::Vector2;

    #[test]
    fn retract_examples() {
        let p = SurfaceSetParams {
            lines: vec![LineParams { a: 1.0, c: 2.0, d: Vector2::zeros(), e: Vector2::new(1.0, 1.0) }],
            shared: SharedMotionParams { b: 0.3, f: Vector2::new(1.0, 2.0), g: Vector3::new(0.0, -9.8, 0.0) },
        };
        let r = retract(&p).unwrap();
        let l = r.lines[0];
        assert_eq!((l.c, l.d), (1.0, Vector2::zeros()));
        assert_eq!((l.a, l.e), (0.0, Vector2::new(1.0, 1.0)));
        assert_eq!(r.shared, p.shared);
        let again = retract(&r).unwrap();
        assert!((again.to_flat() - r.to_flat()).amax() <= 1e-15);

        let zero = SurfaceSetParams {
            lines: vec![LineParams { a: 1.0, c: 0.0, d: Vector2::zeros(), e: Vector2::zeros() }],
            shared: SharedMotionParams::default(),
        };
        assert!(matches!(retract(&zero), Err(Error::ZeroDirection)));
    }

    #[test]
    fn parallel_lines_leave_a_direction_unbounded() {
        let l1 = canonicalize_line(&Vector3::new(0.0, 0.0, 2.0), &Vector3::x()).unwrap();
        let l2 = canonicalize_line(&Vector3::new(0.0, 1.0, 2.0), &-Vector3::x()).unwrap();
        let l3 = canonicalize_line(&Vector3::new(0.0, 1.0, 3.0), &Vector3::y()).unwrap();
        let s = SharedMotionParams::default();
        assert!(has_unbounded_direction(&SurfaceSetParams::from_lines(&[l1], s)));
        assert!(has_unbounded_direction(&SurfaceSetParams::from_lines(&[l1, l2], s)));
        assert!(!has_unbounded_direction(&SurfaceSetParams::from_lines(&[l1, l2, l3], s)));
    }

    #[test]
    fn missing_observations_are_rejected() {
        let l1 = canonicalize_line(&Vector3::new(0.0, 0.0, 2.0), &Vector3::x()).unwrap();
        let p = SurfaceSetParams::from_lines(&[l1], SharedMotionParams::default());
        let gamma = GammaTable::zeros(0.0, 1.0);
        let err = solve_window(&p, &[vec![]], &gamma, &SolverConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NoObservations { line: 0 }));
    }

    #[test]
    fn rank_of_known_matrices() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(numerical_rank(&m, 1e-10), 2);
        assert_eq!(numerical_rank(&DMatrix::identity(4, 4), 1e-10), 4);
    }
}
