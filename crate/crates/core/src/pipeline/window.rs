//! Window state, surface extrusion to new frames and window sliding.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::estimator::{retract, solve_window, SolverConfig, SurfaceSetParams, Termination, TranslationSignal};
use crate::geometry::{point_to_ruling_distance, LineState, Observation};
use crate::imu::{derotate_observations, derotate_point, integrate_gamma, integrate_gyro, GammaTable, ImuTrack, RotationTable};

/// Per-window solver and association bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostics {
    pub t_start: f64,
    pub t_end: f64,
    pub frames: usize,
    pub loss: f64,
    pub mean_loss: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub termination: Termination,
    /// Observations per line in the point set.
    pub points: Vec<usize>,
    /// Points of the newest frame added to a line.
    pub associated: usize,
    /// Points of the newest frame near more than one ruling.
    pub ambiguous: usize,
    /// Points of the newest frame near no ruling.
    pub unassociated: usize,
    /// Points lost to derotation behind the camera in the last solve.
    pub dropped: usize,
    pub depth_violations: usize,
    pub infeasible: bool,
    pub unbounded_direction: bool,
    /// Lines that gained no points for longer than the starvation limit.
    pub starving_lines: Vec<usize>,
    pub max_constraint_violation: f64,
}

impl Default for WindowDiagnostics {
    fn default() -> Self {
        Self {
            t_start: 0.0,
            t_end: 0.0,
            frames: 0,
            loss: 0.0,
            mean_loss: 0.0,
            iterations: 0,
            restarts: 0,
            termination: Termination::MaxIterations,
            points: Vec::new(),
            associated: 0,
            ambiguous: 0,
            unassociated: 0,
            dropped: 0,
            depth_violations: 0,
            infeasible: false,
            unbounded_direction: false,
            starving_lines: Vec::new(),
            max_constraint_violation: 0.0,
        }
    }
}

/// Current surface estimate over a window of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEstimate {
    /// Number of slides since the first window.
    pub index: usize,
    pub frame_times: Vec<f64>,
    pub params: SurfaceSetParams,
    /// Raw (camera-frame) observations per line.
    pub point_set: Vec<Vec<Observation>>,
    /// Orientations relative to the camera at the window start.
    pub rotation: RotationTable,
    /// Γ of the window with the sign of the scene displacement.
    pub gamma: GammaTable,
    pub diagnostics: WindowDiagnostics,
    /// Consecutive frames without new points, per line.
    pub starvation: Vec<usize>,
}

impl WindowEstimate {
    pub fn t_start(&self) -> f64 {
        self.frame_times[0]
    }

    pub fn t_end(&self) -> f64 {
        self.frame_times[self.frame_times.len() - 1]
    }

    /// The rotation center is the window start.
    pub fn rotation_center(&self) -> f64 {
        self.rotation.center()
    }

    pub fn translation_signal(&self) -> TranslationSignal {
        self.params.translation_signal(&self.gamma)
    }

    pub fn line_states(&self) -> Result<Vec<LineState>> {
        self.params.line_states()
    }

    /// Copy without the point set and with the rotation table resampled at
    /// the frame times, for long-term storage.
    pub fn snapshot(&self) -> Result<Self> {
        let rotations = self
            .frame_times
            .iter()
            .map(|&t| self.rotation.at(t))
            .collect::<Result<Vec<_>>>()?;
        let rotation = if self.frame_times.len() >= 2 {
            RotationTable::from_rotations(self.rotation_center(), self.frame_times.clone(), rotations)?
        } else {
            self.rotation.clone()
        };
        Ok(Self {
            point_set: vec![Vec::new(); self.point_set.len()],
            rotation,
            ..self.clone()
        })
    }
}

/// Rotation and Γ tables of a window starting at `frame_times[0]`.
pub fn window_tables(imu: &ImuTrack, frame_times: &[f64]) -> Result<(RotationTable, GammaTable)> {
    let t0 = frame_times[0];
    let rotation = integrate_gyro(imu, t0)?;
    // the scene moves opposite to the camera's own acceleration
    let gamma = integrate_gamma(imu, t0, frame_times, &rotation)?.negated();
    Ok((rotation, gamma))
}

struct Association {
    per_line: Vec<Vec<Observation>>,
    ambiguous: usize,
    unassociated: usize,
}

/// Assigns raw observations at time `t` to the ruling they lie within `tau`
/// of, dropping those near several rulings.
fn associate(
    params: &SurfaceSetParams,
    gamma: &GammaTable,
    rotation: &RotationTable,
    t: f64,
    observations: &[Observation],
    tau: f64,
) -> Result<Association> {
    let x = params.translation_signal(gamma).at(t)?;
    let q = rotation.at(t)?;
    let lines: Vec<LineState> = params.lines.iter().map(|l| l.raw_line()).collect();
    let mut out = Association {
        per_line: vec![Vec::new(); lines.len()],
        ambiguous: 0,
        unassociated: 0,
    };
    for o in observations {
        let Some(p) = derotate_point(&o.p, &q) else {
            out.unassociated += 1;
            continue;
        };
        let mut hit = None;
        let mut count = 0;
        for (i, line) in lines.iter().enumerate() {
            if point_to_ruling_distance(&p, line, &x).is_ok_and(|d| d < tau) {
                hit = Some(i);
                count += 1;
            }
        }
        match (count, hit) {
            (1, Some(i)) => out.per_line[i].push(Observation { t: o.t, p: o.p }),
            (0, _) => out.unassociated += 1,
            _ => out.ambiguous += 1,
        }
    }
    Ok(out)
}

fn check_gap(est: &WindowEstimate, t: f64, config: &PipelineConfig) -> Result<()> {
    let gap = t - est.t_end();
    if !(gap > 0.0) || gap >= config.max_frame_gap {
        return Err(Error::FrameGap {
            t,
            gap,
            bound: config.max_frame_gap,
        });
    }
    Ok(())
}

/// Solves the window in place. Lines whose point sets are empty keep their
/// parameters and are left out of the solve.
fn resolve(est: &mut WindowEstimate, config: &PipelineConfig) -> Result<()> {
    let active: Vec<usize> = (0..est.point_set.len()).filter(|&l| !est.point_set[l].is_empty()).collect();
    if active.is_empty() {
        return Err(Error::NoObservations { line: 0 });
    }
    let mut dropped = 0;
    let mut obs_by_line = Vec::with_capacity(active.len());
    for &l in &active {
        let (obs, d) = derotate_observations(&est.point_set[l], &est.rotation)?;
        dropped += d;
        obs_by_line.push(obs);
    }
    if let Some(i) = obs_by_line.iter().position(Vec::is_empty) {
        return Err(Error::NoObservations { line: active[i] });
    }
    let init = SurfaceSetParams {
        lines: active.iter().map(|&l| est.params.lines[l]).collect(),
        shared: est.params.shared,
    };
    let solver = SolverConfig {
        seed: config.solver.seed.wrapping_add(est.index as u64),
        ..config.solver.clone()
    };
    let sol = solve_window(&init, &obs_by_line, &est.gamma, &solver)?;
    for (k, &l) in active.iter().enumerate() {
        est.params.lines[l] = sol.params.lines[k];
    }
    est.params.shared = sol.params.shared;
    let d = &sol.diagnostics;
    let diag = &mut est.diagnostics;
    diag.t_start = est.frame_times[0];
    diag.t_end = est.frame_times[est.frame_times.len() - 1];
    diag.frames = est.frame_times.len();
    diag.loss = sol.loss;
    diag.mean_loss = d.mean_loss;
    diag.iterations = d.iterations;
    diag.restarts = d.restarts;
    diag.termination = d.termination;
    diag.points = est.point_set.iter().map(Vec::len).collect();
    diag.dropped = dropped;
    diag.depth_violations = d.depth_violations;
    diag.infeasible = d.infeasible;
    diag.unbounded_direction = d.unbounded_direction;
    diag.max_constraint_violation = diag.max_constraint_violation.max(d.max_constraint_violation);
    diag.starving_lines = (0..est.starvation.len())
        .filter(|&l| est.starvation[l] > config.starvation_limit)
        .collect();
    if d.infeasible && config.fail_on_infeasible {
        return Err(Error::Infeasible {
            t: est.frame_times[0],
            violations: d.depth_violations,
            observations: d.observations,
        });
    }
    Ok(())
}

/// Builds and solves the first window from initial parameters and points.
pub fn initialize_window(
    imu: &ImuTrack,
    frame_times: Vec<f64>,
    params: SurfaceSetParams,
    point_set: Vec<Vec<Observation>>,
    config: &PipelineConfig,
) -> Result<WindowEstimate> {
    if frame_times.is_empty() {
        return Err(Error::InvalidInput("a window needs at least one frame".into()));
    }
    if point_set.len() != params.num_lines() {
        return Err(Error::InvalidInput("one point set per line is required".into()));
    }
    let (rotation, gamma) = window_tables(imu, &frame_times)?;
    let n = params.num_lines();
    let mut est = WindowEstimate {
        index: 0,
        params: retract(&params)?,
        point_set,
        rotation,
        gamma,
        diagnostics: WindowDiagnostics::default(),
        starvation: vec![0; n],
        frame_times,
    };
    resolve(&mut est, config)?;
    Ok(est)
}

/// Points of `observations` that a window's current surfaces would claim,
/// per line.
pub fn associate_frame(est: &WindowEstimate, t: f64, observations: &[Observation], tau: f64) -> Result<Vec<Vec<Observation>>> {
    Ok(associate(&est.params, &est.gamma, &est.rotation, t, observations, tau)?.per_line)
}

fn absorb(est: &mut WindowEstimate, assoc: Association) {
    est.diagnostics.associated = assoc.per_line.iter().map(Vec::len).sum();
    est.diagnostics.ambiguous = assoc.ambiguous;
    est.diagnostics.unassociated = assoc.unassociated;
    for (l, pts) in assoc.per_line.into_iter().enumerate() {
        est.starvation[l] = if pts.is_empty() { est.starvation[l] + 1 } else { 0 };
        est.point_set[l].extend(pts);
    }
}

/// Extends the window by one frame: predicts each ruling at `t`,
/// associates the frame's points and re-solves from the current estimate.
pub fn extrude_surface(
    est: &WindowEstimate,
    t: f64,
    observations: &[Observation],
    imu: &ImuTrack,
    config: &PipelineConfig,
) -> Result<WindowEstimate> {
    check_gap(est, t, config)?;
    let mut next = est.clone();
    next.frame_times.push(t);
    next.gamma = integrate_gamma(imu, next.t_start(), &next.frame_times, &next.rotation)?.negated();
    let assoc = associate(&next.params, &next.gamma, &next.rotation, t, observations, config.tau)?;
    absorb(&mut next, assoc);
    resolve(&mut next, config)?;
    Ok(next)
}

/// Associates a frame at the far end, drops the oldest frame and re-bases
/// the estimate on the next frame before re-solving.
pub fn slide_window(
    est: &WindowEstimate,
    t: f64,
    observations: &[Observation],
    imu: &ImuTrack,
    config: &PipelineConfig,
) -> Result<WindowEstimate> {
    check_gap(est, t, config)?;
    if est.frame_times.len() < 2 {
        return Err(Error::InvalidInput("cannot slide a single-frame window".into()));
    }
    let mut times = est.frame_times.clone();
    times.push(t);
    let gamma_ext = integrate_gamma(imu, est.t_start(), &times, &est.rotation)?.negated();
    let assoc = associate(&est.params, &gamma_ext, &est.rotation, t, observations, config.tau)?;
    let mut next = est.clone();
    absorb(&mut next, assoc);

    let t_new = times[1];
    for pts in next.point_set.iter_mut() {
        pts.retain(|o| o.t >= t_new);
    }
    let signal = est.params.translation_signal(&gamma_ext);
    let shift = signal.at(t_new)?;
    let velocity = signal.velocity_at(t_new)?;
    let new_from_old = est.rotation.at(t_new)?.inverse();
    let mut params = est.params.clone();
    for l in params.lines.iter_mut() {
        let raw = l.raw_line();
        let x0 = new_from_old * (raw.x0 + shift);
        let v0 = new_from_old * raw.v0;
        l.a = x0.z;
        l.e = x0.xy();
        l.c = v0.z;
        l.d = Vector2::new(v0.x, v0.y);
    }
    let v = new_from_old * velocity;
    params.shared.b = v.z;
    params.shared.f = v.xy();
    params.shared.g = new_from_old * params.shared.g;
    next.params = retract(&params)?;

    next.frame_times = times[1..].to_vec();
    let (rotation, gamma) = window_tables(imu, &next.frame_times)?;
    next.rotation = rotation;
    next.gamma = gamma;
    next.index += 1;
    resolve(&mut next, config)?;
    Ok(next)
}
