//! Run reports, plot data and a minimal SVG renderer for trajectory plots.

use std::fmt::Write as _;

use nalgebra::Vector3;
use ruled_odometry::geometry::{canonicalize_line, LineState};
use ruled_odometry::pipeline::WindowDiagnostics;
use ruled_odometry::sim::{evaluate_lines, evaluate_trajectory, TrajectoryErrors};
use serde::{Deserialize, Serialize};

use crate::dataset::TruthFile;
use crate::error::{CliError, Result};

/// Mean and standard deviation of a set of errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Error of one estimated line against the true line it was matched to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineReport {
    pub line: usize,
    pub truth_line: usize,
    /// Mean distance from points of the true segment to the estimated line,
    /// first camera basis (m).
    pub mean_distance: f64,
    /// Distance between estimated and true perpendicular feet in each
    /// window's start frame (m).
    pub directrix: Stats,
    /// Angle between estimated and true directions (rad).
    pub direction: Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub index: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub loss: f64,
    pub restarts: usize,
    pub dropped: usize,
    pub ambiguous: usize,
    pub unassociated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Wall-clock time of the estimate run (s).
    pub estimate_s: f64,
}

/// Everything `evaluate` measures. The per-axis trajectory statistics sit
/// at the top level under `X`, `Y` and `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    #[serde(flatten)]
    pub trajectory: TrajectoryErrors,
    pub lines: Vec<LineReport>,
    pub windows: Vec<WindowReport>,
    pub timing: Option<Timing>,
}

/// One record of `windows.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub index: usize,
    #[serde(flatten)]
    pub diagnostics: WindowDiagnostics,
}

/// Row of `lines.csv`: one line of one window, in the window's start frame
/// and in the basis of the first camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineRow {
    pub t_start: f64,
    pub line: usize,
    pub x0x: f64,
    pub x0y: f64,
    pub x0z: f64,
    pub v0x: f64,
    pub v0y: f64,
    pub v0z: f64,
    pub basis_x0x: f64,
    pub basis_x0y: f64,
    pub basis_x0z: f64,
    pub basis_v0x: f64,
    pub basis_v0y: f64,
    pub basis_v0z: f64,
}

pub const LINES_HEADER: [&str; 14] = [
    "t_start", "line", "x0x", "x0y", "x0z", "v0x", "v0y", "v0z", "basis_x0x", "basis_x0y", "basis_x0z", "basis_v0x",
    "basis_v0y", "basis_v0z",
];

impl LineRow {
    pub fn new(t_start: f64, line: usize, camera: &LineState, basis: &LineState) -> Self {
        Self {
            t_start,
            line,
            x0x: camera.x0.x,
            x0y: camera.x0.y,
            x0z: camera.x0.z,
            v0x: camera.v0.x,
            v0y: camera.v0.y,
            v0z: camera.v0.z,
            basis_x0x: basis.x0.x,
            basis_x0y: basis.x0.y,
            basis_x0z: basis.x0.z,
            basis_v0x: basis.v0.x,
            basis_v0y: basis.v0.y,
            basis_v0z: basis.v0.z,
        }
    }

    pub fn camera(&self) -> LineState {
        LineState {
            x0: Vector3::new(self.x0x, self.x0y, self.x0z),
            v0: Vector3::new(self.v0x, self.v0y, self.v0z),
        }
    }

    pub fn basis(&self) -> LineState {
        LineState {
            x0: Vector3::new(self.basis_x0x, self.basis_x0y, self.basis_x0z),
            v0: Vector3::new(self.basis_v0x, self.basis_v0y, self.basis_v0z),
        }
    }
}

/// Row of `trajectory.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "x", "y", "z"];

/// Estimated against true values of a 3-vector quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub t: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
}

/// Per-window line quantity against its matched true line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinePlotRow {
    pub t_start: f64,
    pub line: usize,
    pub truth_line: usize,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub true_x: f64,
    pub true_y: f64,
    pub true_z: f64,
}

impl PlotRow {
    fn new(t: f64, est: &Vector3<f64>, truth: &Vector3<f64>) -> Self {
        Self {
            t,
            est_x: est.x,
            est_y: est.y,
            est_z: est.z,
            true_x: truth.x,
            true_y: truth.y,
            true_z: truth.z,
        }
    }
}

impl LinePlotRow {
    fn new(t_start: f64, line: usize, truth_line: usize, est: &Vector3<f64>, truth: &Vector3<f64>) -> Self {
        Self {
            t_start,
            line,
            truth_line,
            est_x: est.x,
            est_y: est.y,
            est_z: est.z,
            true_x: truth.x,
            true_y: truth.y,
            true_z: truth.z,
        }
    }
}

/// Report and plot series produced by `evaluate`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: RunReport,
    pub trajectory: Vec<PlotRow>,
    pub directrix: Vec<LinePlotRow>,
    pub directions: Vec<LinePlotRow>,
}

fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0).acos()
}

/// Groups line rows by window, keeping file order.
fn windows_of(lines: &[LineRow]) -> Vec<(f64, Vec<LineRow>)> {
    let mut out: Vec<(f64, Vec<LineRow>)> = Vec::new();
    for row in lines {
        match out.last_mut() {
            Some((t, rows)) if *t == row.t_start => rows.push(*row),
            _ => out.push((row.t_start, vec![*row])),
        }
    }
    out
}

pub fn evaluate_files(
    trajectory: &[TrajectoryRow],
    lines: &[LineRow],
    windows: &[WindowRecord],
    timing: Option<Timing>,
    truth: &TruthFile,
) -> Result<Evaluation> {
    let gt = truth.to_truth();
    let times: Vec<f64> = trajectory.iter().map(|r| r.t).collect();
    let positions: Vec<Vector3<f64>> = trajectory.iter().map(|r| Vector3::new(r.x, r.y, r.z)).collect();
    let errors = evaluate_trajectory(&times, &positions, &gt)?;

    let truth_pos = gt.positions_in_start_frame();
    let plot_trajectory = trajectory
        .iter()
        .zip(&positions)
        .filter_map(|(r, p)| {
            gt.frames
                .iter()
                .position(|f| (f.t - r.t).abs() < 1e-9)
                .map(|i| PlotRow::new(r.t, p, &truth_pos[i]))
        })
        .collect();

    let grouped = windows_of(lines);
    let mut line_reports = Vec::new();
    let mut directrix = Vec::new();
    let mut directions = Vec::new();
    if !grouped.is_empty() {
        let basis: Vec<Vec<LineState>> = grouped.iter().map(|(_, rows)| rows.iter().map(LineRow::basis).collect()).collect();
        let line_errors = evaluate_lines(&basis, &gt)?;
        let start_lines = gt
            .lines_in_start_frame()
            .iter()
            .map(|l| canonicalize_line(&l.point, &l.direction))
            .collect::<ruled_odometry::Result<Vec<_>>>()?;
        let n = line_errors.matched.len();
        let (mut foot_err, mut dir_err) = (vec![Vec::new(); n], vec![Vec::new(); n]);
        for (t_start, rows) in &grouped {
            let Some((position, orientation)) = truth.pose_at(*t_start) else {
                continue;
            };
            let inv = orientation.inverse();
            for row in rows.iter().filter(|r| r.line < n) {
                let k = line_errors.matched[row.line];
                let scene = &truth.lines[k];
                let true_cam = canonicalize_line(&(inv * (scene.point - position)), &(inv * scene.direction))?;
                let est = row.camera();
                foot_err[row.line].push((est.x0 - true_cam.x0).norm());
                dir_err[row.line].push(angle_between(&row.basis().v0, &start_lines[k].v0));
                directrix.push(LinePlotRow::new(*t_start, row.line, k, &est.x0, &true_cam.x0));
                directions.push(LinePlotRow::new(*t_start, row.line, k, &row.basis().v0, &start_lines[k].v0));
            }
        }
        line_reports = (0..n)
            .map(|l| LineReport {
                line: l,
                truth_line: line_errors.matched[l],
                mean_distance: line_errors.mean_distance[l],
                directrix: Stats::of(&foot_err[l]),
                direction: Stats::of(&dir_err[l]),
            })
            .collect();
    }

    let window_reports = windows
        .iter()
        .map(|w| {
            let d = &w.diagnostics;
            WindowReport {
                index: w.index,
                t_start: d.t_start,
                t_end: d.t_end,
                loss: d.loss,
                restarts: d.restarts,
                dropped: d.dropped,
                ambiguous: d.ambiguous,
                unassociated: d.unassociated,
            }
        })
        .collect();
    Ok(Evaluation {
        report: RunReport {
            trajectory: errors,
            lines: line_reports,
            windows: window_reports,
            timing,
        },
        trajectory: plot_trajectory,
        directrix,
        directions,
    })
}

const PANEL_W: f64 = 720.0;
const PANEL_H: f64 = 180.0;
const MARGIN: f64 = 40.0;

/// Three stacked panels (X, Y, Z) with the estimated trajectory in blue and
/// the true one in black.
pub fn trajectory_svg(rows: &[PlotRow]) -> Result<String> {
    if rows.len() < 2 {
        return Err(CliError::Input("need at least two trajectory samples to plot".into()));
    }
    let (t0, t1) = (rows[0].t, rows[rows.len() - 1].t);
    let height = 3.0 * (PANEL_H + MARGIN) + MARGIN;
    let width = PANEL_W + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let series: [(&str, fn(&PlotRow) -> (f64, f64)); 3] = [
        ("X (m)", |r| (r.est_x, r.true_x)),
        ("Y (m)", |r| (r.est_y, r.true_y)),
        ("Z (m)", |r| (r.est_z, r.true_z)),
    ];
    for (panel, (label, pick)) in series.iter().enumerate() {
        let top = MARGIN + panel as f64 * (PANEL_H + MARGIN);
        let values: Vec<(f64, f64)> = rows.iter().map(pick).collect();
        let lo = values.iter().flat_map(|&(a, b)| [a, b]).fold(f64::INFINITY, f64::min);
        let hi = values.iter().flat_map(|&(a, b)| [a, b]).fold(f64::NEG_INFINITY, f64::max);
        let span = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
        let x = |t: f64| MARGIN + (t - t0) / (t1 - t0).max(1e-12) * PANEL_W;
        let y = |v: f64| top + PANEL_H - (v - lo) / span * PANEL_H;
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{top}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="gray"/>"#
        );
        let _ = writeln!(svg, r#"<text x="{MARGIN}" y="{}">{label}  [{lo:.3}, {hi:.3}]</text>"#, top - 6.0);
        for (colour, which) in [("black", 1), ("steelblue", 0)] {
            let points: Vec<String> = rows
                .iter()
                .zip(&values)
                .map(|(r, &(e, t))| format!("{:.2},{:.2}", x(r.t), y(if which == 0 { e } else { t })))
                .collect();
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                points.join(" ")
            );
        }
    }
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}">t from {t0:.2} s to {t1:.2} s; black: truth, blue: estimate</text>"#,
        height - 12.0
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}
