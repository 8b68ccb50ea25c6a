//! Standard Hough transform over an edge map with greedy peak extraction,
//! least-squares refinement and segment length checks.

use std::f64::consts::PI;

use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use serde::{Deserialize, Serialize};

use super::edges::EdgeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HoughConfig {
    /// Distance bin (pixels).
    pub rho_resolution: f64,
    /// Angle bin (degrees).
    pub theta_resolution_deg: f64,
    pub vote_threshold: u32,
    /// Shortest accepted segment (pixels).
    pub min_line_length: f64,
    /// Largest gap bridged inside a segment (pixels).
    pub max_line_gap: f64,
    /// Active-pixel threshold as a fraction of the largest gradient magnitude.
    pub edge_threshold: f64,
    /// Pixels farther than this from a fitted line are not used to refine it.
    pub fit_distance: f64,
    /// Gradient directions further than this from the line normal are
    /// ignored during refinement (degrees).
    pub orientation_tolerance_deg: f64,
    /// Peaks examined before giving up.
    pub max_candidates: usize,
    /// Fewest supporting pixels per pixel of segment length. A rendered
    /// edge gives several; chance alignments of salt noise give well under
    /// one.
    pub min_support_density: f64,
}

impl Default for HoughConfig {
    fn default() -> Self {
        Self {
            rho_resolution: 5.0,
            theta_resolution_deg: 1.0,
            vote_threshold: 100,
            min_line_length: 100.0,
            max_line_gap: 5.0,
            edge_threshold: 0.3,
            fit_distance: 2.5,
            orientation_tolerance_deg: 15.0,
            max_candidates: 500,
            min_support_density: 1.0,
        }
    }
}

/// A detected line in pixel coordinates, `x cos θ + y sin θ = ρ`, with
/// `θ ∈ [0, π)`, together with the supporting segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoughLine {
    pub rho: f64,
    pub theta: f64,
    pub votes: u32,
    pub start: Vector2<f64>,
    pub end: Vector2<f64>,
    pub support: usize,
}

impl HoughLine {
    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(self.theta.cos(), self.theta.sin())
    }

    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        (self.normal().dot(p) - self.rho).abs()
    }

    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Distance from `p` to the supporting segment.
    pub fn segment_distance(&self, p: &Vector2<f64>) -> f64 {
        let ab = self.end - self.start;
        let len2 = ab.norm_squared();
        let s = if len2 > 0.0 { ((p - self.start).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.start + ab * s)).norm()
    }
}

/// `(θ, ρ)` with `θ ∈ [0, π)` for the line with unit normal `n` through `p`.
pub fn normal_form(n: &Vector2<f64>, p: &Vector2<f64>) -> (f64, f64) {
    let mut theta = n.y.atan2(n.x);
    let mut rho = n.dot(p);
    if theta < 0.0 {
        theta += PI;
        rho = -rho;
    }
    if theta >= PI {
        theta -= PI;
        rho = -rho;
    }
    (theta, rho)
}

/// Differences in `(ρ, θ)` between two normal-form lines, accounting for the
/// wrap at `θ = π` where `ρ` flips sign.
pub fn normal_form_difference(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (ta, ra) = a;
    let (tb, rb) = b;
    let direct = ((ra - rb).abs(), (ta - tb).abs());
    let wrapped = ((ra + rb).abs(), PI - (ta - tb).abs());
    if wrapped.1 < direct.1 {
        wrapped
    } else {
        direct
    }
}

struct Accumulator {
    n_theta: usize,
    n_rho: usize,
    rho_res: f64,
    rho_offset: f64,
    cos: Vec<f64>,
    sin: Vec<f64>,
    votes: Vec<i32>,
}

impl Accumulator {
    fn new(width: usize, height: usize, config: &HoughConfig) -> Self {
        let n_theta = (180.0 / config.theta_resolution_deg).round().max(1.0) as usize;
        let diag = (width as f64).hypot(height as f64);
        let n_rho = (2.0 * diag / config.rho_resolution).ceil() as usize + 1;
        let step = PI / n_theta as f64;
        Self {
            n_theta,
            n_rho,
            rho_res: config.rho_resolution,
            rho_offset: diag,
            cos: (0..n_theta).map(|i| (i as f64 * step).cos()).collect(),
            sin: (0..n_theta).map(|i| (i as f64 * step).sin()).collect(),
            votes: vec![0; n_theta * n_rho],
        }
    }

    fn vote(&mut self, p: &Vector2<f64>, weight: i32) {
        for t in 0..self.n_theta {
            let rho = p.x * self.cos[t] + p.y * self.sin[t];
            let r = ((rho + self.rho_offset) / self.rho_res) as usize;
            self.votes[t * self.n_rho + r.min(self.n_rho - 1)] += weight;
        }
    }

    fn line(&self, bin: usize) -> (Vector2<f64>, f64) {
        let (t, r) = (bin / self.n_rho, bin % self.n_rho);
        let rho = (r as f64 + 0.5) * self.rho_res - self.rho_offset;
        (Vector2::new(self.cos[t], self.sin[t]), rho)
    }
}

/// Total least squares line through `pts`: `(unit normal, centroid)`.
fn fit_line(pts: &[Vector2<f64>]) -> Option<(Vector2<f64>, Vector2<f64>)> {
    if pts.len() < 2 {
        return None;
    }
    let c = pts.iter().sum::<Vector2<f64>>() / pts.len() as f64;
    let mut cov = Matrix2::zeros();
    for p in pts {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let i = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let n = eig.eigenvectors.column(i).into_owned();
    n.try_normalize(1e-12).map(|n| (n, c))
}

fn orientation_ok(edge: &EdgeMap, index: usize, normal: &Vector2<f64>, cos_tol: f64) -> bool {
    let dir = edge.direction[index];
    if dir.is_nan() {
        return true;
    }
    (dir.cos() * normal.x + dir.sin() * normal.y).abs() >= cos_tol
}

/// Longest run of `pts` along `dir` with consecutive gaps ≤ `max_gap`;
/// returns the member indices and the run's extent.
fn longest_run(pts: &[Vector2<f64>], origin: &Vector2<f64>, dir: &Vector2<f64>, max_gap: f64) -> (Vec<usize>, f64, f64) {
    let mut proj: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| ((p - origin).dot(dir), i)).collect();
    proj.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut best, mut best_len) = ((0, 0), -1.0);
    let mut start = 0;
    for i in 0..proj.len() {
        if i > 0 && proj[i].0 - proj[i - 1].0 > max_gap {
            start = i;
        }
        let len = proj[i].0 - proj[start].0;
        if len > best_len {
            best_len = len;
            best = (start, i);
        }
    }
    if proj.is_empty() {
        return (Vec::new(), 0.0, 0.0);
    }
    let members = proj[best.0..=best.1].iter().map(|(_, i)| *i).collect();
    (members, proj[best.0].0, proj[best.1].0)
}

/// Refines a peak into a line with a supporting segment, or `None` if no
/// long enough segment backs it.
fn refine(
    edge: &EdgeMap,
    alive: &[usize],
    mut normal: Vector2<f64>,
    mut rho: f64,
    config: &HoughConfig,
) -> Option<HoughLine> {
    let cos_tol = config.orientation_tolerance_deg.to_radians().cos();
    let mut band = config.rho_resolution;
    let mut support = Vec::new();
    for _ in 0..6 {
        let pts: Vec<Vector2<f64>> = alive
            .iter()
            .filter(|&&i| {
                let p = edge.center(i);
                (normal.dot(&p) - rho).abs() <= band && orientation_ok(edge, i, &normal, cos_tol)
            })
            .map(|&i| edge.center(i))
            .collect();
        let (n, c) = fit_line(&pts)?;
        normal = n;
        rho = n.dot(&c);
        support = pts;
        band = (band * 0.6).max(config.fit_distance);
    }
    let support: Vec<Vector2<f64>> = support
        .into_iter()
        .filter(|p| (normal.dot(p) - rho).abs() <= config.fit_distance)
        .collect();
    let dir = Vector2::new(-normal.y, normal.x);
    let origin = normal * rho;
    let (members, lo, hi) = longest_run(&support, &origin, &dir, config.max_line_gap);
    if hi - lo < config.min_line_length {
        return None;
    }
    let run: Vec<Vector2<f64>> = members.iter().map(|&i| support[i]).collect();
    let (n, c) = fit_line(&run)?;
    let (theta, rho) = normal_form(&n, &c);
    let n = Vector2::new(theta.cos(), theta.sin());
    let dir = Vector2::new(-n.y, n.x);
    let foot = n * rho;
    let (_, lo, hi) = longest_run(&run, &foot, &dir, f64::INFINITY);
    if (run.len() as f64) < config.min_support_density * (hi - lo) {
        return None;
    }
    Some(HoughLine {
        rho,
        theta,
        votes: 0,
        start: foot + dir * lo,
        end: foot + dir * hi,
        support: run.len(),
    })
}

/// Greedily extracts up to `count` lines. After each accepted line, active
/// pixels within `suppression_px` of the full line (not just its segment,
/// so the far side of a gap cannot come back as a second detection) are
/// removed and their votes withdrawn. Stops early when no remaining peak reaches the vote threshold.
pub fn detect_lines(edge: &EdgeMap, config: &HoughConfig, count: usize, suppression_px: f64) -> Vec<HoughLine> {
    let mut acc = Accumulator::new(edge.width, edge.height, config);
    let mut alive: Vec<usize> = edge.active.clone();
    for &i in &alive {
        acc.vote(&edge.center(i), 1);
    }
    let mut rejected = vec![false; acc.votes.len()];
    let mut found = Vec::new();
    let mut examined = 0;
    while found.len() < count && examined < config.max_candidates {
        let peak = acc
            .votes
            .iter()
            .enumerate()
            .filter(|(i, _)| !rejected[*i])
            .max_by_key(|(i, v)| (**v, std::cmp::Reverse(*i)))
            .map(|(i, v)| (i, *v));
        let Some((bin, votes)) = peak else { break };
        if votes < config.vote_threshold as i32 {
            break;
        }
        examined += 1;
        let (normal, rho) = acc.line(bin);
        match refine(edge, &alive, normal, rho, config) {
            Some(mut line) => {
                line.votes = votes as u32;
                let (keep, drop): (Vec<usize>, Vec<usize>) = alive
                    .iter()
                    .partition(|&&i| line.distance(&edge.center(i)) > suppression_px);
                for &i in &drop {
                    acc.vote(&edge.center(i), -1);
                }
                alive = keep;
                found.push(line);
            }
            None => rejected[bin] = true,
        }
    }
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge_from_segment(a: Vector2<f64>, b: Vector2<f64>) -> EdgeMap {
        let n = ((b - a).norm() * 2.0) as usize;
        let pts: Vec<Vector2<f64>> = (0..=n).map(|i| a + (b - a) * (i as f64 / n as f64)).collect();
        EdgeMap::from_points(200, 200, &pts, 0.0)
    }

    #[test]
    fn normal_form_wraps_into_half_turn() {
        let (t, r) = normal_form(&Vector2::new(0.0, -1.0), &Vector2::new(3.0, 7.0));
        assert!((t - PI / 2.0).abs() < 1e-12 && (r - 7.0).abs() < 1e-12);
        let d = normal_form_difference((0.01, 5.0), (PI - 0.01, -5.5));
        assert!((d.0 - 0.5).abs() < 1e-12 && (d.1 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn single_horizontal_segment() {
        let edge = edge_from_segment(Vector2::new(20.0, 80.5), Vector2::new(180.0, 80.5));
        let lines = detect_lines(&edge, &HoughConfig::default(), 3, 10.0);
        assert_eq!(lines.len(), 1);
        let l = lines[0];
        assert!((l.theta - PI / 2.0).abs() < 1e-9 && (l.rho - 80.5).abs() < 1e-9, "{l:?}");
        assert!(l.length() > 150.0);
    }

    #[test]
    fn short_or_gappy_segments_are_rejected() {
        let short = edge_from_segment(Vector2::new(20.0, 50.5), Vector2::new(90.0, 50.5));
        let config = HoughConfig { vote_threshold: 10, ..HoughConfig::default() };
        assert!(detect_lines(&short, &config, 1, 10.0).is_empty());
        // dashed line: 8 px on, 8 px off
        let pts: Vec<Vector2<f64>> = (0..170)
            .filter(|i| (i / 8) % 2 == 0)
            .map(|i| Vector2::new(15.0 + i as f64, 120.5))
            .collect();
        let dashed = EdgeMap::from_points(200, 200, &pts, 0.0);
        assert!(detect_lines(&dashed, &config, 1, 10.0).is_empty());
    }

    #[test]
    fn sparse_alignment_is_not_a_line() {
        // one pixel every 3 px: long and gap-free by the gap rule, but thin
        let pts: Vec<Vector2<f64>> = (0..60).map(|i| Vector2::new(15.5 + 3.0 * i as f64, 100.5)).collect();
        let config = HoughConfig { vote_threshold: 10, ..HoughConfig::default() };
        assert!(detect_lines(&EdgeMap::from_points(200, 200, &pts, 0.0), &config, 1, 10.0).is_empty());
        let sparse = HoughConfig { min_support_density: 0.3, ..config };
        assert_eq!(detect_lines(&EdgeMap::from_points(200, 200, &pts, 0.0), &sparse, 1, 10.0).len(), 1);
    }

    #[test]
    fn blank_map_yields_nothing() {
        let edge = EdgeMap::from_points(50, 50, &[], 0.0);
        assert!(detect_lines(&edge, &HoughConfig::default(), 4, 10.0).is_empty());
    }
}
