use thiserror::Error;

/// Errors produced by the geometry, IMU, estimation and simulation layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("direction vector has (near) zero length")]
    ZeroDirection,
    #[error("point lies at non-positive depth ({depth:.3e} m)")]
    NonPositiveDepth { depth: f64 },
    #[error("ruling projects to a single image point (line viewed end-on)")]
    DegenerateProjection,
    #[error("time {t} s lies outside the covered span [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },
    #[error("observation direction is parallel to the projected ruling (PᵀP = {conditioning:.3e})")]
    DegenerateAlpha { conditioning: f64 },
    #[error("no observations for line {line}")]
    NoObservations { line: usize },
    #[error("found {found} lines, {wanted} requested")]
    NotEnoughLines { found: usize, wanted: usize },
    #[error("window seam mismatch: window {index} starts at {start} s, expected {expected} s")]
    SeamMismatch {
        index: usize,
        start: f64,
        expected: f64,
    },
    #[error("estimate and truth time ranges do not overlap")]
    TimeRangeMismatch,
    #[error("line {line} is not visible in {fraction:.1}% of frames")]
    LineNotVisible { line: usize, fraction: f64 },
    #[error("frame gap {gap} s at t = {t} s exceeds the configured bound {bound} s")]
    FrameGap { t: f64, gap: f64, bound: f64 },
    #[error("window at {t} s is infeasible: {violations} of {observations} observations behind the camera")]
    Infeasible {
        t: f64,
        violations: usize,
        observations: usize,
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
