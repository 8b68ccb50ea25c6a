use super::detect::{detect_initial_lines, init_surface_params, Detection, DetectionFrame};
use super::edges::EdgeMap;
use super::odometry::{OdometryAccumulator, OdometryResult};
use super::window::{associate_frame, extrude_surface, initialize_window, slide_window, window_tables, WindowEstimate};
use super::PipelineConfig;
use crate::error::{Error, Result};
use crate::estimator::SurfaceSetParams;
use crate::geometry::Observation;
use crate::imu::ImuTrack;
use crate::raster::{GrayImage, Intrinsics};

/// Slack when deciding which frames fall inside the detection interval.
const INTERVAL_EPS: f64 = 1e-9;

/// Raw observations of one frame in normalized camera coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub t: f64,
    pub observations: Vec<Observation>,
}

pub struct PipelineInput<'a> {
    pub imu: &'a ImuTrack,
    pub frames: &'a [FrameInput],
    /// Raster frames aligned with the leading `frames`; used for detection
    /// when given, so they must cover the detection interval.
    pub rasters: Option<&'a [GrayImage]>,
    pub intrinsics: Intrinsics,
    /// Known initial surfaces; skips detection.
    pub initial: Option<SurfaceSetParams>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub detections: Vec<Detection>,
    /// Completed windows without their point sets.
    pub windows: Vec<WindowEstimate>,
    pub odometry: OdometryResult,
    pub warnings: Vec<String>,
}

/// Active gradient pixels of a raster in normalized coordinates, thinned to
/// at most `max_points` by a fixed stride.
pub fn harvest_points(image: &GrayImage, k: &Intrinsics, relative_threshold: f64, t: f64, max_points: usize) -> Vec<Observation> {
    let edge = EdgeMap::from_image(image, relative_threshold);
    let stride = edge.active.len().div_ceil(max_points.max(1)).max(1);
    edge.active
        .iter()
        .step_by(stride)
        .map(|&i| {
            let p = k.to_normalized(&edge.center(i));
            Observation { t, p }
        })
        .collect()
}

fn validate_frames(frames: &[FrameInput], imu: &ImuTrack, config: &PipelineConfig) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("no frames".into()));
    }
    for w in frames.windows(2) {
        let gap = w[1].t - w[0].t;
        if !(gap > 0.0) || gap >= config.max_frame_gap {
            return Err(Error::FrameGap {
                t: w[1].t,
                gap,
                bound: config.max_frame_gap,
            });
        }
    }
    let (first, last) = (frames[0].t, frames[frames.len() - 1].t);
    if first < imu.start() || last > imu.end() {
        return Err(Error::OutOfRange {
            t: if first < imu.start() { first } else { last },
            start: imu.start(),
            end: imu.end(),
        });
    }
    if config.window_frames == 0 {
        return Err(Error::InvalidInput("window_frames must be positive".into()));
    }
    Ok(())
}

/// Runs detection (or takes the given initial surfaces), grows the first
/// window to `k + 1` frames and slides it to the end of the sequence.
/// `on_window` sees every completed window as soon as it is final.
pub fn run_pipeline(
    input: &PipelineInput,
    config: &PipelineConfig,
    on_window: &mut dyn FnMut(&WindowEstimate),
) -> Result<PipelineOutput> {
    let frames = input.frames;
    validate_frames(frames, input.imu, config)?;
    let t0 = frames[0].t;
    let n_init = frames
        .iter()
        .take_while(|f| f.t - t0 <= config.detection_interval + INTERVAL_EPS)
        .count()
        .clamp(1, config.window_frames + 1);
    let init_times: Vec<f64> = frames[..n_init].iter().map(|f| f.t).collect();
    if let Some(r) = input.rasters {
        if r.len() < n_init || r.len() > frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} rasters given; detection needs {n_init} and there are {} frames",
                r.len(),
                frames.len()
            )));
        }
    }

    let (params, point_set, detections) = match &input.initial {
        Some(params) => {
            let (rotation, gamma) = window_tables(input.imu, &init_times)?;
            let probe = WindowEstimate {
                index: 0,
                frame_times: init_times.clone(),
                params: params.clone(),
                point_set: Vec::new(),
                rotation,
                gamma,
                diagnostics: Default::default(),
                starvation: Vec::new(),
            };
            let mut sets = vec![Vec::new(); params.num_lines()];
            for f in &frames[..n_init] {
                for (l, pts) in associate_frame(&probe, f.t, &f.observations, config.tau)?.into_iter().enumerate() {
                    sets[l].extend(pts);
                }
            }
            (params.clone(), sets, Vec::new())
        }
        None => {
            let det_frames: Vec<DetectionFrame> = match input.rasters {
                Some(r) => frames[..n_init]
                    .iter()
                    .zip(r)
                    .map(|(f, image)| DetectionFrame::Raster { t: f.t, image })
                    .collect(),
                None => frames[..n_init]
                    .iter()
                    .map(|f| DetectionFrame::Points { t: f.t, observations: &f.observations })
                    .collect(),
            };
            let detections = detect_initial_lines(&det_frames, &input.intrinsics, &config.detection)?;
            let lines: Vec<_> = detections.iter().map(|d| d.line).collect();
            let params = init_surface_params(&lines, &config.init)?;
            let sets = detections.iter().map(|d| d.inliers.clone()).collect();
            (params, sets, detections)
        }
    };

    let mut warnings = Vec::new();
    let mut warned = vec![false; params.num_lines()];
    let mut est = initialize_window(input.imu, init_times, params, point_set, config)?;
    let mut windows = Vec::new();
    let mut odometry = OdometryAccumulator::new();
    for f in &frames[n_init..] {
        let full = est.frame_times.len() > config.window_frames || f.t - est.t_start() > config.max_window_span;
        est = if full {
            let snap = est.snapshot()?;
            on_window(&snap);
            odometry.push(&snap)?;
            windows.push(snap);
            slide_window(&est, f.t, &f.observations, input.imu, config)?
        } else {
            extrude_surface(&est, f.t, &f.observations, input.imu, config)?
        };
        for &l in &est.diagnostics.starving_lines {
            if !warned[l] {
                warned[l] = true;
                warnings.push(format!("line {l} gained no points for more than {} frames (t = {:.3} s)", config.starvation_limit, f.t));
            }
        }
    }
    let snap = est.snapshot()?;
    on_window(&snap);
    odometry.push(&snap)?;
    windows.push(snap);
    Ok(PipelineOutput {
        detections,
        windows,
        odometry: odometry.finish()?,
        warnings,
    })
}
