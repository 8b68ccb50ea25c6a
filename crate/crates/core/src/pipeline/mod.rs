//! End-to-end estimation: initial detection, surface extrusion over a
//! growing window, sliding windows and odometry accumulation.

mod detect;
mod edges;
mod hough;
mod odometry;
mod run;
mod window;

pub use detect::{detect_initial_lines, init_surface_params, Detection, DetectionConfig, DetectionFrame, ImageLine, InitConfig};
pub use edges::EdgeMap;
pub use hough::{detect_lines, normal_form, normal_form_difference, HoughConfig, HoughLine};
pub use odometry::{accumulate_odometry, OdometryAccumulator, OdometryResult, WindowLines};
pub use run::{harvest_points, run_pipeline, FrameInput, PipelineInput, PipelineOutput};
pub use window::{associate_frame, extrude_surface, initialize_window, slide_window, window_tables, WindowDiagnostics, WindowEstimate};

use serde::{Deserialize, Serialize};

use crate::estimator::SolverConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Window length `k` in frame steps; a full window holds `k + 1` frames.
    pub window_frames: usize,
    /// Association radius around a predicted ruling (normalized units).
    pub tau: f64,
    /// Length of the initial detection interval (s).
    pub detection_interval: f64,
    /// Largest allowed gap between consecutive frames (s).
    pub max_frame_gap: f64,
    /// Longest time span a window may cover (s).
    pub max_window_span: f64,
    /// Frames a line may go without new points before it is reported.
    pub starvation_limit: usize,
    /// Abort when a window solution stays infeasible after all restarts.
    pub fail_on_infeasible: bool,
    pub detection: DetectionConfig,
    pub init: InitConfig,
    pub solver: SolverConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_frames: 140,
            tau: 0.01,
            detection_interval: 0.1,
            max_frame_gap: 0.1,
            max_window_span: 10.0,
            starvation_limit: 30,
            fail_on_infeasible: true,
            detection: DetectionConfig::default(),
            init: InitConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}
