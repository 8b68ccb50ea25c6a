//! On-disk dataset layout shared by simulated and recorded data.
//!
//! A dataset directory holds `imu.csv`, an observation source
//! (`observations.csv`, or `frames/` with a `frames.csv` index, or both),
//! `intrinsics.json` and optionally `truth.json` and `config.json`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector2, Vector3};
use ruled_odometry::geometry::Observation;
use ruled_odometry::imu::{ImuSample, ImuTrack};
use ruled_odometry::pipeline::{harvest_points, FrameInput, PipelineConfig};
use ruled_odometry::raster::{GrayImage, Intrinsics};
use ruled_odometry::sim::{GroundTruth, ScenarioSpec, SceneLine, SimOutput, TruthFrame};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::files::{csv_bytes, read_csv, read_json, write_atomic, write_json};

pub const IMU_FILE: &str = "imu.csv";
pub const OBSERVATIONS_FILE: &str = "observations.csv";
pub const FRAMES_DIR: &str = "frames";
pub const FRAMES_INDEX: &str = "frames.csv";
pub const INTRINSICS_FILE: &str = "intrinsics.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const CONFIG_FILE: &str = "config.json";

pub const IMU_HEADER: [&str; 7] = ["t", "ax", "ay", "az", "gx", "gy", "gz"];
pub const OBSERVATIONS_HEADER: [&str; 3] = ["t", "x", "y"];
pub const FRAMES_HEADER: [&str; 2] = ["t", "filename"];

/// Upper bound on points harvested from one raster when a dataset has no
/// observation file.
const HARVEST_POINTS: usize = 400;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ImuRow {
    t: f64,
    ax: f64,
    ay: f64,
    az: f64,
    gx: f64,
    gy: f64,
    gz: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct ObservationRow {
    t: f64,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FrameRow {
    t: f64,
    filename: String,
}

/// Contents of `truth.json`: camera poses at every frame time and the scene
/// lines in the world frame. Simulated datasets also carry their scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub frames: Vec<TruthFrame>,
    pub lines: Vec<SceneLine>,
    /// Segment endpoints of each line, world frame.
    pub line_endpoints: Vec<[Vector3<f64>; 2]>,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
}

impl TruthFile {
    pub fn from_truth(truth: &GroundTruth) -> Self {
        Self {
            frames: truth.frames.clone(),
            lines: truth.lines.clone(),
            line_endpoints: truth.lines.iter().map(SceneLine::endpoints).collect(),
            scenario: Some(truth.scenario.clone()),
        }
    }

    /// Truth usable by the frame- and line-based metrics. Recorded truth
    /// has no scenario, so closed-form queries fall back to the default.
    pub fn to_truth(&self) -> GroundTruth {
        GroundTruth {
            frames: self.frames.clone(),
            lines: self.lines.clone(),
            scenario: self.scenario.clone().unwrap_or_default(),
        }
    }

    /// Camera pose at a frame time, if `t` is one.
    pub fn pose_at(&self, t: f64) -> Option<(Vector3<f64>, UnitQuaternion<f64>)> {
        self.frames
            .iter()
            .find(|f| (f.t - t).abs() < 1e-9)
            .map(|f| (f.position, f.orientation))
    }
}

/// A loaded dataset, ready for the pipeline.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dir: PathBuf,
    pub imu: ImuTrack,
    pub frames: Vec<FrameInput>,
    /// Raster frames aligned with the leading entries of `frames`.
    pub rasters: Option<Vec<GrayImage>>,
    pub raster_times: Vec<f64>,
    pub intrinsics: Intrinsics,
    pub truth: Option<TruthFile>,
    pub config: Option<PipelineConfig>,
    /// Whether the points come from `observations.csv` rather than being
    /// harvested from the rasters.
    pub observed: bool,
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{} is missing", path.display())))
    }
}

fn read_imu(path: &Path) -> Result<ImuTrack> {
    let rows: Vec<ImuRow> = read_csv(path, &IMU_HEADER)?;
    let samples = rows
        .into_iter()
        .map(|r| ImuSample {
            t: r.t,
            accel: Vector3::new(r.ax, r.ay, r.az),
            gyro: Vector3::new(r.gx, r.gy, r.gz),
        })
        .collect();
    ImuTrack::new(samples).map_err(|e| CliError::format(path, e))
}

/// Groups rows into frames by timestamp; rows of one frame must be
/// contiguous and frame times strictly increasing.
fn read_observations(path: &Path) -> Result<Vec<FrameInput>> {
    let rows: Vec<ObservationRow> = read_csv(path, &OBSERVATIONS_HEADER)?;
    let mut frames: Vec<FrameInput> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if !(r.t.is_finite() && r.x.is_finite() && r.y.is_finite()) {
            return Err(CliError::format(path, format!("row {} is not finite", i + 2)));
        }
        let obs = Observation { t: r.t, p: Vector2::new(r.x, r.y) };
        match frames.last_mut() {
            Some(f) if f.t == r.t => f.observations.push(obs),
            Some(f) if f.t > r.t => {
                return Err(CliError::format(path, format!("row {}: time {} goes backwards", i + 2, r.t)));
            }
            _ => frames.push(FrameInput { t: r.t, observations: vec![obs] }),
        }
    }
    if frames.is_empty() {
        return Err(CliError::format(path, "no observations"));
    }
    Ok(frames)
}

fn read_frames(dir: &Path) -> Result<Vec<(f64, GrayImage)>> {
    let index = dir.join(FRAMES_INDEX);
    let rows: Vec<FrameRow> = read_csv(&index, &FRAMES_HEADER)?;
    let mut out: Vec<(f64, GrayImage)> = Vec::with_capacity(rows.len());
    for (i, r) in rows.into_iter().enumerate() {
        if out.last().is_some_and(|(t, _)| *t >= r.t) {
            return Err(CliError::format(&index, format!("row {}: times must increase", i + 2)));
        }
        let path = dir.join(FRAMES_DIR).join(&r.filename);
        let bytes = fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        let image = GrayImage::from_pgm(&bytes).map_err(|e| CliError::format(&path, e))?;
        out.push((r.t, image));
    }
    Ok(out)
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(CliError::Input(format!("{} is not a directory", dir.display())));
        }
        let imu_path = dir.join(IMU_FILE);
        require(&imu_path)?;
        let obs_path = dir.join(OBSERVATIONS_FILE);
        let has_obs = obs_path.is_file();
        let has_frames = dir.join(FRAMES_INDEX).is_file();
        if !has_obs && !has_frames {
            return Err(CliError::Input(format!(
                "{} has neither {OBSERVATIONS_FILE} nor {FRAMES_INDEX}",
                dir.display()
            )));
        }
        let intrinsics_path = dir.join(INTRINSICS_FILE);
        require(&intrinsics_path)?;
        let intrinsics: Intrinsics = read_json(&intrinsics_path)?;
        intrinsics.validate().map_err(|e| CliError::format(&intrinsics_path, e))?;

        let config_path = dir.join(CONFIG_FILE);
        let config: Option<PipelineConfig> = if config_path.is_file() { Some(read_json(&config_path)?) } else { None };
        let truth_path = dir.join(TRUTH_FILE);
        let truth = if truth_path.is_file() { Some(read_json(&truth_path)?) } else { None };

        let imu = read_imu(&imu_path)?;
        let rasters = if has_frames { Some(read_frames(dir)?) } else { None };
        let frames = if has_obs {
            let frames = read_observations(&obs_path)?;
            if let Some(r) = &rasters {
                if r.len() > frames.len() || r.iter().zip(&frames).any(|((t, _), f)| *t != f.t) {
                    return Err(CliError::format(
                        &dir.join(FRAMES_INDEX),
                        "raster times must match the leading observation frames",
                    ));
                }
            }
            frames
        } else {
            Vec::new()
        };
        let raster_times = rasters.iter().flatten().map(|(t, _)| *t).collect();
        let mut out = Self {
            dir: dir.to_path_buf(),
            imu,
            frames,
            rasters: rasters.map(|r| r.into_iter().map(|(_, image)| image).collect()),
            raster_times,
            intrinsics,
            truth,
            observed: has_obs,
            config: None,
        };
        if !has_obs {
            let threshold = config.as_ref().map_or(PipelineConfig::default().detection.hough.edge_threshold, |c| {
                c.detection.hough.edge_threshold
            });
            out.harvest(threshold);
        }
        out.config = config;
        Ok(out)
    }

    /// Rebuilds the points of a raster-only dataset with the given edge
    /// threshold; datasets with an observation file are left alone.
    pub fn reharvest(&mut self, edge_threshold: f64) {
        if !self.observed {
            self.harvest(edge_threshold);
        }
    }

    fn harvest(&mut self, edge_threshold: f64) {
        let rasters = self.rasters.as_deref().unwrap_or_default();
        self.frames = rasters
            .iter()
            .zip(&self.raster_times)
            .map(|(image, &t)| FrameInput {
                t,
                observations: harvest_points(image, &self.intrinsics, edge_threshold, t, HARVEST_POINTS),
            })
            .collect();
    }
}

/// Writes a simulated dataset. `imu.csv` goes last so an interrupted write
/// never leaves a directory that loads.
pub fn write_simulation(dir: &Path, sim: &SimOutput, spec: &ScenarioSpec, config: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let rows = sim
        .frames
        .iter()
        .flat_map(|f| f.observations.iter().map(|o| ObservationRow { t: o.t, x: o.p.x, y: o.p.y }));
    write_atomic(&dir.join(OBSERVATIONS_FILE), &csv_bytes(rows)?)?;
    if let Some(rasters) = &sim.rasters {
        let frames_dir = dir.join(FRAMES_DIR);
        fs::create_dir_all(&frames_dir).map_err(|e| CliError::io(&frames_dir, e))?;
        let mut index = Vec::with_capacity(rasters.len());
        for (i, (image, frame)) in rasters.iter().zip(&sim.frames).enumerate() {
            let filename = format!("{i:06}.pgm");
            write_atomic(&frames_dir.join(&filename), &image.to_pgm())?;
            index.push(FrameRow { t: frame.t, filename });
        }
        write_atomic(&dir.join(FRAMES_INDEX), &csv_bytes(index)?)?;
    }
    write_json(&dir.join(INTRINSICS_FILE), &spec.intrinsics)?;
    write_json(&dir.join(TRUTH_FILE), &TruthFile::from_truth(&sim.truth))?;
    write_json(&dir.join(CONFIG_FILE), config)?;
    let imu = sim.imu.samples().iter().map(|s| ImuRow {
        t: s.t,
        ax: s.accel.x,
        ay: s.accel.y,
        az: s.accel.z,
        gx: s.gyro.x,
        gy: s.gyro.y,
        gz: s.gyro.z,
    });
    write_atomic(&dir.join(IMU_FILE), &csv_bytes(imu)?)
}
