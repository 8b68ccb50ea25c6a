//! The four subcommands, independent of argument parsing.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ruled_odometry::pipeline::{run_pipeline, HoughLine, PipelineConfig, PipelineInput, PipelineOutput};
use ruled_odometry::sim::{synthesize, ScenarioSpec};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_simulation, Dataset, TruthFile, CONFIG_FILE, TRUTH_FILE};
use crate::error::{CliError, Result};
use crate::files::{apply_overrides, csv_bytes, read_csv, read_json, write_atomic, write_json};
use crate::report::{
    evaluate_files, trajectory_svg, Evaluation, LineRow, Timing, TrajectoryRow, WindowRecord, LINES_HEADER,
    TRAJECTORY_HEADER,
};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const LINES_FILE: &str = "lines.csv";
pub const WINDOWS_FILE: &str = "windows.jsonl";
pub const RUN_FILE: &str = "run.json";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_TRAJECTORY_FILE: &str = "plot_trajectory.csv";
pub const PLOT_DIRECTRIX_FILE: &str = "plot_directrix.csv";
pub const PLOT_DIRECTIONS_FILE: &str = "plot_directions.csv";
pub const SVG_FILE: &str = "trajectory.svg";

/// Where a scenario comes from.
#[derive(Debug, Clone)]
pub enum SpecSource {
    File(PathBuf),
    Preset(String),
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub source: SpecSource,
    pub overrides: Vec<String>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EstimateArgs {
    pub dataset: PathBuf,
    /// Replaces the dataset's `config.json`.
    pub config: Option<PathBuf>,
    pub overrides: Vec<String>,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub estimate: PathBuf,
    /// Dataset directory or `truth.json` file.
    pub truth: PathBuf,
    /// Defaults to the estimate directory.
    pub out: Option<PathBuf>,
    pub svg: bool,
}

/// Summary written next to the estimate outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    pub windows: usize,
    pub detections: Vec<HoughLine>,
    pub warnings: Vec<String>,
    /// Wall-clock time (s).
    pub elapsed_s: f64,
}

pub fn load_spec(source: &SpecSource, overrides: &[String]) -> Result<ScenarioSpec> {
    let base = match source {
        SpecSource::File(path) => read_json(path)?,
        SpecSource::Preset(name) => ScenarioSpec::preset(name).map_err(|e| CliError::Input(e.to_string()))?,
    };
    let spec: ScenarioSpec = apply_overrides(&base, overrides)?;
    spec.validate().map_err(|e| match source {
        SpecSource::File(path) => CliError::format(path, e),
        SpecSource::Preset(name) => CliError::Input(format!("preset `{name}`: {e}")),
    })?;
    Ok(spec)
}

pub fn simulate(args: &SimulateArgs) -> Result<ScenarioSpec> {
    let spec = load_spec(&args.source, &args.overrides)?;
    let sim = synthesize(&spec)?;
    write_simulation(&args.out, &sim, &spec, &PipelineConfig::default())?;
    Ok(spec)
}

/// Config precedence: defaults, then the dataset's `config.json`, then an
/// explicit config file, then `key=value` overrides.
pub fn effective_config(dataset: &Dataset, file: Option<&Path>, overrides: &[String]) -> Result<PipelineConfig> {
    let base = match file {
        Some(path) => read_json(path)?,
        None => dataset.config.clone().unwrap_or_default(),
    };
    apply_overrides(&base, overrides)
}

fn write_windows(path: &Path, records: &[String]) -> Result<()> {
    let mut text = records.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

/// Runs the pipeline on a dataset. Window diagnostics are written even when
/// the run fails part way.
pub fn estimate(args: &EstimateArgs) -> Result<PipelineOutput> {
    let mut dataset = Dataset::load(&args.dataset)?;
    let config = effective_config(&dataset, args.config.as_deref(), &args.overrides)?;
    dataset.reharvest(config.detection.hough.edge_threshold);
    fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    write_json(&args.out.join(CONFIG_FILE), &config)?;

    let started = Instant::now();
    let input = PipelineInput {
        imu: &dataset.imu,
        frames: &dataset.frames,
        rasters: dataset.rasters.as_deref(),
        intrinsics: dataset.intrinsics,
        initial: None,
    };
    let mut records = Vec::new();
    let result = run_pipeline(&input, &config, &mut |w| {
        let record = WindowRecord {
            index: w.index,
            diagnostics: w.diagnostics.clone(),
        };
        records.push(serde_json::to_string(&record).unwrap_or_default());
    });
    write_windows(&args.out.join(WINDOWS_FILE), &records)?;
    let output = result?;
    let elapsed_s = started.elapsed().as_secs_f64();

    let odo = &output.odometry;
    let rows = odo.timestamps.iter().zip(&odo.positions).map(|(&t, p)| TrajectoryRow { t, x: p.x, y: p.y, z: p.z });
    write_atomic(&args.out.join(TRAJECTORY_FILE), &csv_bytes(rows)?)?;
    let lines = odo.window_lines.iter().flat_map(|w| {
        w.camera
            .iter()
            .zip(&w.basis)
            .enumerate()
            .map(move |(l, (c, b))| LineRow::new(w.t_start, l, c, b))
    });
    write_atomic(&args.out.join(LINES_FILE), &csv_bytes(lines)?)?;
    let summary = RunSummary {
        frames: dataset.frames.len(),
        windows: output.windows.len(),
        detections: output.detections.iter().map(|d| d.hough).collect(),
        warnings: output.warnings.clone(),
        elapsed_s,
    };
    write_json(&args.out.join(RUN_FILE), &summary)?;
    Ok(output)
}

fn load_truth(path: &Path) -> Result<TruthFile> {
    if path.is_dir() {
        let file = path.join(TRUTH_FILE);
        if !file.is_file() {
            return Err(CliError::Input(format!("{} has no {TRUTH_FILE}", path.display())));
        }
        read_json(&file)
    } else {
        read_json(path)
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::format(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Compares estimate files against truth and writes the report and plot
/// data. Only files are read, never estimator state.
pub fn evaluate(args: &EvaluateArgs) -> Result<Evaluation> {
    let dir = &args.estimate;
    let trajectory: Vec<TrajectoryRow> = read_csv(&dir.join(TRAJECTORY_FILE), &TRAJECTORY_HEADER)?;
    let lines_path = dir.join(LINES_FILE);
    let lines: Vec<LineRow> = if lines_path.is_file() { read_csv(&lines_path, &LINES_HEADER)? } else { Vec::new() };
    let windows_path = dir.join(WINDOWS_FILE);
    let windows: Vec<WindowRecord> = if windows_path.is_file() { read_jsonl(&windows_path)? } else { Vec::new() };
    let run_path = dir.join(RUN_FILE);
    let timing = if run_path.is_file() {
        let run: RunSummary = read_json(&run_path)?;
        Some(Timing { estimate_s: run.elapsed_s })
    } else {
        None
    };
    let truth = load_truth(&args.truth)?;
    let eval = evaluate_files(&trajectory, &lines, &windows, timing, &truth)?;

    let out = args.out.as_ref().unwrap_or(dir);
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    write_json(&out.join(REPORT_FILE), &eval.report)?;
    write_atomic(&out.join(PLOT_TRAJECTORY_FILE), &csv_bytes(&eval.trajectory)?)?;
    write_atomic(&out.join(PLOT_DIRECTRIX_FILE), &csv_bytes(&eval.directrix)?)?;
    write_atomic(&out.join(PLOT_DIRECTIONS_FILE), &csv_bytes(&eval.directions)?)?;
    if args.svg {
        write_atomic(&out.join(SVG_FILE), trajectory_svg(&eval.trajectory)?.as_bytes())?;
    }
    Ok(eval)
}

/// Human-readable dataset summary.
pub fn inspect(dir: &Path, per_frame: bool) -> Result<String> {
    let dataset = Dataset::load(dir)?;
    let imu = &dataset.imu;
    let counts: Vec<usize> = dataset.frames.iter().map(|f| f.observations.len()).collect();
    let total: usize = counts.iter().sum();
    let mut s = String::new();
    let _ = writeln!(s, "dataset: {}", dir.display());
    let _ = writeln!(s, "frames: {}", dataset.frames.len());
    if let (Some(first), Some(last)) = (dataset.frames.first(), dataset.frames.last()) {
        let _ = writeln!(s, "frame span: {:.6} s to {:.6} s", first.t, last.t);
    }
    let _ = writeln!(s, "imu: {} samples at {:.3} Hz", imu.samples().len(), imu.sample_rate_hint());
    let _ = writeln!(s, "imu span: {:.6} s to {:.6} s", imu.start(), imu.end());
    if !counts.is_empty() {
        let _ = writeln!(
            s,
            "observations per frame: min {}, mean {:.1}, max {} (total {total})",
            counts.iter().min().unwrap_or(&0),
            total as f64 / counts.len() as f64,
            counts.iter().max().unwrap_or(&0),
        );
    }
    if per_frame {
        for (f, n) in dataset.frames.iter().zip(&counts) {
            let _ = writeln!(s, "  t = {:.6} s: {n}", f.t);
        }
    }
    let source = if dataset.observed { "observations.csv" } else { "points harvested from rasters" };
    let _ = writeln!(s, "points: {source}");
    match &dataset.rasters {
        Some(r) => {
            let _ = writeln!(s, "rasters: {}", r.len());
        }
        None => {
            let _ = writeln!(s, "rasters: none");
        }
    }
    let k = &dataset.intrinsics;
    let _ = writeln!(
        s,
        "intrinsics: fx {} fy {} cx {} cy {} ({}x{})",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height
    );
    let _ = writeln!(s, "truth: {}", if dataset.truth.is_some() { "present" } else { "absent" });
    match &dataset.config {
        Some(c) => {
            let text = serde_json::to_string_pretty(c).map_err(|e| CliError::Input(e.to_string()))?;
            let _ = writeln!(s, "config:\n{text}");
        }
        None => {
            let _ = writeln!(s, "config: defaults");
        }
    }
    Ok(s)
}
