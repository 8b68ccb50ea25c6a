use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ruled_odometry::sim::ScenarioSpec;
use ruled_odometry_cli::commands::{self, EstimateArgs, EvaluateArgs, SimulateArgs, SpecSource};
use ruled_odometry_cli::CliError;

/// Correspondence-free visual-inertial odometry from ruled surfaces.
#[derive(Debug, Parser)]
#[command(name = "ruled-odometry", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario file or a preset.
    Simulate(SimulateCmd),
    /// Estimate the camera trajectory of a dataset.
    Estimate(EstimateCmd),
    /// Compare an estimate with ground truth; writes report.json and plot data.
    Evaluate(EvaluateCmd),
    /// Print a summary of a dataset.
    Inspect(InspectCmd),
}

#[derive(Debug, Args)]
struct SimulateCmd {
    /// Scenario JSON file; omitted fields take their defaults.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    spec: Option<PathBuf>,
    /// Named scenario (linear, rotation, zigzag, square, noiseless).
    #[arg(long)]
    preset: Option<String>,
    /// Override a scenario field, e.g. `--set duration=2` or `--set noise.accel_sigma=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output dataset directory.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EstimateCmd {
    /// Dataset directory.
    dataset: PathBuf,
    /// Pipeline config JSON; replaces the dataset's config.json.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set window_frames=100` or `--set solver.seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for trajectory.csv, lines.csv, windows.jsonl and run.json.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateCmd {
    /// Directory written by `estimate`.
    estimate: PathBuf,
    /// Dataset directory or truth.json file.
    #[arg(long)]
    truth: PathBuf,
    /// Output directory; defaults to the estimate directory.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write trajectory.svg.
    #[arg(long)]
    svg: bool,
}

#[derive(Debug, Args)]
struct InspectCmd {
    /// Dataset directory.
    dataset: PathBuf,
    /// List the observation count of every frame.
    #[arg(long)]
    per_frame: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(c) => {
            let source = match (c.spec, c.preset) {
                (Some(path), _) => SpecSource::File(path),
                (None, Some(name)) => SpecSource::Preset(name),
                (None, None) => {
                    return Err(CliError::Input(format!(
                        "give --spec or --preset ({})",
                        ScenarioSpec::PRESETS.join(", ")
                    )))
                }
            };
            let spec = commands::simulate(&SimulateArgs { source, overrides: c.overrides, out: c.out.clone() })?;
            println!(
                "wrote {} frames over {} s to {}",
                spec.frame_count(),
                spec.duration,
                c.out.display()
            );
        }
        Command::Estimate(c) => {
            let out = commands::estimate(&EstimateArgs {
                dataset: c.dataset,
                config: c.config,
                overrides: c.overrides,
                out: c.out.clone(),
            })?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{} windows, {} trajectory samples written to {}",
                out.windows.len(),
                out.odometry.timestamps.len(),
                c.out.display()
            );
        }
        Command::Evaluate(c) => {
            let eval = commands::evaluate(&EvaluateArgs { estimate: c.estimate, truth: c.truth, out: c.out, svg: c.svg })?;
            let t = &eval.report.trajectory;
            println!("axis  mean (m)  std (m)");
            for (name, s) in ["X", "Y", "Z"].iter().zip(t.axes()) {
                println!("{name}     {:.4}    {:.4}", s.mean, s.std);
            }
        }
        Command::Inspect(c) => print!("{}", commands::inspect(&c.dataset, c.per_frame)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
