//! Command-line surface.
//!
//! Exit codes: 0 success, 1 scenario or input error, 2 runtime invariant violation.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{metrics_csv, peak_density_map, summarize_metrics, Filter, MetricsReport};
use crate::comms::{coverage_mask, propagation_model, LinkClass};
use crate::engine::{replicate_seed, run, SimError};
use crate::export::{
    class_graymap, coverage_csv, coverage_graymap, density_csv, graymap, regions_csv, trajectories_geojson,
    trajectories_kml,
};
use crate::log::{write_file, LogError, SimulationLog};
use crate::scenario::{parse_scenario, validate, ScenarioConfig, ScenarioError};

/// Scenario copy written next to every log set.
pub const SCENARIO_FILE: &str = "scenario.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const OUT_ENV: &str = "SKYLANE_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("run failed: {0}")]
    Runtime(SimError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Runtime(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "skylane", version, about = "Drone traffic and C2 link simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DensityMode {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrackFormat {
    Kml,
    Geojson,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario for one or more seeds and write logs plus metrics.csv.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Replicate count N (seeds rng_seed..rng_seed+N-1) or an explicit comma-separated seed list.
        #[arg(long, default_value = "1")]
        seeds: String,
        #[arg(long, env = OUT_ENV)]
        out: PathBuf,
    },
    /// Export the peak density map of a log directory as CSV and graymap.
    ExportDensity {
        #[arg(long)]
        out: PathBuf,
        /// Window size W; defaults to the scenario's density_window_w.
        #[arg(long)]
        window: Option<u32>,
        /// Stride S; defaults to the scenario's density_stride_s.
        #[arg(long)]
        stride: Option<u32>,
        #[arg(long, value_enum, default_value = "max")]
        mode: DensityMode,
    },
    /// Export per-cell link-class coverage of a scenario.
    ExportCoverage {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export one timestamped linestring per launched mission.
    ExportTrajectories {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "geojson")]
        format: TrackFormat,
    },
}

/// Seed list from `N` (count) or `a,b,c` (explicit seeds).
pub fn parse_seeds(spec: &str, base: u64) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Input(format!("invalid --seeds value {spec:?}"));
    let seeds: Vec<u64> = if spec.contains(',') {
        spec.split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        let n: u64 = spec.trim().parse().map_err(|_| bad())?;
        (0..n).map(|k| replicate_seed(base, k)).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read scenario {}: {e}", path.display())))?;
    let config = parse_scenario(&text)?;
    let report = validate(&config);
    if !report.is_empty() {
        return Err(CliError::Invalid(report));
    }
    Ok(config)
}

/// Scenario stored with a log directory.
fn log_scenario(dir: &Path) -> Result<ScenarioConfig, CliError> {
    let path = dir.join(SCENARIO_FILE);
    if !path.is_file() {
        return Err(CliError::Input(format!("missing {}", path.display())));
    }
    load_scenario(&path)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))
}

/// Run every seed (concurrently) and write `seed_<n>/` log sets plus `metrics.csv`.
pub fn cmd_run(scenario: &Path, seeds: &str, out: &Path) -> Result<Vec<MetricsReport>, CliError> {
    let config = load_scenario(scenario)?;
    let seeds = parse_seeds(seeds, config.rng_seed)?;

    let runs: Vec<(ScenarioConfig, SimulationLog)> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = ScenarioConfig {
                rng_seed: seed,
                ..config.clone()
            };
            run(&cfg).map(|log| (cfg, log))
        })
        .collect::<Result<_, _>>()
        .map_err(CliError::Runtime)?;

    create_dir(out)?;
    let mut reports = Vec::with_capacity(runs.len());
    for (cfg, log) in &runs {
        let dir = out.join(format!("seed_{}", cfg.rng_seed));
        create_dir(&dir)?;
        write_file(&dir.join(SCENARIO_FILE), &cfg.to_toml()?)?;
        log.write_dir(&dir)?;
        reports.push(summarize_metrics(log, cfg.step_seconds));
    }
    write_file(&out.join(METRICS_FILE), &metrics_csv(&reports))?;
    Ok(reports)
}

/// Write `density_<mode>_w<W>_s<S>.{csv,pgm}` and `regions.csv` into the log directory.
pub fn cmd_export_density(
    dir: &Path,
    window: Option<u32>,
    stride: Option<u32>,
    mode: DensityMode,
) -> Result<PathBuf, CliError> {
    let config = log_scenario(dir)?;
    let log = SimulationLog::read_dir(dir)?;
    let window = window.unwrap_or(config.density_window_w);
    let stride = stride.unwrap_or(config.density_stride_s);
    if window == 0 || stride == 0 {
        return Err(CliError::Input("window and stride must be >= 1".into()));
    }
    let (filter, name) = match mode {
        DensityMode::Sum => (Filter::Sum, "sum"),
        DensityMode::Max => (Filter::Max, "max"),
    };
    let map = peak_density_map(&log.positions, config.grid(), window, stride, filter);
    let stem = format!("density_{name}_w{window}_s{stride}");
    write_file(&dir.join(format!("{stem}.csv")), &density_csv(&map))?;
    write_file(&dir.join(format!("{stem}.pgm")), &graymap(&map.to_dense()))?;
    write_file(&dir.join("regions.csv"), &regions_csv(&config))?;
    Ok(dir.join(format!("{stem}.csv")))
}

/// Write `coverage.csv`, `coverage.pgm` and one mask graymap per class into `out`.
pub fn cmd_export_coverage(scenario: &Path, out: &Path) -> Result<(), CliError> {
    let config = load_scenario(scenario)?;
    let model = propagation_model(&config.path_loss).map_err(|e| CliError::Input(e.to_string()))?;
    let map = coverage_mask(
        &config.base_stations,
        &*model,
        &config.path_loss,
        config.grid(),
        config.cell_size_m,
    );
    create_dir(out)?;
    write_file(&out.join("coverage.csv"), &coverage_csv(&map))?;
    write_file(&out.join("coverage.pgm"), &coverage_graymap(&map))?;
    for class in [LinkClass::Good, LinkClass::Poor, LinkClass::NoLink] {
        write_file(&out.join(format!("coverage_{class}.pgm")), &class_graymap(&map, class))?;
    }
    Ok(())
}

/// Write `trajectories.kml` or `trajectories.geojson` into the log directory.
pub fn cmd_export_trajectories(dir: &Path, format: TrackFormat) -> Result<PathBuf, CliError> {
    let config = log_scenario(dir)?;
    let log = SimulationLog::read_dir(dir)?;
    let (name, text) = match format {
        TrackFormat::Kml => ("trajectories.kml", trajectories_kml(&log, &config)),
        TrackFormat::Geojson => ("trajectories.geojson", trajectories_geojson(&log, &config)),
    };
    let path = dir.join(name);
    write_file(&path, &text)?;
    Ok(path)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, seeds, out } => {
            let reports = cmd_run(&scenario, &seeds, &out)?;
            eprintln!("wrote {} run(s) to {}", reports.len(), out.display());
        }
        Command::ExportDensity {
            out,
            window,
            stride,
            mode,
        } => {
            let path = cmd_export_density(&out, window, stride, mode)?;
            eprintln!("wrote {}", path.display());
        }
        Command::ExportCoverage { scenario, out } => cmd_export_coverage(&scenario, &out)?,
        Command::ExportTrajectories { out, format } => {
            let path = cmd_export_trajectories(&out, format)?;
            eprintln!("wrote {}", path.display());
        }
    }
    Ok(())
}

/// Parse arguments and run; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
