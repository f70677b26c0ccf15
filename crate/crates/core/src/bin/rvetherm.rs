use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rvetherm::error::ConfigError;
use rvetherm::geometry::generate_rsa;
use rvetherm::grid_io::{export_grid, fractions_csv, import_grid};
use rvetherm::morphology::{carve_defects, voxelize};
use rvetherm::solver::{homogenize, ConductivityField, EffectiveTensor, SolverSettings};
use rvetherm::spec::MorphologySpec;
use rvetherm::stochastic::{confidence_band, defect_seed, run_batch_with, BatchOptions};
use rvetherm::sweep::{load_config, parse_config, run_sweep, SweepConfig};
use rvetherm::validate::run_validation;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rvetherm",
    version,
    about = "Random RVE generation and FFT homogenization of thermal conductivity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Voxels per cell edge.
    #[arg(long)]
    resolution: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    acc: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one geometry and its voxel grid.
    Generate(Common),
    /// Homogenize a grid file.
    Solve {
        /// Grid file written by `generate`.
        grid: PathBuf,
        /// Inclusion over matrix conductivity; defaults to the configuration's.
        #[arg(long)]
        contrast: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a batch of realizations for one spec.
    Batch {
        /// Number of runs, overriding the configuration.
        #[arg(long)]
        runs: Option<usize>,
        /// Keep the run count fixed even for dispersed batches.
        #[arg(long)]
        no_escalate: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Run every point of a parameter sweep.
    Sweep(Common),
    /// Check the solver against closed-form results.
    Validate {
        #[arg(long)]
        acc: Option<f64>,
    },
}

enum Failure {
    Config(String),
    Hard(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn hard(e: impl std::fmt::Display) -> Failure {
    Failure::Hard(e.to_string())
}

/// Configuration from `--config` (or defaults) with command-line overrides.
fn load(common: &Common) -> Result<SweepConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => load_config(path)?,
        None => parse_config("")?,
    };
    if let Some(seed) = common.seed {
        config.base.seed = seed;
    }
    if let Some(w) = common.workers {
        config.workers = w;
    }
    if let Some(n) = common.resolution {
        config.base.resolution = n;
    }
    if let Some(acc) = common.acc {
        config.solver.acc = acc;
    }
    if let Some(out) = &common.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    for warning in config
        .base
        .validate()
        .map_err(|e| Failure::Config(e.to_string()))?
    {
        log::warn!("{warning}");
    }
    Ok(config)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Hard(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<(), Failure> {
    fs::create_dir_all(path).map_err(|e| Failure::Hard(format!("{}: {e}", path.display())))
}

fn print_tensor(t: &EffectiveTensor) {
    for row in &t.matrix {
        println!("{:>14.8} {:>14.8} {:>14.8}", row[0], row[1], row[2]);
    }
    println!(
        "trace/3 {:.8}  iterations {:?}",
        t.trace_mean(),
        t.iterations
    );
}

fn generate(common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let spec: &MorphologySpec = &config.base;
    let geometry = generate_rsa(spec, spec.seed).map_err(hard)?;
    let mut grid = voxelize(
        &geometry,
        spec.resolution,
        spec.wave,
        spec.corrugation_periods,
    );
    if spec.f_def > 0.0 {
        grid =
            carve_defects(&grid, spec.f_def, spec.n_def, defect_seed(spec.seed)).map_err(hard)?;
    }
    let out = &config.output_dir;
    create_dir(out)?;
    write(&out.join("geometry.txt"), &geometry.to_text())?;
    export_grid(&grid, &out.join("grid.rveg")).map_err(hard)?;
    write(&out.join("fractions.csv"), &fractions_csv(&grid))?;
    println!(
        "{} spheres, {} cylinders; analytic fraction {:.6}, voxel fraction {:.6}, defects {:.6}",
        geometry.spheres.len(),
        geometry.cylinders.len(),
        geometry.analytic_fraction(),
        grid.inclusion_fraction(),
        grid.defect_fraction_measured
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn solve(grid_path: &Path, contrast: Option<f64>, common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    let grid = import_grid(grid_path).map_err(hard)?;
    let contrast = contrast.unwrap_or(config.base.contrast);
    let field =
        ConductivityField::new(&grid, contrast).map_err(|e| Failure::Config(e.to_string()))?;
    let settings: SolverSettings = config.solver;
    let tensor = homogenize(&field, &settings).map_err(hard)?;
    print_tensor(&tensor);
    if common.out.is_some() {
        let out = &config.output_dir;
        create_dir(out)?;
        write(
            &out.join("tensor.csv"),
            &format!("{}\n{}\n", EffectiveTensor::CSV_HEADER, tensor.to_csv_row()),
        )?;
    }
    Ok(())
}

fn batch(runs: Option<usize>, no_escalate: bool, common: &Common) -> Result<(), Failure> {
    let config = load(common)?;
    if !config.axes.is_empty() {
        return Err(Failure::Config(
            "the configuration has sweep axes; use `sweep`".into(),
        ));
    }
    let spec = &config.base;
    let n = runs.unwrap_or(spec.runs);
    let options = BatchOptions {
        solver: config.solver,
        workers: config.workers,
        escalation: if no_escalate { None } else { config.escalation },
        grid_dir: None,
    };
    let result = run_batch_with(spec, n, spec.seed, &options).map_err(hard)?;
    let out = &config.output_dir;
    create_dir(out)?;
    write(&out.join("batch.csv"), &result.to_csv())?;
    let q = &result.quartiles;
    println!(
        "lambda_app {:.8}  sigma {:.3e}  runs {}  excluded {}{}",
        result.lambda_app,
        result.sigma,
        result.runs.len(),
        result.failures.len(),
        if result.escalated {
            "  (escalated)"
        } else {
            ""
        }
    );
    if let Ok((lo, hi)) = confidence_band(&result) {
        println!("2-sigma band [{lo:.8}, {hi:.8}]");
    }
    println!(
        "min {:.6}  q1 {:.6}  median {:.6}  q3 {:.6}  max {:.6}  offdiag_ratio {:.3e}",
        q.min, q.q1, q.median, q.q3, q.max, result.offdiag_ratio
    );
    println!("wrote {}", out.join("batch.csv").display());
    Ok(())
}

fn sweep(common: &Common) -> Result<(), Failure> {
    if common.config.is_none() {
        return Err(Failure::Config("sweep needs --config".into()));
    }
    let config = load(common)?;
    let outcome = run_sweep(&config).map_err(hard)?;
    println!(
        "{} points, {} failed; tables in {}",
        outcome.points,
        outcome.failed,
        config.output_dir.display()
    );
    if outcome.failed > 0 {
        return Err(Failure::Hard(format!(
            "{} sweep points failed",
            outcome.failed
        )));
    }
    Ok(())
}

fn validate(acc: Option<f64>) -> Result<(), Failure> {
    let settings = SolverSettings {
        acc: acc.unwrap_or(SolverSettings::default().acc),
        ..Default::default()
    };
    let checks = run_validation(&settings);
    for c in &checks {
        println!(
            "{} {}: error {:.3e} (tolerance {:.0e}); {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.error,
            c.tolerance,
            c.detail
        );
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        return Err(Failure::Hard(format!("{failed} checks failed")));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(common) => generate(common),
        Command::Solve {
            grid,
            contrast,
            common,
        } => solve(grid, *contrast, common),
        Command::Batch {
            runs,
            no_escalate,
            common,
        } => batch(*runs, *no_escalate, common),
        Command::Sweep(common) => sweep(common),
        Command::Validate { acc } => validate(*acc),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Hard(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
