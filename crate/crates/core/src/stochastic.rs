//! Batches of seeded realizations and their statistics.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BatchError, RunError};
use crate::geometry::generate_rsa;
use crate::grid_io::export_grid;
use crate::morphology::{carve_defects, voxelize, PhaseGrid};
use crate::solver::{homogenize, ConductivityField, EffectiveTensor, SolverSettings};
use crate::spec::MorphologySpec;

/// Largest tolerated share of failed runs in a batch.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// 64-bit finalizer of the splitmix generator.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of realization `index` in a batch started from `base_seed`.
pub fn run_seed(base_seed: u64, index: usize) -> u64 {
    splitmix64(base_seed ^ index as u64)
}

/// Seed of the defect stream of a realization.
pub fn defect_seed(run_seed: u64) -> u64 {
    splitmix64(run_seed ^ 0xDEFEC7)
}

/// Geometry, voxelization and defect carving for one seed.
pub fn realize(spec: &MorphologySpec, seed: u64) -> Result<PhaseGrid, RunError> {
    let geometry = generate_rsa(spec, seed)?;
    let grid = voxelize(
        &geometry,
        spec.resolution,
        spec.wave,
        spec.corrugation_periods,
    );
    if spec.f_def > 0.0 {
        Ok(carve_defects(
            &grid,
            spec.f_def,
            spec.n_def,
            defect_seed(seed),
        )?)
    } else {
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub seed: u64,
    pub tensor: EffectiveTensor,
    pub inclusion_fraction: f64,
    pub defect_fraction: f64,
}

impl RunRecord {
    /// Homogenizes an already realized grid.
    pub fn solve(
        index: usize,
        seed: u64,
        grid: &PhaseGrid,
        contrast: f64,
        settings: &SolverSettings,
    ) -> Result<Self, RunError> {
        let field = ConductivityField::new(grid, contrast)?;
        let tensor = homogenize(&field, settings)?;
        Ok(Self {
            index,
            seed,
            tensor,
            inclusion_fraction: grid.inclusion_fraction(),
            defect_fraction: grid.defect_fraction_measured,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub seed: u64,
    pub error: String,
}

/// Full pipeline for one realization.
pub fn run_one(
    spec: &MorphologySpec,
    index: usize,
    seed: u64,
    settings: &SolverSettings,
) -> Result<RunRecord, RunError> {
    let grid = realize(spec, seed)?;
    RunRecord::solve(index, seed, &grid, spec.contrast, settings)
}

/// Min, lower quartile, median, upper quartile, max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Quantile by linear interpolation between order statistics of `sorted`
/// (position `p * (n - 1)`).
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Five-number summary; `values` must be non-empty.
pub fn five_number(values: &[f64]) -> FiveNumber {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    FiveNumber {
        min: sorted[0],
        q1: quantile(&sorted, 0.25),
        median: quantile(&sorted, 0.5),
        q3: quantile(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (`n - 1` denominator), 0 for a single value.
pub fn sample_sigma(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Mean over runs of one third of the trace.
pub fn lambda_app(tensors: &[EffectiveTensor]) -> Result<f64, BatchError> {
    if tensors.is_empty() {
        return Err(BatchError::Empty);
    }
    let traces: Vec<f64> = tensors.iter().map(EffectiveTensor::trace_mean).collect();
    Ok(mean(&traces))
}

/// Mean absolute off-diagonal entry over mean diagonal entry.
pub fn offdiag_ratio(tensors: &[EffectiveTensor]) -> f64 {
    let (mut off, mut diag) = (0.0, 0.0);
    for t in tensors {
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    diag += t.matrix[i][j];
                } else {
                    off += t.matrix[i][j].abs();
                }
            }
        }
    }
    (off / 6.0) / (diag / 3.0)
}

/// Automatic increase of the run count for dispersed batches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Escalation {
    /// Escalate when `sigma / lambda_app` exceeds this.
    pub threshold: f64,
    /// Run count after escalation.
    pub runs: usize,
}

impl Default for Escalation {
    fn default() -> Self {
        Self {
            threshold: 0.05,
            runs: 20,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOptions {
    pub solver: SolverSettings,
    /// Worker threads; 0 uses the current pool.
    pub workers: usize,
    pub escalation: Option<Escalation>,
    /// Directory receiving each realization's grid as `run_NNN.rveg`.
    pub grid_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub spec: MorphologySpec,
    pub base_seed: u64,
    /// Successful runs in index order.
    pub runs: Vec<RunRecord>,
    pub failures: Vec<RunFailure>,
    pub lambda_app: f64,
    pub sigma: f64,
    pub quartiles: FiveNumber,
    pub offdiag_ratio: f64,
    pub escalated: bool,
}

impl BatchResult {
    /// Aggregates runs. Fails when none succeeded or more than 20% failed.
    pub fn from_runs(
        spec: MorphologySpec,
        base_seed: u64,
        mut runs: Vec<RunRecord>,
        mut failures: Vec<RunFailure>,
    ) -> Result<Self, BatchError> {
        runs.sort_by_key(|r| r.index);
        failures.sort_by_key(|f| f.index);
        let total = runs.len() + failures.len();
        if total == 0 {
            return Err(BatchError::NoRuns);
        }
        if failures.len() as f64 > MAX_FAILURE_FRACTION * total as f64 {
            return Err(BatchError::TooManyFailures {
                failed: failures.len(),
                total,
                first: format!("run {}: {}", failures[0].index, failures[0].error),
            });
        }
        let tensors: Vec<EffectiveTensor> = runs.iter().map(|r| r.tensor.clone()).collect();
        let per_run = traces(&runs);
        Ok(Self {
            lambda_app: lambda_app(&tensors)?,
            sigma: sample_sigma(&per_run),
            quartiles: five_number(&per_run),
            offdiag_ratio: offdiag_ratio(&tensors),
            spec,
            base_seed,
            runs,
            failures,
            escalated: false,
        })
    }

    pub fn tensors(&self) -> impl Iterator<Item = &EffectiveTensor> {
        self.runs.iter().map(|r| &r.tensor)
    }

    /// Per-run one third of the trace, in run order.
    pub fn traces(&self) -> Vec<f64> {
        traces(&self.runs)
    }

    /// Mean of each diagonal entry over runs.
    pub fn diagonal_means(&self) -> [f64; 3] {
        let mut d = [0.0; 3];
        for t in self.tensors() {
            for (acc, v) in d.iter_mut().zip(t.diagonal()) {
                *acc += v;
            }
        }
        d.map(|v| v / self.runs.len() as f64)
    }

    pub const CSV_HEADER: &'static str = "kind,run,seed,l11,l12,l13,l21,l22,l23,l31,l32,l33,\
trace_mean,iter_1,iter_2,iter_3,eq_1,eq_2,eq_3,inclusion_fraction,defect_fraction,\
lambda_app,sigma,min,q1,median,q3,max,offdiag_ratio,runs,excluded,escalated,error";

    /// Long-format table: one `run` row per realization, one `failed` row per
    /// excluded run and a closing `summary` row. No timing data, so repeated
    /// batches give identical bytes.
    pub fn to_csv(&self) -> String {
        const RUN_COLS: usize = 18;
        const SUMMARY_COLS: usize = 11;
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.runs {
            let t = &r.tensor;
            let mut cols: Vec<String> = vec!["run".into(), r.index.to_string(), r.seed.to_string()];
            cols.extend(t.matrix.iter().flatten().map(f64::to_string));
            cols.push(t.trace_mean().to_string());
            cols.extend(t.iterations.iter().map(usize::to_string));
            cols.extend(t.eq_residuals.iter().map(f64::to_string));
            cols.push(r.inclusion_fraction.to_string());
            cols.push(r.defect_fraction.to_string());
            cols.extend(std::iter::repeat_n(String::new(), SUMMARY_COLS + 1));
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        for f in &self.failures {
            let mut cols: Vec<String> =
                vec!["failed".into(), f.index.to_string(), f.seed.to_string()];
            cols.extend(std::iter::repeat_n(String::new(), RUN_COLS + SUMMARY_COLS));
            cols.push(csv_text(&f.error));
            out.push_str(&cols.join(","));
            out.push('\n');
        }
        let q = &self.quartiles;
        let mut cols: Vec<String> =
            vec!["summary".into(), String::new(), self.base_seed.to_string()];
        cols.extend(std::iter::repeat_n(String::new(), RUN_COLS));
        for v in [
            self.lambda_app,
            self.sigma,
            q.min,
            q.q1,
            q.median,
            q.q3,
            q.max,
            self.offdiag_ratio,
        ] {
            cols.push(v.to_string());
        }
        cols.push(self.runs.len().to_string());
        cols.push(self.failures.len().to_string());
        cols.push(self.escalated.to_string());
        cols.push(String::new());
        let _ = writeln!(out, "{}", cols.join(","));
        out
    }
}

fn traces(runs: &[RunRecord]) -> Vec<f64> {
    runs.iter().map(|r| r.tensor.trace_mean()).collect()
}

/// Quotes a free-text CSV field.
fn csv_text(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

/// `(lambda_app - 2 sigma, lambda_app + 2 sigma)`.
pub fn confidence_band(result: &BatchResult) -> Result<(f64, f64), BatchError> {
    if result.runs.len() < 2 {
        return Err(BatchError::InsufficientRuns(result.runs.len()));
    }
    Ok((
        result.lambda_app - 2.0 * result.sigma,
        result.lambda_app + 2.0 * result.sigma,
    ))
}

pub fn boxplot_stats(result: &BatchResult) -> FiveNumber {
    result.quartiles
}

/// `n` realizations with default solver settings and no escalation.
pub fn run_batch(
    spec: &MorphologySpec,
    n: usize,
    base_seed: u64,
) -> Result<BatchResult, BatchError> {
    run_batch_with(spec, n, base_seed, &BatchOptions::default())
}

fn run_indexed(
    spec: &MorphologySpec,
    index: usize,
    seed: u64,
    options: &BatchOptions,
) -> Result<RunRecord, String> {
    let grid = realize(spec, seed).map_err(|e| e.to_string())?;
    if let Some(dir) = &options.grid_dir {
        let path: &Path = &dir.join(format!("run_{index:03}.rveg"));
        export_grid(&grid, path).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    RunRecord::solve(index, seed, &grid, spec.contrast, &options.solver).map_err(|e| e.to_string())
}

fn run_range(
    spec: &MorphologySpec,
    range: std::ops::Range<usize>,
    base_seed: u64,
    options: &BatchOptions,
) -> (Vec<RunRecord>, Vec<RunFailure>) {
    let job = || {
        range
            .into_par_iter()
            .map(|i| {
                let seed = run_seed(base_seed, i);
                run_indexed(spec, i, seed, options).map_err(|error| {
                    log::warn!("run {i} (seed {seed}) excluded: {error}");
                    RunFailure {
                        index: i,
                        seed,
                        error,
                    }
                })
            })
            .collect::<Vec<_>>()
    };
    let workers = options.workers;
    let outcomes = if workers == 0 {
        job()
    } else {
        match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            Ok(pool) => pool.install(job),
            Err(e) => {
                log::warn!("worker pool unavailable ({e}), using the global pool");
                job()
            }
        }
    };
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok(r) => runs.push(r),
            Err(f) => failures.push(f),
        }
    }
    (runs, failures)
}

/// Runs realizations `0..n` (seed `splitmix64(base_seed ^ i)`), then
/// escalates to the configured run count when the relative dispersion is
/// above threshold. Statistics never depend on completion order.
pub fn run_batch_with(
    spec: &MorphologySpec,
    n: usize,
    base_seed: u64,
    options: &BatchOptions,
) -> Result<BatchResult, BatchError> {
    if n == 0 {
        return Err(BatchError::NoRuns);
    }
    spec.validate()?;
    let (mut runs, mut failures) = run_range(spec, 0..n, base_seed, options);
    let mut result =
        BatchResult::from_runs(spec.clone(), base_seed, runs.clone(), failures.clone())?;
    if let Some(esc) = options.escalation {
        if esc.runs > n && result.sigma > esc.threshold * result.lambda_app.abs() {
            log::info!(
                "sigma/lambda_app = {:.4} above {}: escalating from {n} to {} runs",
                result.sigma / result.lambda_app,
                esc.threshold,
                esc.runs
            );
            let (more_runs, more_failures) = run_range(spec, n..esc.runs, base_seed, options);
            runs.extend(more_runs);
            failures.extend(more_failures);
            result = BatchResult::from_runs(spec.clone(), base_seed, runs, failures)?;
            result.escalated = true;
        }
    }
    Ok(result)
}
