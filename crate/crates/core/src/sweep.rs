//! Parameter sweeps described by TOML configuration files.
//!
//! ```toml
//! output_dir = "out"
//! workers = 2
//!
//! [spec]
//! n_sp = 20
//! f_sp = 0.1
//! runs = 5
//!
//! [solver]
//! acc = 1e-6
//!
//! [[axes]]
//! name = "contrast"
//! octaves = [-4, 11]
//!
//! [[axes]]
//! name = "a"
//! values = [3, 6, 9, 12]
//! ```
//!
//! Every point of the cartesian product of the axes runs one batch with the
//! base seed of `[spec]`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::solver::SolverSettings;
use crate::spec::MorphologySpec;
use crate::stochastic::{run_batch_with, BatchOptions, BatchResult, Escalation};

pub const DEFAULT_MAX_POINTS: usize = 10_000;

/// Parameters an axis may vary.
pub const AXIS_NAMES: [&str; 10] = [
    "n_sp",
    "n_cyl",
    "n_def",
    "f_sp",
    "f_cyl",
    "f_def",
    "a",
    "wave",
    "contrast",
    "resolution",
];

const INTEGER_AXES: [&str; 4] = ["n_sp", "n_cyl", "n_def", "resolution"];

/// Short description and unit of each axis, for plot-file headers.
fn axis_unit(name: &str) -> &'static str {
    match name {
        "n_sp" | "n_cyl" | "n_def" => "count",
        "f_sp" | "f_cyl" | "f_def" => "volume fraction of the cell",
        "a" => "cylinder length over diameter",
        "wave" => "relative corrugation amplitude",
        "contrast" => "inclusion over matrix conductivity",
        "resolution" => "voxels per edge",
        _ => "",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub base: MorphologySpec,
    pub solver: SolverSettings,
    pub axes: Vec<Axis>,
    pub output_dir: PathBuf,
    pub emit_grids: bool,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub max_points: usize,
    pub escalation: Option<Escalation>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisDoc {
    name: String,
    values: Option<Vec<f64>>,
    /// Inclusive range of powers of two.
    octaves: Option<[i32; 2]>,
}

fn default_true() -> bool {
    true
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("rvetherm-out")
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDoc {
    #[serde(default)]
    spec: MorphologySpec,
    #[serde(default)]
    solver: SolverSettings,
    #[serde(default)]
    axes: Vec<AxisDoc>,
    #[serde(default = "default_output_dir")]
    output_dir: PathBuf,
    #[serde(default)]
    emit_grids: bool,
    #[serde(default)]
    workers: usize,
    #[serde(default = "default_max_points")]
    max_points: usize,
    #[serde(default = "default_true")]
    escalate: bool,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn axis_values(doc: &AxisDoc) -> Result<Vec<f64>, ConfigError> {
    let bad = |msg: &str| ConfigError::BadAxis {
        name: doc.name.clone(),
        msg: msg.to_string(),
    };
    let values = match (&doc.values, doc.octaves) {
        (Some(v), None) => v.clone(),
        (None, Some([lo, hi])) => {
            if lo > hi {
                return Err(bad("octave range is reversed"));
            }
            (lo..=hi).map(|k| 2f64.powi(k)).collect()
        }
        _ => return Err(bad("give exactly one of `values` or `octaves`")),
    };
    if values.is_empty() {
        return Err(bad("no values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("values must be finite"));
    }
    if INTEGER_AXES.contains(&doc.name.as_str())
        && values.iter().any(|v| *v < 0.0 || v.fract() != 0.0)
    {
        return Err(bad("values must be non-negative integers"));
    }
    Ok(values)
}

/// Sets parameter `name` of `spec`; `name` must be one of [`AXIS_NAMES`].
pub fn set_parameter(spec: &mut MorphologySpec, name: &str, value: f64) {
    match name {
        "n_sp" => spec.n_sp = value as usize,
        "n_cyl" => spec.n_cyl = value as usize,
        "n_def" => spec.n_def = value as usize,
        "f_sp" => spec.f_sp = value,
        "f_cyl" => spec.f_cyl = value,
        "f_def" => spec.f_def = value,
        "a" => spec.aspect_ratio = value,
        "wave" => spec.wave = value,
        "contrast" => spec.contrast = value,
        "resolution" => spec.resolution = value as usize,
        _ => unreachable!("axis names are checked at parse time"),
    }
}

/// Parses and validates a sweep configuration. Every point of the sweep must
/// be a valid spec.
pub fn parse_config(text: &str) -> Result<SweepConfig, ConfigError> {
    let doc: ConfigDoc = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        ConfigError::Parse {
            line,
            column,
            msg: e.message().to_string(),
        }
    })?;
    let mut axes = Vec::with_capacity(doc.axes.len());
    for a in &doc.axes {
        if !AXIS_NAMES.contains(&a.name.as_str()) {
            return Err(ConfigError::UnknownAxis(a.name.clone()));
        }
        if axes.iter().any(|x: &Axis| x.name == a.name) {
            return Err(ConfigError::BadAxis {
                name: a.name.clone(),
                msg: "appears twice".into(),
            });
        }
        axes.push(Axis {
            name: a.name.clone(),
            values: axis_values(a)?,
        });
    }
    let config = SweepConfig {
        base: doc.spec,
        solver: doc.solver,
        axes,
        output_dir: doc.output_dir,
        emit_grids: doc.emit_grids,
        workers: doc.workers,
        max_points: doc.max_points,
        escalation: doc.escalate.then(Escalation::default),
    };
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<SweepConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

impl SweepConfig {
    pub fn point_count(&self) -> usize {
        self.axes
            .iter()
            .fold(1usize, |acc, a| acc.saturating_mul(a.values.len()))
    }

    /// Size cap, solver settings and every point spec.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let points = self.point_count();
        if points > self.max_points {
            return Err(ConfigError::TooManyPoints {
                points,
                cap: self.max_points,
            });
        }
        if !(self.solver.acc > 0.0 && self.solver.acc.is_finite()) {
            return Err(ConfigError::Setting {
                name: "solver.acc".into(),
                msg: format!("{} must be finite and > 0", self.solver.acc),
            });
        }
        for (_, spec) in self.points() {
            spec.validate()?;
        }
        Ok(())
    }

    /// Axis values and spec of every point, last axis varying fastest.
    pub fn points(&self) -> Vec<(Vec<f64>, MorphologySpec)> {
        let mut out = vec![(Vec::new(), self.base.clone())];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|(coords, spec)| {
                    axis.values.iter().map(move |&v| {
                        let mut spec = spec.clone();
                        set_parameter(&mut spec, &axis.name, v);
                        let mut coords = coords.clone();
                        coords.push(v);
                        (coords, spec)
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
struct ManifestPoint {
    point: usize,
    coordinates: BTreeMap<String, f64>,
    base_seed: u64,
    run_seeds: Vec<u64>,
    status: String,
    wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    tool: &'static str,
    version: &'static str,
    started_unix_s: u64,
    wall_time_s: f64,
    base: MorphologySpec,
    solver: SolverSettings,
    axes: Vec<Axis>,
    escalation: Option<Escalation>,
    points: Vec<ManifestPoint>,
}

/// Outcome of a sweep; the output directory holds the files.
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub points: usize,
    pub failed: usize,
    pub results: Vec<Result<BatchResult, String>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ConfigError + '_ {
    move |source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, contents: &str) -> Result<(), ConfigError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn point_stem(index: usize) -> String {
    format!("point_{index:04}")
}

fn format_coord(v: f64) -> String {
    v.to_string()
}

/// Runs every point and writes, under `output_dir`:
///
/// * `points/point_NNNN.csv`: the batch table of each point, or
///   `point_NNNN.FAILED` with the error;
/// * `sweep.csv`: one row per point with its coordinates and statistics;
/// * `plot_<axis>.csv`: lambda_app and its 2-sigma band against each axis;
/// * `matrix_<a>_<b>.csv` for two-axis sweeps;
/// * `manifest.json`: seeds, version and timings.
///
/// Only the manifest carries timing information.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepOutcome, ConfigError> {
    config.validate()?;
    let started = Instant::now();
    let started_unix_s = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let out = &config.output_dir;
    let point_dir = out.join("points");
    fs::create_dir_all(&point_dir).map_err(io_err(&point_dir))?;
    let points = config.points();

    let job = |(index, (coords, spec)): (usize, &(Vec<f64>, MorphologySpec))| {
        let start = Instant::now();
        let grid_dir = if config.emit_grids {
            let dir = out.join("grids").join(point_stem(index));
            if let Err(e) = fs::create_dir_all(&dir) {
                return (Err(format!("{}: {e}", dir.display())), 0.0);
            }
            Some(dir)
        } else {
            None
        };
        let options = BatchOptions {
            solver: config.solver,
            workers: 0,
            escalation: config.escalation,
            grid_dir,
        };
        log::info!("point {index}: {coords:?}");
        let result =
            run_batch_with(spec, spec.runs, spec.seed, &options).map_err(|e| e.to_string());
        (result, start.elapsed().as_secs_f64())
    };
    let indexed: Vec<_> = points.iter().enumerate().collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ConfigError::Setting {
            name: "workers".into(),
            msg: e.to_string(),
        })?;
    let outcomes: Vec<(Result<BatchResult, String>, f64)> =
        pool.install(|| indexed.into_par_iter().map(job).collect());

    let mut manifest_points = Vec::with_capacity(points.len());
    for (index, ((coords, spec), (result, wall))) in points.iter().zip(&outcomes).enumerate() {
        let stem = point_stem(index);
        let status = match result {
            Ok(batch) => {
                write(&point_dir.join(format!("{stem}.csv")), &batch.to_csv())?;
                "ok".to_string()
            }
            Err(e) => {
                write(&point_dir.join(format!("{stem}.FAILED")), &format!("{e}\n"))?;
                format!("FAILED: {e}")
            }
        };
        let run_seeds = match result {
            Ok(batch) => batch
                .runs
                .iter()
                .map(|r| r.seed)
                .chain(batch.failures.iter().map(|f| f.seed))
                .collect(),
            Err(_) => Vec::new(),
        };
        manifest_points.push(ManifestPoint {
            point: index,
            coordinates: config
                .axes
                .iter()
                .map(|a| a.name.clone())
                .zip(coords.iter().copied())
                .collect(),
            base_seed: spec.seed,
            run_seeds,
            status,
            wall_time_s: *wall,
        });
    }

    let results: Vec<Result<BatchResult, String>> = outcomes.into_iter().map(|(r, _)| r).collect();
    write(
        &out.join("sweep.csv"),
        &combined_table(config, &points, &results),
    )?;
    for (k, axis) in config.axes.iter().enumerate() {
        write(
            &out.join(format!("plot_{}.csv", axis.name)),
            &plot_table(config, k, &points, &results),
        )?;
    }
    if config.axes.len() == 2 {
        let (a, b) = (&config.axes[0], &config.axes[1]);
        write(
            &out.join(format!("matrix_{}_{}.csv", a.name, b.name)),
            &matrix_table(a, b, &results),
        )?;
    }
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        started_unix_s,
        wall_time_s: started.elapsed().as_secs_f64(),
        base: config.base.clone(),
        solver: config.solver,
        axes: config.axes.clone(),
        escalation: config.escalation,
        points: manifest_points,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest is plain data");
    write(&out.join("manifest.json"), &(json + "\n"))?;

    let failed = results.iter().filter(|r| r.is_err()).count();
    Ok(SweepOutcome {
        points: points.len(),
        failed,
        results,
    })
}

const STAT_COLUMNS: &str =
    "lambda_app,sigma,lo_2sigma,hi_2sigma,min,q1,median,q3,max,offdiag_ratio,runs,excluded,status";

fn stat_cells(result: &Result<BatchResult, String>) -> String {
    match result {
        Ok(b) => {
            let q = &b.quartiles;
            let nums = [
                b.lambda_app,
                b.sigma,
                b.lambda_app - 2.0 * b.sigma,
                b.lambda_app + 2.0 * b.sigma,
                q.min,
                q.q1,
                q.median,
                q.q3,
                q.max,
                b.offdiag_ratio,
            ];
            let mut cells: Vec<String> = nums.iter().map(f64::to_string).collect();
            cells.push(b.runs.len().to_string());
            cells.push(b.failures.len().to_string());
            cells.push("ok".into());
            cells.join(",")
        }
        Err(_) => format!("{}FAILED", ",".repeat(STAT_COLUMNS.split(',').count() - 1)),
    }
}

fn combined_table(
    config: &SweepConfig,
    points: &[(Vec<f64>, MorphologySpec)],
    results: &[Result<BatchResult, String>],
) -> String {
    let mut header: Vec<&str> = vec!["point"];
    header.extend(config.axes.iter().map(|a| a.name.as_str()));
    let mut out = format!("{},{STAT_COLUMNS}\n", header.join(","));
    for (index, ((coords, _), result)) in points.iter().zip(results).enumerate() {
        let mut cells = vec![index.to_string()];
        cells.extend(coords.iter().map(|&v| format_coord(v)));
        out.push_str(&format!("{},{}\n", cells.join(","), stat_cells(result)));
    }
    out
}

/// Rows sorted by the other axes, then by axis `k`.
fn plot_table(
    config: &SweepConfig,
    k: usize,
    points: &[(Vec<f64>, MorphologySpec)],
    results: &[Result<BatchResult, String>],
) -> String {
    let axis = &config.axes[k];
    let others: Vec<usize> = (0..config.axes.len()).filter(|&i| i != k).collect();
    let mut out = format!(
        "# x = {} ({}); y = lambda_app (apparent conductivity over matrix conductivity), band = y +- 2 sigma\n",
        axis.name,
        axis_unit(&axis.name)
    );
    let mut header = vec![axis.name.clone()];
    header.extend(others.iter().map(|&i| config.axes[i].name.clone()));
    header.extend(["lambda_app", "lo_2sigma", "hi_2sigma"].map(String::from));
    out.push_str(&header.join(","));
    out.push('\n');

    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let key = |p: usize| {
            let c = &points[p].0;
            others
                .iter()
                .map(|&o| c[o])
                .chain([c[k]])
                .collect::<Vec<f64>>()
        };
        key(i)
            .iter()
            .zip(&key(j))
            .map(|(a, b)| a.total_cmp(b))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    for p in order {
        let c = &points[p].0;
        let mut cells = vec![format_coord(c[k])];
        cells.extend(others.iter().map(|&o| format_coord(c[o])));
        match &results[p] {
            Ok(b) => {
                cells.push(b.lambda_app.to_string());
                cells.push((b.lambda_app - 2.0 * b.sigma).to_string());
                cells.push((b.lambda_app + 2.0 * b.sigma).to_string());
            }
            Err(_) => cells.extend([String::new(), String::new(), String::new()]),
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// lambda_app with rows over axis `a` and columns over axis `b`.
fn matrix_table(a: &Axis, b: &Axis, results: &[Result<BatchResult, String>]) -> String {
    let mut out = format!("{}\\{}", a.name, b.name);
    for v in &b.values {
        out.push(',');
        out.push_str(&format_coord(*v));
    }
    out.push('\n');
    for (i, va) in a.values.iter().enumerate() {
        out.push_str(&format_coord(*va));
        for j in 0..b.values.len() {
            out.push(',');
            if let Ok(r) = &results[i * b.values.len() + j] {
                out.push_str(&r.lambda_app.to_string());
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("[spec]\nn_sp = 20\nf_sp = 0.1\n").unwrap();
        assert_eq!(c.base.resolution, 192);
        assert_eq!(c.base.runs, 10);
        assert_eq!(c.base.corrugation_periods, 3);
        assert_eq!(c.solver.acc, 1e-6);
        assert_eq!(c.point_count(), 1);
        assert_eq!(c.max_points, DEFAULT_MAX_POINTS);
        assert!(c.escalation.is_some());
    }

    #[test]
    fn contrast_octaves_give_sixteen_points() {
        let c = parse_config(
            "[spec]\nn_sp = 20\nf_sp = 0.1\n[[axes]]\nname = \"contrast\"\noctaves = [-4, 11]\n",
        )
        .unwrap();
        let v = &c.axes[0].values;
        assert_eq!(v.len(), 16);
        assert_eq!((v[0], v[15]), (1.0 / 16.0, 2048.0));
    }

    #[test]
    fn aspect_axis_and_product() {
        let c = parse_config(
            "[spec]\nn_cyl = 10\nf_cyl = 0.1\n\
             [[axes]]\nname = \"a\"\nvalues = [3, 6, 9, 12]\n\
             [[axes]]\nname = \"wave\"\nvalues = [0, 0.1]\n",
        )
        .unwrap();
        assert_eq!(c.point_count(), 8);
        let p = c.points();
        assert_eq!(p[3].0, vec![6.0, 0.1]);
        assert_eq!(p[3].1.aspect_ratio, 6.0);
        assert_eq!(p[3].1.wave, 0.1);
    }

    #[test]
    fn unknown_key_reports_position() {
        let err = parse_config("[spec]\nn_sp = 20\nf_sp = 0.1\nbogus = 3\n").unwrap_err();
        match err {
            ConfigError::Parse { line, column, msg } => {
                assert_eq!((line, column), (4, 1), "{msg}");
                assert!(msg.contains("bogus"), "{msg}");
            }
            other => panic!("{other}"),
        }
        assert!(matches!(
            parse_config("colour = 1\n"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn axis_errors() {
        assert!(matches!(
            parse_config("[[axes]]\nname = \"radius\"\nvalues = [1]\n"),
            Err(ConfigError::UnknownAxis(_))
        ));
        assert!(matches!(
            parse_config("[[axes]]\nname = \"n_sp\"\nvalues = [1.5]\n"),
            Err(ConfigError::BadAxis { .. })
        ));
        assert!(matches!(
            parse_config("[[axes]]\nname = \"a\"\nvalues = [1]\noctaves = [0, 1]\n"),
            Err(ConfigError::BadAxis { .. })
        ));
        assert!(matches!(
            parse_config("max_points = 3\n[[axes]]\nname = \"contrast\"\noctaves = [0, 3]\n"),
            Err(ConfigError::TooManyPoints { points: 4, cap: 3 })
        ));
        assert!(matches!(
            parse_config("[spec]\nn_sp = 2\nf_sp = 1.5\n"),
            Err(ConfigError::Spec(_))
        ));
    }

    #[test]
    fn small_sweep_writes_all_tables() {
        let dir = tempfile::tempdir().unwrap();
        let text = format!(
            "output_dir = {:?}\nescalate = false\nworkers = 1\n\
             [spec]\nn_sp = 4\nf_sp = 0.1\nresolution = 16\nruns = 2\n\
             [[axes]]\nname = \"contrast\"\nvalues = [0.25, 4]\n\
             [[axes]]\nname = \"f_sp\"\nvalues = [0.05, 0.1, 0.15]\n",
            dir.path().display().to_string()
        );
        let config = parse_config(&text).unwrap();
        let outcome = run_sweep(&config).unwrap();
        assert_eq!((outcome.points, outcome.failed), (6, 0));
        let table = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
        assert_eq!(table.lines().count(), 7);
        let plot = fs::read_to_string(dir.path().join("plot_f_sp.csv")).unwrap();
        assert!(plot.starts_with("# x = f_sp"));
        let rows: Vec<Vec<f64>> = plot
            .lines()
            .skip(2)
            .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
            .collect();
        // Rows are grouped by contrast; lambda_app falls with f_sp below 1 and rises above.
        assert!(rows[0][2] > rows[1][2] && rows[1][2] > rows[2][2]);
        assert!(rows[3][2] < rows[4][2] && rows[4][2] < rows[5][2]);
        let matrix = fs::read_to_string(dir.path().join("matrix_contrast_f_sp.csv")).unwrap();
        assert_eq!(matrix.lines().count(), 3);
        assert!(dir.path().join("manifest.json").exists());
        assert!(dir.path().join("points/point_0005.csv").exists());

        let first = fs::read_to_string(dir.path().join("points/point_0004.csv")).unwrap();
        run_sweep(&config).unwrap();
        let again = fs::read_to_string(dir.path().join("points/point_0004.csv")).unwrap();
        assert_eq!(first, again);
        assert_eq!(
            table,
            fs::read_to_string(dir.path().join("sweep.csv")).unwrap()
        );
    }
}
