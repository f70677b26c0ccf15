//! Built-in checks against closed-form conductivities.

use crate::geometry::{generate_rsa, Geometry, Sphere};
use crate::morphology::{voxelize, PhaseGrid, INCLUSION};
use crate::solver::{homogenize, wiener_bounds, ConductivityField, SolverSettings};
use crate::spec::MorphologySpec;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    /// Worst observed error (absolute or relative, per check).
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, error: f64, tolerance: f64, detail: String) -> Self {
        Self {
            name: name.to_string(),
            error,
            tolerance,
            passed: error <= tolerance,
            detail,
        }
    }

    fn failed(name: &str, detail: String) -> Self {
        Self {
            name: name.to_string(),
            error: f64::INFINITY,
            tolerance: 0.0,
            passed: false,
            detail,
        }
    }
}

/// Half/half slab laminate with layers normal to x.
pub fn laminate(resolution: usize) -> PhaseGrid {
    let n = resolution;
    let labels = (0..n * n * n)
        .map(|idx| if idx % n < n / 2 { INCLUSION } else { 0 })
        .collect();
    PhaseGrid::from_labels(n, labels)
}

/// One sphere of volume fraction `f` centred in the cell.
pub fn centred_sphere(resolution: usize, f: f64) -> PhaseGrid {
    let mut g = Geometry::empty(MorphologySpec::default());
    g.spheres.push(Sphere {
        center: [0.5; 3],
        radius: (3.0 * f / (4.0 * std::f64::consts::PI)).cbrt(),
    });
    voxelize(&g, resolution, 0.0, 3)
}

/// `1 + 3f(c-1) / (c + 2 - f(c-1))`.
pub fn maxwell_garnett(f: f64, contrast: f64) -> f64 {
    1.0 + 3.0 * f * (contrast - 1.0) / (contrast + 2.0 - f * (contrast - 1.0))
}

fn homogeneous(settings: &SolverSettings) -> Check {
    let name = "homogeneous medium gives the identity";
    let field = match ConductivityField::new(&laminate(16), 1.0) {
        Ok(f) => f,
        Err(e) => return Check::failed(name, e.to_string()),
    };
    match homogenize(&field, settings) {
        Ok(t) => {
            let mut err: f64 = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let id = if i == j { 1.0 } else { 0.0 };
                    err = err.max((t.matrix[i][j] - id).abs());
                }
            }
            Check::new(name, err, 1e-10, format!("iterations {:?}", t.iterations))
        }
        Err(e) => Check::failed(name, e.to_string()),
    }
}

fn laminate_check(contrast: f64, settings: &SolverSettings) -> Check {
    let name = format!("laminate at contrast {contrast}");
    let field = match ConductivityField::new(&laminate(16), contrast) {
        Ok(f) => f,
        Err(e) => return Check::failed(&name, e.to_string()),
    };
    match homogenize(&field, settings) {
        Ok(t) => {
            let harmonic = 2.0 * contrast / (1.0 + contrast);
            let arithmetic = (1.0 + contrast) / 2.0;
            let err = [
                (t.matrix[0][0] - harmonic).abs() / harmonic,
                (t.matrix[1][1] - arithmetic).abs() / arithmetic,
                (t.matrix[2][2] - arithmetic).abs() / arithmetic,
            ]
            .into_iter()
            .fold(0.0, f64::max);
            Check::new(
                &name,
                err,
                1e-6,
                format!(
                    "diagonal {:?}, expected [{harmonic}, {arithmetic}, {arithmetic}]",
                    t.diagonal()
                ),
            )
        }
        Err(e) => Check::failed(&name, e.to_string()),
    }
}

fn dilute_sphere(settings: &SolverSettings) -> Check {
    let name = "dilute sphere against Maxwell-Garnett";
    let (f, c) = (0.05, 16.0);
    let grid = centred_sphere(64, f);
    let field = match ConductivityField::new(&grid, c) {
        Ok(f) => f,
        Err(e) => return Check::failed(name, e.to_string()),
    };
    match homogenize(&field, settings) {
        Ok(t) => {
            let mg = maxwell_garnett(f, c);
            let err = (t.trace_mean() - mg).abs() / mg;
            Check::new(
                name,
                err,
                0.05,
                format!("trace/3 {} vs {mg}", t.trace_mean()),
            )
        }
        Err(e) => Check::failed(name, e.to_string()),
    }
}

fn bounds(settings: &SolverSettings) -> Check {
    let name = "random mixed RVEs within Wiener bounds";
    let mut worst: f64 = 0.0;
    let mut detail = String::new();
    for (k, c) in [1.0 / 16.0, 16.0, 2048.0].into_iter().enumerate() {
        let spec = MorphologySpec {
            resolution: 32,
            ..MorphologySpec::mixed(5, 0.08, 3.0, c)
        };
        let grid = match generate_rsa(&spec, k as u64) {
            Ok(g) => voxelize(&g, 32, 0.0, 3),
            Err(e) => return Check::failed(name, e.to_string()),
        };
        let t = match ConductivityField::new(&grid, c).and_then(|f| homogenize(&f, settings)) {
            Ok(t) => t,
            Err(e) => return Check::failed(name, e.to_string()),
        };
        let (lo, hi) = wiener_bounds(grid.inclusion_fraction(), c);
        for d in t.diagonal() {
            // Violation relative to the band, 0 when inside.
            let v = ((lo - d).max(d - hi)).max(0.0) / lo;
            worst = worst.max(v);
        }
        detail.push_str(&format!("c={c}: {:?} in [{lo}, {hi}]; ", t.diagonal()));
    }
    Check::new(name, worst, 1e-9, detail)
}

/// Runs all checks at small resolutions.
pub fn run_validation(settings: &SolverSettings) -> Vec<Check> {
    let tight = SolverSettings {
        acc: settings.acc.min(1e-9),
        ..*settings
    };
    vec![
        homogeneous(settings),
        laminate_check(16.0, &tight),
        laminate_check(2048.0, &tight),
        dilute_sphere(settings),
        bounds(settings),
    ]
}
