//! Voxelization of analytic geometries, radius corrugation and defect carving.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::MorphologyError;
use crate::geometry::{add, dot, lattice_shifts, scale, sub, Geometry, Inclusion, Vec3};

pub const MATRIX: u8 = 0;
pub const INCLUSION: u8 = 1;

/// Half-width of the acceptance window for the measured defect fraction.
pub const DEFECT_WINDOW: f64 = 0.005;
pub const MAX_BISECTION_STEPS: usize = 60;

/// Radius modulated by a sine with `periods` waves over `p1 in [0, 1]`.
pub fn corrugated_radius(radius: f64, wave: f64, p1: f64, periods: u32) -> f64 {
    radius * (1.0 + wave * (2.0 * PI * periods as f64 * p1).sin())
}

/// Per-axis half extent of the inclusion's bounding box around its midpoint,
/// for a radius inflated by `1 + wave`.
fn half_extent(inclusion: &Inclusion, wave: f64) -> (Vec3, Vec3) {
    match inclusion {
        Inclusion::Sphere(s) => {
            let r = s.radius * (1.0 + wave);
            (s.center, [r; 3])
        }
        Inclusion::Cylinder(c) => {
            let r = c.radius * (1.0 + wave);
            let half = 0.5 * c.length;
            let mid = add(c.base, scale(c.axis, half));
            let e = |a: f64| half * a.abs() + r * (1.0 - a * a).max(0.0).sqrt();
            (mid, [e(c.axis[0]), e(c.axis[1]), e(c.axis[2])])
        }
    }
}

/// Membership of an unwrapped position `x` in the local (non-periodic) solid.
#[inline]
fn contains_local(inclusion: &Inclusion, x: Vec3, wave: f64, periods: u32) -> bool {
    match inclusion {
        Inclusion::Sphere(s) => {
            let d = sub(x, s.center);
            let dist = dot(d, d).sqrt();
            if wave == 0.0 || dist == 0.0 {
                return dist < s.radius;
            }
            let p1 = (d[2] / dist).clamp(-1.0, 1.0).acos() / PI;
            dist < corrugated_radius(s.radius, wave, p1, periods)
        }
        Inclusion::Cylinder(c) => {
            let d = sub(x, c.base);
            let t = dot(d, c.axis);
            if !(0.0..=c.length).contains(&t) {
                return false;
            }
            let radial = sub(d, scale(c.axis, t));
            let rho = dot(radial, radial).sqrt();
            let r = if wave == 0.0 {
                c.radius
            } else {
                corrugated_radius(c.radius, wave, t / c.length, periods)
            };
            rho < r
        }
    }
}

/// Periodic membership test for a point of the unit cell.
///
/// Spheres are corrugated along the polar angle of the displacement measured
/// from the z axis, cylinders along the axial coordinate. With `wave = 0`
/// this is plain solid membership.
pub fn contains(inclusion: &Inclusion, p: Vec3, wave: f64, periods: u32) -> bool {
    let (mid, ext) = half_extent(inclusion, wave);
    let off = sub(p, mid);
    let reach = ext[0].max(ext[1]).max(ext[2]) + 1e-12;
    lattice_shifts(off, reach).any(|s| {
        let local = add(off, s);
        (0..3).all(|i| local[i].abs() <= ext[i] + 1e-12)
            && contains_local(inclusion, add(p, s), wave, periods)
    })
}

/// Two-phase voxel image of the periodic cell, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    resolution: usize,
    labels: Vec<u8>,
    /// Fraction of the cell converted from inclusion to matrix by carving.
    pub defect_fraction_measured: f64,
}

impl PhaseGrid {
    pub fn filled(resolution: usize, label: u8) -> Self {
        Self {
            resolution,
            labels: vec![label; resolution.pow(3)],
            defect_fraction_measured: 0.0,
        }
    }

    /// Wraps labels in x-fastest order. Panics if the length is not `resolution^3`.
    pub fn from_labels(resolution: usize, labels: Vec<u8>) -> Self {
        assert_eq!(
            labels.len(),
            resolution.pow(3),
            "label count must be resolution^3"
        );
        Self {
            resolution,
            labels,
            defect_fraction_measured: 0.0,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution * (j + self.resolution * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u8 {
        self.labels[self.index(i, j, k)]
    }

    pub fn inclusion_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == INCLUSION).count()
    }

    pub fn inclusion_fraction(&self) -> f64 {
        self.inclusion_count() as f64 / self.labels.len() as f64
    }

    /// Measured `[matrix, inclusion]` fractions.
    pub fn voxel_fractions(&self) -> [f64; 2] {
        let incl = self.inclusion_count();
        let matrix = self.labels.len() - incl;
        let n = self.labels.len() as f64;
        [matrix as f64 / n, incl as f64 / n]
    }

    /// Cyclic shift by `(dx, dy, dz)` voxels: voxel `v` moves to `v + d`.
    pub fn shifted(&self, d: [usize; 3]) -> Self {
        let n = self.resolution;
        let mut labels = vec![0; self.labels.len()];
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let dst = (i + d[0]) % n + n * ((j + d[1]) % n + n * ((k + d[2]) % n));
                    labels[dst] = self.get(i, j, k);
                }
            }
        }
        Self {
            resolution: n,
            labels,
            defect_fraction_measured: self.defect_fraction_measured,
        }
    }
}

/// Labels voxel `(i, j, k)` as inclusion when its center lies in any inclusion.
///
/// Each inclusion is rasterized over its unwrapped bounding box, so periodic
/// images and inclusions longer than the cell are covered.
pub fn voxelize(geometry: &Geometry, resolution: usize, wave: f64, periods: u32) -> PhaseGrid {
    let n = resolution;
    let ni = n as i64;
    let inv = 1.0 / n as f64;
    let mut grid = PhaseGrid::filled(n, MATRIX);

    for inclusion in geometry.inclusions() {
        let (mid, ext) = half_extent(&inclusion, wave);
        let range = |axis: usize| {
            let lo = ((mid[axis] - ext[axis]) * n as f64 - 0.5 - 1e-9).ceil() as i64;
            let hi = ((mid[axis] + ext[axis]) * n as f64 - 0.5 + 1e-9).floor() as i64;
            lo..=hi
        };
        let coord = |idx: i64| {
            let cell = idx.div_euclid(ni);
            let local = idx.rem_euclid(ni);
            (local as usize, (local as f64 + 0.5) * inv + cell as f64)
        };
        for k in range(2) {
            let (kk, z) = coord(k);
            for j in range(1) {
                let (jj, y) = coord(j);
                let row = n * (jj + n * kk);
                for i in range(0) {
                    let (ii, x) = coord(i);
                    let idx = row + ii;
                    if grid.labels[idx] == MATRIX
                        && contains_local(&inclusion, [x, y, z], wave, periods)
                    {
                        grid.labels[idx] = INCLUSION;
                    }
                }
            }
        }
    }
    grid
}

#[inline]
fn periodic_dist_sq(a: usize, b: usize, n: usize) -> u64 {
    let n3 = |idx: usize| (idx % n, (idx / n) % n, idx / (n * n));
    let (ai, aj, ak) = n3(a);
    let (bi, bj, bk) = n3(b);
    let d = |x: usize, y: usize| {
        let d = x.abs_diff(y);
        d.min(n - d) as u64
    };
    let (dx, dy, dz) = (d(ai, bi), d(aj, bj), d(ak, bk));
    dx * dx + dy * dy + dz * dz
}

/// Carves `n_def` balls of a common radius out of the inclusion phase.
///
/// Ball centers are drawn uniformly among inclusion voxels; the radius is
/// bisected until the carved fraction of the whole cell lies within
/// `f_def +- DEFECT_WINDOW`. Only inclusion voxels are relabeled.
pub fn carve_defects(
    grid: &PhaseGrid,
    f_def: f64,
    n_def: usize,
    seed: u64,
) -> Result<PhaseGrid, MorphologyError> {
    if f_def <= 0.0 {
        return Ok(grid.clone());
    }
    if n_def == 0 {
        return Err(MorphologyError::NoDefects { requested: f_def });
    }
    let available = grid.inclusion_fraction();
    if f_def > available {
        return Err(MorphologyError::DefectFractionTooLarge {
            requested: f_def,
            available,
        });
    }

    let n = grid.resolution;
    let total = grid.len() as f64;
    let inclusion: Vec<usize> = (0..grid.len())
        .filter(|&i| grid.labels[i] == INCLUSION)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<usize> = (0..n_def)
        .map(|_| inclusion[rng.gen_range(0..inclusion.len())])
        .collect();

    // Squared distance (voxel units) from each inclusion voxel to its nearest center.
    let nearest: Vec<u64> = inclusion
        .iter()
        .map(|&v| {
            centers
                .iter()
                .map(|&c| periodic_dist_sq(v, c, n))
                .min()
                .unwrap_or(u64::MAX)
        })
        .collect();
    let carved_fraction = |rho: f64| {
        let r2 = rho * n as f64 * rho * n as f64;
        nearest.iter().filter(|&&d| (d as f64) < r2).count() as f64 / total
    };

    let (mut lo, mut hi) = (0.0_f64, 3f64.sqrt() / 2.0 + 1.0 / n as f64);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for _ in 0..MAX_BISECTION_STEPS {
        let rho = 0.5 * (lo + hi);
        let carved = carved_fraction(rho);
        if (carved - f_def).abs() < best.0 {
            best = ((carved - f_def).abs(), rho, carved);
        }
        if (carved - f_def).abs() <= DEFECT_WINDOW {
            let r2 = rho * n as f64 * rho * n as f64;
            let mut out = grid.clone();
            for (&v, &d) in inclusion.iter().zip(&nearest) {
                if (d as f64) < r2 {
                    out.labels[v] = MATRIX;
                }
            }
            out.defect_fraction_measured = grid.defect_fraction_measured + carved;
            return Ok(out);
        }
        if carved < f_def {
            lo = rho;
        } else {
            hi = rho;
        }
    }
    Err(MorphologyError::CalibrationFailed {
        target: f_def,
        reached: best.2,
        iterations: MAX_BISECTION_STEPS,
    })
}
