//! Analytic packings of spheres and cylinders in the periodic unit cell.
//!
//! Coordinates are in cell units: the cell is `[0, 1)^3` and wraps around in
//! every direction. Placement is random sequential adsorption: candidates are
//! drawn one at a time and kept only when they overlap nothing already placed.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;
use crate::spec::MorphologySpec;

pub type Vec3 = [f64; 3];

/// Default number of candidate draws per inclusion before giving up.
pub const DEFAULT_MAX_ATTEMPTS: u64 = 100_000;
pub const DEFAULT_RESTARTS: u32 = 50;

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub(crate) fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
fn wrap_component(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// Minimal-image displacement `p - q` on the unit torus, each component in
/// `[-0.5, 0.5)`. The antipodal tie resolves to `-0.5`.
pub fn periodic_delta(p: Vec3, q: Vec3) -> Vec3 {
    let d = sub(p, q);
    [
        wrap_component(d[0]),
        wrap_component(d[1]),
        wrap_component(d[2]),
    ]
}

/// Wraps a point into `[0, 1)^3`.
pub fn wrap_point(p: Vec3) -> Vec3 {
    let w = |x: f64| {
        let y = x - x.floor();
        // x slightly below an integer can round up to exactly 1.0
        if y >= 1.0 {
            0.0
        } else {
            y
        }
    };
    [w(p[0]), w(p[1]), w(p[2])]
}

/// Radius of `n_sp` equal spheres filling fraction `f_sp` of the unit cell.
pub fn sphere_radius(n_sp: usize, f_sp: f64) -> Result<f64, GeometryError> {
    if n_sp == 0 {
        return Err(GeometryError::Domain {
            what: "sphere count",
            value: 0.0,
        });
    }
    if !(f_sp > 0.0 && f_sp.is_finite()) {
        return Err(GeometryError::Domain {
            what: "sphere fraction",
            value: f_sp,
        });
    }
    Ok((3.0 * f_sp / (4.0 * PI * n_sp as f64)).cbrt())
}

/// Radius of `n_cyl` equal cylinders of length `2 * aspect_ratio * r` filling
/// fraction `f_cyl` of the unit cell.
pub fn cylinder_radius(n_cyl: usize, f_cyl: f64, aspect_ratio: f64) -> Result<f64, GeometryError> {
    if n_cyl == 0 {
        return Err(GeometryError::Domain {
            what: "cylinder count",
            value: 0.0,
        });
    }
    if !(f_cyl > 0.0 && f_cyl.is_finite()) {
        return Err(GeometryError::Domain {
            what: "cylinder fraction",
            value: f_cyl,
        });
    }
    if !(aspect_ratio >= 1.0 && aspect_ratio.is_finite()) {
        return Err(GeometryError::Domain {
            what: "aspect ratio",
            value: aspect_ratio,
        });
    }
    Ok((f_cyl / (2.0 * PI * aspect_ratio * n_cyl as f64)).cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
}

impl Sphere {
    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }
}

/// Solid circular cylinder spanning `base .. base + length * axis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub base: Vec3,
    pub axis: Vec3,
    pub radius: f64,
    pub length: f64,
}

impl Cylinder {
    /// Builds a cylinder whose length is `2 * aspect_ratio * radius`.
    pub fn with_aspect_ratio(base: Vec3, axis: Vec3, radius: f64, aspect_ratio: f64) -> Self {
        let n = norm(axis);
        Self {
            base,
            axis: scale(axis, 1.0 / n),
            radius,
            length: 2.0 * aspect_ratio * radius,
        }
    }

    pub fn volume(&self) -> f64 {
        PI * self.radius * self.radius * self.length
    }

    /// Axis end point, not wrapped into the cell.
    pub fn tip(&self) -> Vec3 {
        add(self.base, scale(self.axis, self.length))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InclusionKind {
    Sphere,
    Cylinder,
}

impl fmt::Display for InclusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InclusionKind::Sphere => f.write_str("sphere"),
            InclusionKind::Cylinder => f.write_str("cylinder"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Inclusion {
    Sphere(Sphere),
    Cylinder(Cylinder),
}

impl Inclusion {
    pub fn kind(&self) -> InclusionKind {
        match self {
            Inclusion::Sphere(_) => InclusionKind::Sphere,
            Inclusion::Cylinder(_) => InclusionKind::Cylinder,
        }
    }

    pub fn radius(&self) -> f64 {
        match self {
            Inclusion::Sphere(s) => s.radius,
            Inclusion::Cylinder(c) => c.radius,
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Inclusion::Sphere(s) => s.volume(),
            Inclusion::Cylinder(c) => c.volume(),
        }
    }

    /// Core segment as (midpoint, half extent vector). Spheres have a zero half extent.
    fn core(&self) -> (Vec3, Vec3) {
        match self {
            Inclusion::Sphere(s) => (s.center, [0.0; 3]),
            Inclusion::Cylinder(c) => {
                let half = scale(c.axis, 0.5 * c.length);
                (add(c.base, half), half)
            }
        }
    }
}

impl From<Sphere> for Inclusion {
    fn from(s: Sphere) -> Self {
        Inclusion::Sphere(s)
    }
}

impl From<Cylinder> for Inclusion {
    fn from(c: Cylinder) -> Self {
        Inclusion::Cylinder(c)
    }
}

#[inline]
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Closest-point parameters `(s, t)` and squared distance between segments
/// `[p1, q1]` and `[p2, q2]`, by the clamped closest-point construction.
/// Degenerate segments are points.
fn closest_on_segments(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> (f64, f64, f64) {
    const EPS: f64 = 1e-30;
    let d1 = sub(q1, p1);
    let d2 = sub(q2, p2);
    let r = sub(p1, p2);
    let a = dot(d1, d1);
    let e = dot(d2, d2);
    let f = dot(d2, r);

    let (s, t) = if a <= EPS && e <= EPS {
        (0.0, 0.0)
    } else if a <= EPS {
        (0.0, (f / e).clamp(0.0, 1.0))
    } else {
        let c = dot(d1, r);
        if e <= EPS {
            ((-c / a).clamp(0.0, 1.0), 0.0)
        } else {
            let b = dot(d1, d2);
            let denom = a * e - b * b;
            let mut s = if denom > EPS * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t = (b * s + f) / e;
            if t < 0.0 {
                t = 0.0;
                s = (-c / a).clamp(0.0, 1.0);
            } else if t > 1.0 {
                t = 1.0;
                s = ((b - c) / a).clamp(0.0, 1.0);
            }
            (s, t)
        }
    };
    let c1 = add(p1, scale(d1, s));
    let c2 = add(p2, scale(d2, t));
    let d = sub(c1, c2);
    (s, t, dot(d, d))
}

/// Squared distance between segments `[p1, q1]` and `[p2, q2]`.
pub fn segment_distance_sq(p1: Vec3, q1: Vec3, p2: Vec3, q2: Vec3) -> f64 {
    closest_on_segments(p1, q1, p2, q2).2
}

/// Cylinder centred at `mid` with unit `axis`, half length `half`.
#[derive(Debug, Clone, Copy)]
struct CylinderShape {
    mid: Vec3,
    axis: Vec3,
    half: f64,
    radius: f64,
}

impl CylinderShape {
    fn support(&self, d: Vec3) -> Vec3 {
        let du = dot(d, self.axis);
        let radial = sub(d, scale(self.axis, du));
        let rn = norm(radial);
        let along = if du >= 0.0 { self.half } else { -self.half };
        let mut p = add(self.mid, scale(self.axis, along));
        if rn > 1e-300 {
            p = add(p, scale(radial, self.radius / rn));
        }
        p
    }

    /// Euclidean distance from `p` to the solid cylinder.
    fn distance_to(&self, p: Vec3) -> f64 {
        let q = sub(p, self.mid);
        let t = dot(q, self.axis);
        let rho = norm(sub(q, scale(self.axis, t)));
        let axial = (t.abs() - self.half).max(0.0);
        let radial = (rho - self.radius).max(0.0);
        (axial * axial + radial * radial).sqrt()
    }
}

/// Boolean GJK on the Minkowski difference of two cylinders. Touching or
/// numerically undecided configurations count as overlapping.
fn gjk_overlap(a: &CylinderShape, b: &CylinderShape) -> bool {
    let support = |d: Vec3| sub(a.support(d), b.support(scale(d, -1.0)));
    let mut dir = sub(b.mid, a.mid);
    if dot(dir, dir) < 1e-30 {
        return true;
    }
    // newest vertex first
    let mut simplex: Vec<Vec3> = Vec::with_capacity(4);
    simplex.push(support(dir));
    dir = scale(simplex[0], -1.0);
    for _ in 0..64 {
        if dot(dir, dir) < 1e-30 {
            return true;
        }
        let p = support(dir);
        if dot(p, dir) < 0.0 {
            return false;
        }
        simplex.insert(0, p);
        if next_simplex(&mut simplex, &mut dir) {
            return true;
        }
    }
    true
}

#[inline]
fn same_direction(a: Vec3, b: Vec3) -> bool {
    dot(a, b) > 0.0
}

fn next_simplex(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    match simplex.len() {
        2 => simplex_line(simplex, dir),
        3 => simplex_triangle(simplex, dir),
        _ => simplex_tetrahedron(simplex, dir),
    }
}

fn simplex_line(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    let (a, b) = (simplex[0], simplex[1]);
    let ab = sub(b, a);
    let ao = scale(a, -1.0);
    if same_direction(ab, ao) {
        *dir = cross(cross(ab, ao), ab);
    } else {
        simplex.truncate(1);
        *dir = ao;
    }
    false
}

fn simplex_triangle(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    let (a, b, c) = (simplex[0], simplex[1], simplex[2]);
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ao = scale(a, -1.0);
    let abc = cross(ab, ac);
    if same_direction(cross(abc, ac), ao) {
        if same_direction(ac, ao) {
            *simplex = vec![a, c];
            *dir = cross(cross(ac, ao), ac);
            false
        } else {
            *simplex = vec![a, b];
            simplex_line(simplex, dir)
        }
    } else if same_direction(cross(ab, abc), ao) {
        *simplex = vec![a, b];
        simplex_line(simplex, dir)
    } else if same_direction(abc, ao) {
        *dir = abc;
        false
    } else {
        *simplex = vec![a, c, b];
        *dir = scale(abc, -1.0);
        false
    }
}

fn simplex_tetrahedron(simplex: &mut Vec<Vec3>, dir: &mut Vec3) -> bool {
    let (a, b, c, d) = (simplex[0], simplex[1], simplex[2], simplex[3]);
    let ab = sub(b, a);
    let ac = sub(c, a);
    let ad = sub(d, a);
    let ao = scale(a, -1.0);
    let abc = cross(ab, ac);
    let acd = cross(ac, ad);
    let adb = cross(ad, ab);
    if same_direction(abc, ao) {
        *simplex = vec![a, b, c];
        return simplex_triangle(simplex, dir);
    }
    if same_direction(acd, ao) {
        *simplex = vec![a, c, d];
        return simplex_triangle(simplex, dir);
    }
    if same_direction(adb, ao) {
        *simplex = vec![a, d, b];
        return simplex_triangle(simplex, dir);
    }
    true
}

/// Overlap of `a` centred at the origin and `b` centred at `offset`, both
/// taken as non-periodic solids, with `gap` clearance.
fn overlaps_local(a: &Inclusion, b: &Inclusion, offset: Vec3, gap: f64) -> bool {
    let (_, ha) = a.core();
    let (_, hb) = b.core();
    let reach_r = a.radius() + b.radius() + gap;
    let (s, t, d2) = closest_on_segments(scale(ha, -1.0), ha, sub(offset, hb), add(offset, hb));
    // Each solid lies inside the capsule around its axis segment.
    if d2 >= reach_r * reach_r {
        return false;
    }
    let shape = |inc: &Inclusion, mid: Vec3, extra: f64| match inc {
        Inclusion::Cylinder(c) => CylinderShape {
            mid,
            axis: c.axis,
            half: 0.5 * c.length + extra,
            radius: c.radius + extra,
        },
        Inclusion::Sphere(s) => CylinderShape {
            mid,
            axis: [0.0, 0.0, 1.0],
            half: 0.0,
            radius: s.radius,
        },
    };
    match (a, b) {
        (Inclusion::Sphere(_), Inclusion::Sphere(_)) => true,
        (Inclusion::Sphere(sa), Inclusion::Cylinder(_)) => {
            shape(b, offset, 0.0).distance_to([0.0; 3]) < sa.radius + gap
        }
        (Inclusion::Cylinder(_), Inclusion::Sphere(sb)) => {
            shape(a, [0.0; 3], 0.0).distance_to(offset) < sb.radius + gap
        }
        (Inclusion::Cylinder(_), Inclusion::Cylinder(_)) => {
            // Closest axis points interior to both segments: the lateral
            // surfaces meet along the common perpendicular.
            if s > 0.0 && s < 1.0 && t > 0.0 && t < 1.0 {
                return true;
            }
            gjk_overlap(&shape(a, [0.0; 3], 0.5 * gap), &shape(b, offset, 0.5 * gap))
        }
    }
}

/// Integer lattice shifts `s` such that `|offset_i + s_i| <= reach` on every axis.
pub(crate) fn lattice_shifts(offset: Vec3, reach: f64) -> impl Iterator<Item = Vec3> {
    let range = |i: usize| {
        let lo = (-reach - offset[i]).ceil() as i64;
        let hi = (reach - offset[i]).floor() as i64;
        lo..=hi
    };
    let (rx, ry, rz) = (range(0), range(1), range(2));
    rz.flat_map(move |z| {
        let rx = rx.clone();
        ry.clone()
            .flat_map(move |y| rx.clone().map(move |x| [x as f64, y as f64, z as f64]))
    })
}

/// Overlap test on the torus, with `gap` clearance.
///
/// Every periodic image of `b` within reach of `a` is tested. Sphere pairs
/// compare center distance, sphere-cylinder pairs use the exact distance to
/// the solid cylinder, cylinder pairs are decided by their axis segments when
/// the closest points are interior and by GJK otherwise. For cylinder pairs
/// each body is inflated by half the clearance in radius and half length.
pub fn intersects_with_gap(a: &Inclusion, b: &Inclusion, gap: f64) -> bool {
    let reach_r = a.radius() + b.radius() + gap;
    if let (Inclusion::Sphere(sa), Inclusion::Sphere(sb)) = (a, b) {
        // A sphere cannot meet two images of another unless radii exceed half the cell.
        if reach_r <= 0.5 {
            let d = periodic_delta(sa.center, sb.center);
            return dot(d, d) < reach_r * reach_r;
        }
    }
    let (ma, ha) = a.core();
    let (mb, hb) = b.core();
    let d = periodic_delta(mb, ma);
    let reach = norm(ha) + norm(hb) + reach_r;
    lattice_shifts(d, reach).any(|s| overlaps_local(a, b, add(d, s), gap))
}

pub fn intersects(a: &Inclusion, b: &Inclusion) -> bool {
    intersects_with_gap(a, b, 0.0)
}

/// Whether an inclusion touches one of its own periodic images.
pub fn self_overlaps(a: &Inclusion, gap: f64) -> bool {
    let (_, h) = a.core();
    let reach = 2.0 * norm(h) + 2.0 * a.radius() + gap;
    lattice_shifts([0.0; 3], reach)
        .filter(|s| *s != [0.0; 3])
        .any(|s| overlaps_local(a, a, s, gap))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlacementOrder {
    CylindersFirst,
    SpheresFirst,
}

/// Options for random sequential adsorption.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RsaOptions {
    pub max_attempts: u64,
    pub order: PlacementOrder,
    /// Clearance added to every radius sum.
    pub gap: f64,
    /// Fresh starts from an empty cell after an exhausted placement. The
    /// random stream continues across restarts.
    pub restarts: u32,
}

impl RsaOptions {
    /// Default budget and a clearance of half a voxel at `resolution`.
    pub fn for_resolution(resolution: usize) -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            order: PlacementOrder::CylindersFirst,
            gap: 0.5 / resolution as f64,
            restarts: DEFAULT_RESTARTS,
        }
    }
}

/// A non-intersecting packing in the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    pub spheres: Vec<Sphere>,
    pub cylinders: Vec<Cylinder>,
    pub spec: MorphologySpec,
}

impl Geometry {
    pub fn empty(spec: MorphologySpec) -> Self {
        Self {
            spheres: Vec::new(),
            cylinders: Vec::new(),
            spec,
        }
    }

    /// All inclusions, cylinders first (placement order).
    pub fn inclusions(&self) -> impl Iterator<Item = Inclusion> + '_ {
        self.cylinders
            .iter()
            .map(|&c| Inclusion::Cylinder(c))
            .chain(self.spheres.iter().map(|&s| Inclusion::Sphere(s)))
    }

    /// Sum of the analytic inclusion volumes.
    pub fn analytic_fraction(&self) -> f64 {
        self.inclusions().map(|i| i.volume()).sum()
    }

    /// First intersecting pair, by exhaustive check.
    pub fn find_overlap(&self, gap: f64) -> Option<(usize, usize)> {
        let all: Vec<Inclusion> = self.inclusions().collect();
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                if intersects_with_gap(&all[i], &all[j], gap) {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Line-oriented text form: `RVE v1 n_sp n_cyl`, then `S cx cy cz r` and
    /// `C bx by bz ax ay az r L` lines with 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("RVE v1 {} {}\n", self.spheres.len(), self.cylinders.len());
        for s in &self.spheres {
            out.push_str(&format!(
                "S {:.16e} {:.16e} {:.16e} {:.16e}\n",
                s.center[0], s.center[1], s.center[2], s.radius
            ));
        }
        for c in &self.cylinders {
            out.push_str(&format!(
                "C {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}\n",
                c.base[0],
                c.base[1],
                c.base[2],
                c.axis[0],
                c.axis[1],
                c.axis[2],
                c.radius,
                c.length
            ));
        }
        out
    }

    /// Parses the text form; `spec` is attached as the generating parameters.
    pub fn from_text(text: &str, spec: MorphologySpec) -> Result<Self, GeometryError> {
        let err = |line: usize, msg: &str| GeometryError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 4 || head[0] != "RVE" || head[1] != "v1" {
            return Err(err(1, "expected `RVE v1 n_sp n_cyl`"));
        }
        let n_sp: usize = head[2].parse().map_err(|_| err(1, "bad sphere count"))?;
        let n_cyl: usize = head[3].parse().map_err(|_| err(1, "bad cylinder count"))?;

        let mut geometry = Geometry::empty(spec);
        for (idx, line) in lines {
            let lineno = idx + 1;
            let mut fields = line.split_whitespace();
            let tag = fields.next().unwrap_or_default();
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| err(lineno, "bad number"))?;
            match (tag, values.len()) {
                ("S", 4) => geometry.spheres.push(Sphere {
                    center: [values[0], values[1], values[2]],
                    radius: values[3],
                }),
                ("C", 8) => geometry.cylinders.push(Cylinder {
                    base: [values[0], values[1], values[2]],
                    axis: [values[3], values[4], values[5]],
                    radius: values[6],
                    length: values[7],
                }),
                _ => {
                    return Err(err(
                        lineno,
                        "expected an S line with 4 or a C line with 8 values",
                    ))
                }
            }
        }
        if geometry.spheres.len() != n_sp || geometry.cylinders.len() != n_cyl {
            return Err(err(1, "inclusion counts do not match the header"));
        }
        Ok(geometry)
    }
}

fn random_direction(rng: &mut impl Rng) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    let v = [s * phi.cos(), s * phi.sin(), z];
    scale(v, 1.0 / norm(v))
}

fn random_point(rng: &mut impl Rng) -> Vec3 {
    [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()]
}

/// Random sequential adsorption with the default attempt budget and a
/// half-voxel clearance at the spec's resolution.
pub fn generate_rsa(spec: &MorphologySpec, seed: u64) -> Result<Geometry, GeometryError> {
    generate_rsa_with(spec, seed, &RsaOptions::for_resolution(spec.resolution))
}

/// Places all cylinders, then all spheres. Position and orientation are both
/// redrawn after every rejection. When an inclusion exhausts its budget the
/// whole cell is emptied and filled again, up to `options.restarts` times;
/// the last exhaustion is returned.
pub fn generate_rsa_with(
    spec: &MorphologySpec,
    seed: u64,
    options: &RsaOptions,
) -> Result<Geometry, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut restart = 0;
    loop {
        match fill_cell(spec, &mut rng, options) {
            Err(GeometryError::PlacementExhausted { .. }) if restart < options.restarts => {
                restart += 1;
                log::debug!("rsa seed {seed}: restart {restart}");
            }
            other => return other,
        }
    }
}

fn fill_cell(
    spec: &MorphologySpec,
    rng: &mut ChaCha8Rng,
    options: &RsaOptions,
) -> Result<Geometry, GeometryError> {
    let mut placed: Vec<Inclusion> = Vec::with_capacity(spec.n_sp + spec.n_cyl);
    let mut geometry = Geometry::empty(spec.clone());

    let fits = |candidate: &Inclusion, placed: &[Inclusion]| {
        !self_overlaps(candidate, options.gap)
            && placed
                .iter()
                .all(|other| !intersects_with_gap(candidate, other, options.gap))
    };

    let order = match options.order {
        PlacementOrder::CylindersFirst => [InclusionKind::Cylinder, InclusionKind::Sphere],
        PlacementOrder::SpheresFirst => [InclusionKind::Sphere, InclusionKind::Cylinder],
    };
    for kind in order {
        match kind {
            InclusionKind::Cylinder => {
                if spec.n_cyl > 0 {
                    let radius = cylinder_radius(spec.n_cyl, spec.f_cyl, spec.aspect_ratio)?;
                    for index in 0..spec.n_cyl {
                        let mut attempts = 0;
                        let cylinder = loop {
                            if attempts == options.max_attempts {
                                return Err(GeometryError::PlacementExhausted {
                                    kind: InclusionKind::Cylinder,
                                    index,
                                    attempts,
                                    placed: placed.len(),
                                });
                            }
                            attempts += 1;
                            let base = random_point(rng);
                            let axis = random_direction(rng);
                            let c =
                                Cylinder::with_aspect_ratio(base, axis, radius, spec.aspect_ratio);
                            if fits(&Inclusion::Cylinder(c), &placed) {
                                break c;
                            }
                        };
                        placed.push(cylinder.into());
                        geometry.cylinders.push(cylinder);
                    }
                }
            }
            InclusionKind::Sphere => {
                if spec.n_sp > 0 {
                    let radius = sphere_radius(spec.n_sp, spec.f_sp)?;
                    for index in 0..spec.n_sp {
                        let mut attempts = 0;
                        let sphere = loop {
                            if attempts == options.max_attempts {
                                return Err(GeometryError::PlacementExhausted {
                                    kind: InclusionKind::Sphere,
                                    index,
                                    attempts,
                                    placed: placed.len(),
                                });
                            }
                            attempts += 1;
                            let s = Sphere {
                                center: random_point(rng),
                                radius,
                            };
                            if fits(&Inclusion::Sphere(s), &placed) {
                                break s;
                            }
                        };
                        placed.push(sphere.into());
                        geometry.spheres.push(sphere);
                    }
                }
            }
        }
    }
    Ok(geometry)
}
