//! C interface to `rvetherm`.
//!
//! Objects are opaque handles released with their `_free` function. Every
//! fallible call returns an [`RvtStatus`]; the message of the last failure on
//! the calling thread is available from [`rvt_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rvetherm::error::{BatchError, GeometryError, GridFormatError, SolverError};
use rvetherm::geometry::{generate_rsa, Geometry};
use rvetherm::grid_io::{export_grid, import_grid};
use rvetherm::morphology::{carve_defects, voxelize, PhaseGrid};
use rvetherm::solver::{homogenize, ConductivityField, SolverSettings};
use rvetherm::spec::MorphologySpec;
use rvetherm::stochastic::{confidence_band, run_batch, BatchResult};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RvtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    PlacementExhausted = 3,
    DefectCalibration = 4,
    NonConvergence = 5,
    Io = 6,
    Format = 7,
    BatchFailed = 8,
    Panic = 9,
}

/// Morphology parameters; see `rvt_spec_default` for defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RvtSpec {
    pub n_sp: usize,
    pub n_cyl: usize,
    pub f_sp: f64,
    pub f_cyl: f64,
    pub aspect_ratio: f64,
    pub wave: f64,
    pub periods: u32,
    pub f_def: f64,
    pub n_def: usize,
    pub contrast: f64,
    pub resolution: usize,
    pub seed: u64,
    pub runs: usize,
}

impl From<&RvtSpec> for MorphologySpec {
    fn from(s: &RvtSpec) -> Self {
        MorphologySpec {
            n_sp: s.n_sp,
            n_cyl: s.n_cyl,
            f_sp: s.f_sp,
            f_cyl: s.f_cyl,
            aspect_ratio: s.aspect_ratio,
            wave: s.wave,
            corrugation_periods: s.periods,
            f_def: s.f_def,
            n_def: s.n_def,
            contrast: s.contrast,
            resolution: s.resolution,
            seed: s.seed,
            runs: s.runs,
        }
    }
}

pub struct RvtGeometry(Geometry);
pub struct RvtGrid(PhaseGrid);
pub struct RvtBatch(BatchResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: RvtStatus, msg: impl ToString) -> RvtStatus {
    set_error(msg.to_string());
    status
}

fn geometry_status(e: &GeometryError) -> RvtStatus {
    match e {
        GeometryError::PlacementExhausted { .. } => RvtStatus::PlacementExhausted,
        _ => RvtStatus::InvalidArgument,
    }
}

fn solver_status(e: &SolverError) -> RvtStatus {
    match e {
        SolverError::NonConvergence { .. } => RvtStatus::NonConvergence,
        SolverError::Direction { source, .. } => solver_status(source),
        _ => RvtStatus::InvalidArgument,
    }
}

fn grid_status(e: &GridFormatError) -> RvtStatus {
    match e {
        GridFormatError::Io(_) => RvtStatus::Io,
        _ => RvtStatus::Format,
    }
}

/// Runs `f`, converting panics into `RvtStatus::Panic`.
fn guard(f: impl FnOnce() -> RvtStatus) -> RvtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(RvtStatus::Panic, "internal panic"),
    }
}

/// Hands a boxed value to C through `out`.
///
/// # Safety
/// `out` must be valid for writes.
unsafe fn emit<T>(out: *mut *mut T, value: T) -> RvtStatus {
    *out = Box::into_raw(Box::new(value));
    RvtStatus::Ok
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rvt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn rvt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

#[no_mangle]
pub extern "C" fn rvt_spec_default() -> RvtSpec {
    let d = MorphologySpec::default();
    RvtSpec {
        n_sp: d.n_sp,
        n_cyl: d.n_cyl,
        f_sp: d.f_sp,
        f_cyl: d.f_cyl,
        aspect_ratio: d.aspect_ratio,
        wave: d.wave,
        periods: d.corrugation_periods,
        f_def: d.f_def,
        n_def: d.n_def,
        contrast: d.contrast,
        resolution: d.resolution,
        seed: d.seed,
        runs: d.runs,
    }
}

/// # Safety
/// `spec` must be NULL or point to a valid `RvtSpec`.
#[no_mangle]
pub unsafe extern "C" fn rvt_spec_validate(spec: *const RvtSpec) -> RvtStatus {
    guard(|| {
        let Some(spec) = spec.as_ref() else {
            return fail(RvtStatus::NullPointer, "spec is NULL");
        };
        match MorphologySpec::from(spec).validate() {
            Ok(_) => RvtStatus::Ok,
            Err(e) => fail(RvtStatus::InvalidArgument, e),
        }
    })
}

/// Random sequential adsorption of the spec's inclusions.
///
/// # Safety
/// `spec` must point to a valid `RvtSpec` and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_generate(
    spec: *const RvtSpec,
    seed: u64,
    out: *mut *mut RvtGeometry,
) -> RvtStatus {
    guard(|| {
        let Some(spec) = spec.as_ref() else {
            return fail(RvtStatus::NullPointer, "spec is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        let spec = MorphologySpec::from(spec);
        if let Err(e) = spec.validate() {
            return fail(RvtStatus::InvalidArgument, e);
        }
        match generate_rsa(&spec, seed) {
            Ok(g) => emit(out, RvtGeometry(g)),
            Err(e) => fail(geometry_status(&e), e),
        }
    })
}

/// # Safety
/// `g` must be NULL or a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_free(g: *mut RvtGeometry) {
    if !g.is_null() {
        drop(Box::from_raw(g));
    }
}

/// Number of spheres, or 0 for NULL.
///
/// # Safety
/// `g` must be NULL or a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_sphere_count(g: *const RvtGeometry) -> usize {
    g.as_ref().map_or(0, |g| g.0.spheres.len())
}

/// # Safety
/// `g` must be NULL or a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_cylinder_count(g: *const RvtGeometry) -> usize {
    g.as_ref().map_or(0, |g| g.0.cylinders.len())
}

/// Sum of inclusion volumes, NaN for NULL.
///
/// # Safety
/// `g` must be NULL or a live geometry handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_analytic_fraction(g: *const RvtGeometry) -> f64 {
    g.as_ref().map_or(f64::NAN, |g| g.0.analytic_fraction())
}

/// Text serialization; free the result with `rvt_string_free`.
///
/// # Safety
/// `g` must be a live geometry handle and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_geometry_to_text(
    g: *const RvtGeometry,
    out: *mut *mut c_char,
) -> RvtStatus {
    guard(|| {
        let Some(g) = g.as_ref() else {
            return fail(RvtStatus::NullPointer, "geometry is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        match CString::new(g.0.to_text()) {
            Ok(s) => {
                *out = s.into_raw();
                RvtStatus::Ok
            }
            Err(e) => fail(RvtStatus::InvalidArgument, e),
        }
    })
}

/// # Safety
/// `g` must be a live geometry handle and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_voxelize(
    g: *const RvtGeometry,
    resolution: usize,
    wave: f64,
    periods: u32,
    out: *mut *mut RvtGrid,
) -> RvtStatus {
    guard(|| {
        let Some(g) = g.as_ref() else {
            return fail(RvtStatus::NullPointer, "geometry is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        if resolution == 0 || !(0.0..1.0).contains(&wave) || periods == 0 {
            return fail(
                RvtStatus::InvalidArgument,
                "resolution and periods must be positive, wave in [0, 1)",
            );
        }
        emit(out, RvtGrid(voxelize(&g.0, resolution, wave, periods)))
    })
}

/// New grid with inclusion voxels carved to the defect fraction `f_def`.
///
/// # Safety
/// `grid` must be a live grid handle and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_carve_defects(
    grid: *const RvtGrid,
    f_def: f64,
    n_def: usize,
    seed: u64,
    out: *mut *mut RvtGrid,
) -> RvtStatus {
    guard(|| {
        let Some(grid) = grid.as_ref() else {
            return fail(RvtStatus::NullPointer, "grid is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        match carve_defects(&grid.0, f_def, n_def, seed) {
            Ok(g) => emit(out, RvtGrid(g)),
            Err(e) => fail(RvtStatus::DefectCalibration, e),
        }
    })
}

/// # Safety
/// `grid` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_free(grid: *mut RvtGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Voxels per edge, 0 for NULL.
///
/// # Safety
/// `grid` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_resolution(grid: *const RvtGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.0.resolution())
}

/// # Safety
/// `grid` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_inclusion_fraction(grid: *const RvtGrid) -> f64 {
    grid.as_ref().map_or(f64::NAN, |g| g.0.inclusion_fraction())
}

/// # Safety
/// `grid` must be NULL or a live grid handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_defect_fraction(grid: *const RvtGrid) -> f64 {
    grid.as_ref()
        .map_or(f64::NAN, |g| g.0.defect_fraction_measured)
}

/// Borrowed view of the `N^3` labels, x fastest. Valid while the grid lives.
///
/// # Safety
/// `grid` must be NULL or a live grid handle; `len` must be NULL or valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_labels(grid: *const RvtGrid, len: *mut usize) -> *const u8 {
    let Some(grid) = grid.as_ref() else {
        return ptr::null();
    };
    if let Some(len) = len.as_mut() {
        *len = grid.0.len();
    }
    grid.0.labels().as_ptr()
}

/// # Safety
/// `path` must be NULL or a NUL-terminated string.
unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, RvtStatus> {
    if path.is_null() {
        return Err(fail(RvtStatus::NullPointer, "path is NULL"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|e| fail(RvtStatus::InvalidArgument, e))
}

/// # Safety
/// `grid` must be a live grid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_export(grid: *const RvtGrid, path: *const c_char) -> RvtStatus {
    guard(|| {
        let Some(grid) = grid.as_ref() else {
            return fail(RvtStatus::NullPointer, "grid is NULL");
        };
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match export_grid(&grid.0, path) {
            Ok(()) => RvtStatus::Ok,
            Err(e) => fail(grid_status(&e), e),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_grid_import(path: *const c_char, out: *mut *mut RvtGrid) -> RvtStatus {
    guard(|| {
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        let path = match path_arg(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match import_grid(path) {
            Ok(g) => emit(out, RvtGrid(g)),
            Err(e) => fail(grid_status(&e), e),
        }
    })
}

/// Effective conductivity tensor, row-major into `out[9]`.
///
/// # Safety
/// `grid` must be a live grid handle and `out` point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rvt_homogenize(
    grid: *const RvtGrid,
    contrast: f64,
    acc: f64,
    max_iter: usize,
    out: *mut f64,
) -> RvtStatus {
    guard(|| {
        let Some(grid) = grid.as_ref() else {
            return fail(RvtStatus::NullPointer, "grid is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        let settings = SolverSettings { acc, max_iter };
        let result =
            ConductivityField::new(&grid.0, contrast).and_then(|f| homogenize(&f, &settings));
        match result {
            Ok(t) => {
                let out = std::slice::from_raw_parts_mut(out, 9);
                for (o, v) in out.iter_mut().zip(t.matrix.iter().flatten()) {
                    *o = *v;
                }
                RvtStatus::Ok
            }
            Err(e) => fail(solver_status(&e), e),
        }
    })
}

/// `runs` realizations with seeds derived from `base_seed`.
///
/// # Safety
/// `spec` must point to a valid `RvtSpec` and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_run(
    spec: *const RvtSpec,
    runs: usize,
    base_seed: u64,
    out: *mut *mut RvtBatch,
) -> RvtStatus {
    guard(|| {
        let Some(spec) = spec.as_ref() else {
            return fail(RvtStatus::NullPointer, "spec is NULL");
        };
        if out.is_null() {
            return fail(RvtStatus::NullPointer, "out is NULL");
        }
        match run_batch(&MorphologySpec::from(spec), runs, base_seed) {
            Ok(b) => emit(out, RvtBatch(b)),
            Err(e @ (BatchError::Spec(_) | BatchError::NoRuns)) => {
                fail(RvtStatus::InvalidArgument, e)
            }
            Err(e) => fail(RvtStatus::BatchFailed, e),
        }
    })
}

/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_free(b: *mut RvtBatch) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_lambda_app(b: *const RvtBatch) -> f64 {
    b.as_ref().map_or(f64::NAN, |b| b.0.lambda_app)
}

/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_sigma(b: *const RvtBatch) -> f64 {
    b.as_ref().map_or(f64::NAN, |b| b.0.sigma)
}

/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_offdiag_ratio(b: *const RvtBatch) -> f64 {
    b.as_ref().map_or(f64::NAN, |b| b.0.offdiag_ratio)
}

/// Successful runs.
///
/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_run_count(b: *const RvtBatch) -> usize {
    b.as_ref().map_or(0, |b| b.0.runs.len())
}

/// Runs excluded after a failure.
///
/// # Safety
/// `b` must be NULL or a live batch handle.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_excluded_count(b: *const RvtBatch) -> usize {
    b.as_ref().map_or(0, |b| b.0.failures.len())
}

/// Min, Q1, median, Q3, max of the per-run traces into `out[5]`.
///
/// # Safety
/// `b` must be a live batch handle and `out` point to 5 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_quartiles(b: *const RvtBatch, out: *mut f64) -> RvtStatus {
    let Some(b) = b.as_ref() else {
        return fail(RvtStatus::NullPointer, "batch is NULL");
    };
    if out.is_null() {
        return fail(RvtStatus::NullPointer, "out is NULL");
    }
    let q = &b.0.quartiles;
    let out = std::slice::from_raw_parts_mut(out, 5);
    out.copy_from_slice(&[q.min, q.q1, q.median, q.q3, q.max]);
    RvtStatus::Ok
}

/// `lambda_app -+ 2 sigma`; needs at least two runs.
///
/// # Safety
/// `b` must be a live batch handle; `lo` and `hi` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_confidence_band(
    b: *const RvtBatch,
    lo: *mut f64,
    hi: *mut f64,
) -> RvtStatus {
    let Some(b) = b.as_ref() else {
        return fail(RvtStatus::NullPointer, "batch is NULL");
    };
    if lo.is_null() || hi.is_null() {
        return fail(RvtStatus::NullPointer, "lo or hi is NULL");
    }
    match confidence_band(&b.0) {
        Ok((l, h)) => {
            *lo = l;
            *hi = h;
            RvtStatus::Ok
        }
        Err(e) => fail(RvtStatus::InvalidArgument, e),
    }
}

/// Tensor of successful run `index`, row-major into `out[9]`.
///
/// # Safety
/// `b` must be a live batch handle and `out` point to 9 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_tensor(
    b: *const RvtBatch,
    index: usize,
    out: *mut f64,
) -> RvtStatus {
    let Some(b) = b.as_ref() else {
        return fail(RvtStatus::NullPointer, "batch is NULL");
    };
    if out.is_null() {
        return fail(RvtStatus::NullPointer, "out is NULL");
    }
    let Some(run) = b.0.runs.get(index) else {
        return fail(
            RvtStatus::InvalidArgument,
            format!("run {index} out of range ({} runs)", b.0.runs.len()),
        );
    };
    let out = std::slice::from_raw_parts_mut(out, 9);
    for (o, v) in out.iter_mut().zip(run.tensor.matrix.iter().flatten()) {
        *o = *v;
    }
    RvtStatus::Ok
}

/// Batch table as CSV; free the result with `rvt_string_free`.
///
/// # Safety
/// `b` must be a live batch handle and `out` be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rvt_batch_to_csv(b: *const RvtBatch, out: *mut *mut c_char) -> RvtStatus {
    let Some(b) = b.as_ref() else {
        return fail(RvtStatus::NullPointer, "batch is NULL");
    };
    if out.is_null() {
        return fail(RvtStatus::NullPointer, "out is NULL");
    }
    match CString::new(b.0.to_csv()) {
        Ok(s) => {
            *out = s.into_raw();
            RvtStatus::Ok
        }
        Err(e) => fail(RvtStatus::InvalidArgument, e),
    }
}
