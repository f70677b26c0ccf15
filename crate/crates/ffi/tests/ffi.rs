use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use rvetherm_ffi::*;

fn small_spec() -> RvtSpec {
    RvtSpec {
        n_sp: 4,
        n_cyl: 2,
        f_sp: 0.05,
        f_cyl: 0.05,
        aspect_ratio: 3.0,
        resolution: 16,
        contrast: 16.0,
        ..rvt_spec_default()
    }
}

fn last_error() -> String {
    let p = rvt_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn geometry_grid_solve_round_trip() {
    let spec = small_spec();
    unsafe {
        assert_eq!(rvt_spec_validate(&spec), RvtStatus::Ok);
        let mut geometry = ptr::null_mut();
        assert_eq!(
            rvt_geometry_generate(&spec, 3, &mut geometry),
            RvtStatus::Ok
        );
        assert_eq!(rvt_geometry_sphere_count(geometry), 4);
        assert_eq!(rvt_geometry_cylinder_count(geometry), 2);
        assert!((rvt_geometry_analytic_fraction(geometry) - 0.1).abs() < 1e-12);

        let mut text = ptr::null_mut();
        assert_eq!(rvt_geometry_to_text(geometry, &mut text), RvtStatus::Ok);
        assert!(CStr::from_ptr(text).to_str().unwrap().starts_with("RVE v1"));
        rvt_string_free(text);

        let mut grid = ptr::null_mut();
        assert_eq!(
            rvt_grid_voxelize(geometry, 16, 0.0, 3, &mut grid),
            RvtStatus::Ok
        );
        assert_eq!(rvt_grid_resolution(grid), 16);
        let mut len = 0;
        let labels = rvt_grid_labels(grid, &mut len);
        assert_eq!(len, 16 * 16 * 16);
        let labels = std::slice::from_raw_parts(labels, len);
        let ones = labels.iter().filter(|&&l| l != 0).count() as f64 / len as f64;
        assert_eq!(ones, rvt_grid_inclusion_fraction(grid));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("g.rveg").to_str().unwrap()).unwrap();
        assert_eq!(rvt_grid_export(grid, path.as_ptr()), RvtStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rvt_grid_import(path.as_ptr(), &mut back), RvtStatus::Ok);
        let mut len2 = 0;
        let labels2 = std::slice::from_raw_parts(rvt_grid_labels(back, &mut len2), len2);
        assert_eq!(labels, labels2);

        let mut tensor = [0.0; 9];
        assert_eq!(
            rvt_homogenize(back, 1.0, 1e-8, 100, tensor.as_mut_ptr()),
            RvtStatus::Ok
        );
        for (k, v) in tensor.iter().enumerate() {
            let id = if k % 4 == 0 { 1.0 } else { 0.0 };
            assert!((v - id).abs() < 1e-10, "{tensor:?}");
        }
        assert_eq!(
            rvt_homogenize(back, 16.0, 1e-6, 1000, tensor.as_mut_ptr()),
            RvtStatus::Ok
        );
        let phi = rvt_grid_inclusion_fraction(back);
        for d in [tensor[0], tensor[4], tensor[8]] {
            assert!(d > 1.0 / (1.0 - phi + phi / 16.0) && d < 1.0 + 15.0 * phi);
        }

        let mut carved = ptr::null_mut();
        assert_eq!(
            rvt_grid_carve_defects(grid, 0.02, 5, 9, &mut carved),
            RvtStatus::Ok
        );
        assert!(rvt_grid_inclusion_fraction(carved) < rvt_grid_inclusion_fraction(grid));
        assert!((rvt_grid_defect_fraction(carved) - 0.02).abs() < 0.01);

        rvt_grid_free(carved);
        rvt_grid_free(back);
        rvt_grid_free(grid);
        rvt_geometry_free(geometry);
    }
}

#[test]
fn batch_statistics() {
    let spec = RvtSpec {
        resolution: 16,
        ..small_spec()
    };
    unsafe {
        let mut batch = ptr::null_mut();
        assert_eq!(rvt_batch_run(&spec, 3, 7, &mut batch), RvtStatus::Ok);
        assert_eq!(rvt_batch_run_count(batch), 3);
        assert_eq!(rvt_batch_excluded_count(batch), 0);
        let mut q = [0.0; 5];
        assert_eq!(rvt_batch_quartiles(batch, q.as_mut_ptr()), RvtStatus::Ok);
        assert!(q.windows(2).all(|w| w[0] <= w[1]));
        let lambda = rvt_batch_lambda_app(batch);
        assert!(q[0] <= lambda && lambda <= q[4]);
        let (mut lo, mut hi) = (0.0, 0.0);
        assert_eq!(
            rvt_batch_confidence_band(batch, &mut lo, &mut hi),
            RvtStatus::Ok
        );
        assert!(((lo + hi) / 2.0 - lambda).abs() < 1e-12);
        assert!(((hi - lo) / 4.0 - rvt_batch_sigma(batch)).abs() < 1e-12);
        assert!(rvt_batch_offdiag_ratio(batch) >= 0.0);

        let mut t = [0.0; 9];
        assert_eq!(rvt_batch_tensor(batch, 0, t.as_mut_ptr()), RvtStatus::Ok);
        assert_eq!(
            rvt_batch_tensor(batch, 3, t.as_mut_ptr()),
            RvtStatus::InvalidArgument
        );
        assert!(last_error().contains("out of range"));

        let mut csv = ptr::null_mut();
        assert_eq!(rvt_batch_to_csv(batch, &mut csv), RvtStatus::Ok);
        let text = CStr::from_ptr(csv).to_str().unwrap().to_owned();
        rvt_string_free(csv);
        rvt_batch_free(batch);

        let mut again = ptr::null_mut();
        assert_eq!(rvt_batch_run(&spec, 3, 7, &mut again), RvtStatus::Ok);
        let mut csv = ptr::null_mut();
        rvt_batch_to_csv(again, &mut csv);
        assert_eq!(CStr::from_ptr(csv).to_str().unwrap(), text);
        rvt_string_free(csv);
        rvt_batch_free(again);
    }
}

#[test]
fn error_codes() {
    unsafe {
        let mut geometry = ptr::null_mut();
        assert_eq!(
            rvt_geometry_generate(ptr::null(), 0, &mut geometry),
            RvtStatus::NullPointer
        );
        assert!(last_error().contains("NULL"));

        let bad = RvtSpec {
            f_sp: 1.5,
            ..small_spec()
        };
        assert_eq!(rvt_spec_validate(&bad), RvtStatus::InvalidArgument);

        let dense = RvtSpec {
            n_sp: 20,
            n_cyl: 0,
            f_sp: 0.6,
            f_cyl: 0.0,
            ..small_spec()
        };
        assert_eq!(
            rvt_geometry_generate(&dense, 1, &mut geometry),
            RvtStatus::PlacementExhausted
        );
        assert!(geometry.is_null());

        let missing = CString::new("/nonexistent/grid.rveg").unwrap();
        let mut grid = ptr::null_mut();
        assert_eq!(rvt_grid_import(missing.as_ptr(), &mut grid), RvtStatus::Io);

        assert_eq!(rvt_grid_resolution(ptr::null()), 0);
        assert!(rvt_grid_inclusion_fraction(ptr::null()).is_nan());
        rvt_grid_free(ptr::null_mut());
        rvt_geometry_free(ptr::null_mut());
        rvt_batch_free(ptr::null_mut());
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/rvetherm.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "rvt_homogenize",
        "rvt_batch_run",
        "RVT_STATUS_PLACEMENT_EXHAUSTED",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rvetherm.h\"\nint main(void) { RvtSpec s = rvt_spec_default(); return (int)s.n_sp; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}
