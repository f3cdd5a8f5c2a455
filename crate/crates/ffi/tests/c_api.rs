use std::ffi::c_char;
use std::process::Command;
use std::ptr;

use henon_ffi::*;

#[test]
fn linear_radial_level_through_handles() {
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(henon_grid_radial_new(2000, 1, &mut grid), HenonStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(henon_functional_new(grid, 3, 0.0, 2.0, &mut f), HenonStatus::Ok);
        let mut res = ptr::null_mut();
        assert_eq!(henon_solve_radial(f, 1e-10, 1000, &mut res), HenonStatus::Ok);
        let level = henon_result_level(res);
        let exact = std::f64::consts::PI.powi(2) / 4.0;
        assert!((level - exact).abs() / exact < 1e-4);
        assert_eq!(henon_result_converged(res), 1);

        let n = henon_grid_node_count(grid);
        let mut field = vec![0.0; n];
        assert_eq!(henon_result_field(res, field.as_mut_ptr(), n), HenonStatus::Ok);
        let mut q = 0.0;
        assert_eq!(henon_rayleigh(f, field.as_ptr(), n, &mut q), HenonStatus::Ok);
        assert!((q - level).abs() < 1e-12 * level);
        assert_eq!(henon_result_field(res, field.as_mut_ptr(), n - 1), HenonStatus::BufferTooSmall);

        henon_result_free(res);
        henon_functional_free(f);
        henon_grid_free(grid);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    unsafe {
        let mut grid = ptr::null_mut();
        assert_eq!(henon_grid_radial_new(4, 0, &mut grid), HenonStatus::InvalidSpec);
        assert!(grid.is_null());
        let mut buf = [0 as c_char; 256];
        let len = henon_last_error_message(buf.as_mut_ptr(), buf.len());
        assert!(len > 0);
        let msg = std::ffi::CStr::from_ptr(buf.as_ptr()).to_string_lossy().into_owned();
        assert!(msg.contains("radial grid"), "{msg}");

        assert_eq!(henon_grid_radial_new(32, 0, ptr::null_mut()), HenonStatus::NullPointer);
        assert_eq!(henon_grid_radial_new(32, 0, &mut grid), HenonStatus::Ok);
        let mut f = ptr::null_mut();
        assert_eq!(henon_functional_new(grid, 3, 1.0, 7.0, &mut f), HenonStatus::InvalidSpec);
        assert_eq!(henon_functional_new(grid, 3, 1.0, 4.0, &mut f), HenonStatus::Ok);
        let zeros = vec![0.0; henon_grid_node_count(grid)];
        let mut q = 0.0;
        assert_eq!(henon_rayleigh(f, zeros.as_ptr(), zeros.len(), &mut q), HenonStatus::Degenerate);
        assert_eq!(henon_rayleigh(f, zeros.as_ptr(), 3, &mut q), HenonStatus::GridMismatch);
        let mut res = ptr::null_mut();
        assert_eq!(henon_solve_ground(f, 1e-10, 10, &mut res), HenonStatus::GridMismatch);
        assert!(henon_result_level(ptr::null()).is_nan());
        henon_functional_free(f);
        henon_grid_free(grid);
        henon_grid_free(ptr::null_mut());
    }
}

#[test]
fn scalar_helpers() {
    unsafe {
        let mut s = 0.0;
        assert_eq!(henon_sobolev_constant(3, &mut s), HenonStatus::Ok);
        assert!((s - 5.4779).abs() < 1e-3);
        let mut b = 0.0;
        assert_eq!(henon_balance_f(1.0, 4.0, &mut b), HenonStatus::Ok);
        assert!((b - 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(henon_balance_f(-1.0, 4.0, &mut b), HenonStatus::InvalidArgument);
    }
}

#[test]
fn header_compiles_as_c() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/henon.h");
    assert!(std::path::Path::new(header).exists());
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Ok(status) = Command::new(&cc).args(["-fsyntax-only", "-x", "c", header]).status() else {
        eprintln!("no C compiler available; header syntax not checked");
        return;
    };
    assert!(status.success());
}
