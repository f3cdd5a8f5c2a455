//! C interface: opaque grid, functional and result handles, status codes,
//! and a per-thread message for the last failure.
//!
//! Every handle returned through an out-pointer is owned by the caller and
//! must be released with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use henon_core::diagnostics;
use henon_core::functional::Functional;
use henon_core::geometry::{AngularGrading, AxiGrid, DiscreteField, Grading, GridRef, ProblemParams, RadialGrading, RadialGrid};
use henon_core::minimize::{self, SolveResult, SolverOptions};
use henon_core::Error;

/// Status returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HenonStatus {
    Ok = 0,
    /// Parameters outside their admissible range.
    InvalidArgument = 1,
    NonConvergence = 2,
    InvalidSpec = 3,
    Degenerate = 4,
    GridMismatch = 5,
    NullPointer = 6,
    /// Output buffer too small.
    BufferTooSmall = 7,
    Internal = 8,
}

impl From<&Error> for HenonStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Domain(_) => HenonStatus::InvalidArgument,
            Error::Config(_) | Error::Parse(_) => HenonStatus::InvalidSpec,
            Error::NonConvergence(_) => HenonStatus::NonConvergence,
            Error::Degenerate(_) => HenonStatus::Degenerate,
            Error::GridCompatibility(_) => HenonStatus::GridMismatch,
            Error::Contract(_) | Error::Singular(_) | Error::Io(_) => HenonStatus::Internal,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (HenonStatus, String)>) -> HenonStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HenonStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HenonStatus::Internal
        }
    }
}

fn core<T>(r: henon_core::Result<T>) -> Result<T, (HenonStatus, String)> {
    r.map_err(|e| (HenonStatus::from(&e), e.to_string()))
}

fn null(name: &str) -> (HenonStatus, String) {
    (HenonStatus::NullPointer, format!("{name} is null"))
}

/// Opaque grid handle.
pub struct HenonGrid {
    grid: GridRef,
}

/// Opaque handle to a grid together with `(N, alpha, p)`.
pub struct HenonFunctional {
    inner: Functional,
}

/// Opaque handle to a solver outcome.
pub struct HenonResult {
    inner: SolveResult,
}

/// Copies the last error message of the calling thread into `buf`
/// (NUL-terminated) and returns the full message length, or 0 when no error
/// has been recorded.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn henon_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes();
            if !buf.is_null() && len > 0 {
                let n = bytes.len().min(len - 1);
                std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
                *buf.add(n) = 0;
            }
            bytes.len()
        }
    })
}

/// Radial grid with `cells` cells, graded toward the walls when `graded` is nonzero.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_grid_radial_new(cells: usize, graded: i32, out: *mut *mut HenonGrid) -> HenonStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let grading = if graded != 0 { Grading::graded() } else { Grading::Uniform };
        let g = core(RadialGrid::new(cells, grading))?;
        *out = Box::into_raw(Box::new(HenonGrid { grid: GridRef::Radial(Arc::new(g)) }));
        Ok(())
    })
}

/// Axisymmetric `(r, theta)` grid with the default wall and pole grading.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_grid_axi_new(radial_cells: usize, angular_cells: usize, out: *mut *mut HenonGrid) -> HenonStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = core(AxiGrid::new(
            radial_cells,
            angular_cells,
            Grading::Graded(RadialGrading::AXI_DEFAULT),
            AngularGrading::POLAR_DEFAULT,
        ))?;
        *out = Box::into_raw(Box::new(HenonGrid { grid: GridRef::Axi(Arc::new(g)) }));
        Ok(())
    })
}

/// Number of nodal coefficients of a field on `grid`, 0 for a null handle.
///
/// # Safety
/// `grid` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn henon_grid_node_count(grid: *const HenonGrid) -> usize {
    grid.as_ref().map_or(0, |g| g.grid.node_count())
}

/// # Safety
/// `grid` must be null or a handle from `henon_grid_*_new` not freed before.
#[no_mangle]
pub unsafe extern "C" fn henon_grid_free(grid: *mut HenonGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Functional for dimension `dim`, weight exponent `alpha` and exponent `p`
/// (`p = 2` selects the linear problem).
///
/// # Safety
/// `grid` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_functional_new(
    grid: *const HenonGrid,
    dim: usize,
    alpha: f64,
    p: f64,
    out: *mut *mut HenonFunctional,
) -> HenonStatus {
    guard(|| {
        let grid = grid.as_ref().ok_or_else(|| null("grid"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let params = core(ProblemParams::with_validation(dim, alpha, p))?;
        let f = core(Functional::on_grid(&grid.grid, params))?;
        *out = Box::into_raw(Box::new(HenonFunctional { inner: f }));
        Ok(())
    })
}

/// # Safety
/// `f` must be null or a handle from `henon_functional_new` not freed before.
#[no_mangle]
pub unsafe extern "C" fn henon_functional_free(f: *mut HenonFunctional) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

unsafe fn field_from(f: &Functional, values: *const f64, len: usize) -> Result<DiscreteField, (HenonStatus, String)> {
    if values.is_null() {
        return Err(null("values"));
    }
    let v = std::slice::from_raw_parts(values, len).to_vec();
    core(DiscreteField::from_values(f.grid().clone(), v))
}

/// Rayleigh quotient of the field with nodal values `values[0..len]`.
///
/// # Safety
/// `f` must be a live handle, `values` must point to `len` doubles and `out`
/// must be valid.
#[no_mangle]
pub unsafe extern "C" fn henon_rayleigh(f: *const HenonFunctional, values: *const f64, len: usize, out: *mut f64) -> HenonStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("functional"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let u = field_from(f, values, len)?;
        *out = core(f.quotient(&u))?;
        Ok(())
    })
}

/// Gradient of the quotient at `values`, written to `grad[0..len]`.
///
/// # Safety
/// `values` and `grad` must each point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn henon_gradient(f: *const HenonFunctional, values: *const f64, len: usize, grad: *mut f64) -> HenonStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("functional"))?.inner;
        if grad.is_null() {
            return Err(null("grad"));
        }
        let u = field_from(f, values, len)?;
        let g = core(f.gradient(&u))?;
        std::ptr::copy_nonoverlapping(g.values().as_ptr(), grad, len);
        Ok(())
    })
}

fn options(tol: f64, max_iter: usize) -> Result<SolverOptions, (HenonStatus, String)> {
    if !(tol > 0.0 && tol.is_finite()) || max_iter == 0 {
        return Err((HenonStatus::InvalidArgument, format!("tolerance {tol} and iteration cap {max_iter} must be positive")));
    }
    Ok(SolverOptions { tol, max_iter, ..Default::default() })
}

/// Minimizes over radial fields; requires a radial grid.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_solve_radial(f: *const HenonFunctional, tol: f64, max_iter: usize, out: *mut *mut HenonResult) -> HenonStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("functional"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let res = core(minimize::solve_radial_with(f, &options(tol, max_iter)?))?;
        *out = Box::into_raw(Box::new(HenonResult { inner: res }));
        Ok(())
    })
}

/// Ground state over axisymmetric fields from the default initial guesses;
/// requires an axisymmetric grid.
///
/// # Safety
/// `f` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_solve_ground(f: *const HenonFunctional, tol: f64, max_iter: usize, out: *mut *mut HenonResult) -> HenonStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("functional"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        if !matches!(f.grid(), GridRef::Axi(_)) {
            return Err((HenonStatus::GridMismatch, "ground solve needs an axisymmetric grid".into()));
        }
        let res = core(minimize::solve_ground_with(f, None, &options(tol, max_iter)?))?;
        *out = Box::into_raw(Box::new(HenonResult { inner: res }));
        Ok(())
    })
}

/// Level of a result; NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn henon_result_level(r: *const HenonResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.level())
}

/// 1 when the solver met its stopping rules, 0 otherwise.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn henon_result_converged(r: *const HenonResult) -> i32 {
    r.as_ref().map_or(0, |r| r.inner.converged as i32)
}

/// Weak-form defect of the rescaled minimizer; NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn henon_result_residual(r: *const HenonResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.inner.pde_residual)
}

/// Copies the minimizer (unit weighted mass) into `buf`, which must hold
/// `henon_grid_node_count` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn henon_result_field(r: *const HenonResult, buf: *mut f64, len: usize) -> HenonStatus {
    guard(|| {
        let r = &r.as_ref().ok_or_else(|| null("result"))?.inner;
        if buf.is_null() {
            return Err(null("buf"));
        }
        let v = r.field.values();
        if len < v.len() {
            return Err((HenonStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", v.len())));
        }
        std::ptr::copy_nonoverlapping(v.as_ptr(), buf, v.len());
        Ok(())
    })
}

/// # Safety
/// `r` must be null or a handle from a solve call not freed before.
#[no_mangle]
pub unsafe extern "C" fn henon_result_free(r: *mut HenonResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Best Sobolev constant of `R^dim`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_sobolev_constant(dim: usize, out: *mut f64) -> HenonStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = core(diagnostics::sobolev_constant(dim))?;
        Ok(())
    })
}

/// `(1 + x^{2/p}) / (1 + x)^{2/p}`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn henon_balance_f(x: f64, p: f64, out: *mut f64) -> HenonStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = core(diagnostics::balance_f(x, p))?;
        Ok(())
    })
}
