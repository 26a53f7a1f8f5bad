//! C ABI for the `gmmv` crate.
//!
//! Every function returns a [`GmmvStatus`]. On anything but `GMMV_STATUS_OK` a
//! message is available from [`gmmv_last_error`] on the calling thread.
//! Matrices cross the boundary as column-major `double` buffers; an ensemble
//! buffer holds its `d` matrices back to back. Ensembles are opaque handles
//! released with [`gmmv_ensemble_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gmmv::conditions::{self, BoundValue, Spark};
use gmmv::convex::{self, ConvexResult, SolverConfig, StepRule};
use gmmv::model::{self, MeasurementEnsemble, Observations, SupportSet};
use gmmv::momp::{self, MompConfig};
use gmmv::GmmvError;
use nalgebra::DMatrix;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GmmvStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConditionInapplicable = 3,
    Infeasible = 4,
    LimitExceeded = 5,
    NoSupportFound = 6,
    Io = 7,
    Parse = 8,
    Panic = 9,
}

/// Opaque measurement ensemble.
pub struct GmmvEnsemble(MeasurementEnsemble);

/// Pass as `sparsity` to [`gmmv_momp_solve`] to stop on the residual only.
pub const GMMV_NO_SPARSITY: usize = usize::MAX;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmvBound {
    pub raw: f64,
    pub clamped: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmvConditionReport {
    pub alpha: f64,
    pub gamma_col: f64,
    pub worst_case_block: f64,
    pub worst_case_individual: f64,
    pub delta_max: f64,
    pub mu_max: f64,
    /// NaN when some local isometry constant is at least one.
    pub momp_ratio: f64,
    pub eq7_holds: c_int,
    pub eq8_holds: c_int,
    pub rank_deficient: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmvSolverOptions {
    pub gamma_reg: f64,
    pub max_iters: usize,
    pub tol_obj: f64,
    pub tol_feas: f64,
    pub admm_rho: f64,
    pub polish: c_int,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GmmvSolveInfo {
    pub iterations_used: usize,
    /// NaN for the greedy solver.
    pub kkt_residual: f64,
    /// NaN unless the constrained solver ran.
    pub feasibility_residual: f64,
    pub converged: c_int,
    pub support_len: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GmmvError) -> GmmvStatus {
    match e {
        GmmvError::InvalidArgument(_) => GmmvStatus::InvalidArgument,
        GmmvError::ConditionInapplicable(_) => GmmvStatus::ConditionInapplicable,
        GmmvError::Infeasible { .. } => GmmvStatus::Infeasible,
        GmmvError::LimitExceeded(_) => GmmvStatus::LimitExceeded,
        GmmvError::NoSupportFound { .. } => GmmvStatus::NoSupportFound,
        GmmvError::Trial { source, .. } => status_of(source),
        GmmvError::Io { .. } => GmmvStatus::Io,
        GmmvError::Parse { .. } | GmmvError::Json(_) | GmmvError::Csv(_) => GmmvStatus::Parse,
    }
}

enum FfiError {
    Null(&'static str),
    Core(GmmvError),
}

impl From<GmmvError> for FfiError {
    fn from(e: GmmvError) -> Self {
        FfiError::Core(e)
    }
}

type FfiResult<T> = Result<T, FfiError>;

fn invalid(msg: impl Into<String>) -> FfiError {
    FfiError::Core(GmmvError::InvalidArgument(msg.into()))
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> GmmvStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GmmvStatus::Ok,
        Ok(Err(FfiError::Null(name))) => {
            set_error(format!("{name} is a null pointer"));
            GmmvStatus::NullPointer
        }
        Ok(Err(FfiError::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            GmmvStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, name: &'static str) -> FfiResult<&'a T> {
    p.as_ref().ok_or(FfiError::Null(name))
}

unsafe fn out<'a, T>(p: *mut T, name: &'static str) -> FfiResult<&'a mut T> {
    p.as_mut().ok_or(FfiError::Null(name))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &'static str) -> FfiResult<&'a [T]> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &'static str) -> FfiResult<&'a mut [T]> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char, name: &'static str) -> FfiResult<std::path::PathBuf> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{name} is not valid UTF-8")))?;
    Ok(s.into())
}

fn checked_len(parts: &[usize]) -> FfiResult<usize> {
    parts
        .iter()
        .try_fold(1usize, |acc, &v| acc.checked_mul(v))
        .ok_or_else(|| invalid("buffer size overflows"))
}

unsafe fn support_from(e: &MeasurementEnsemble, support: *const usize, s: usize) -> FfiResult<SupportSet> {
    let idx = slice(support, s, "support")?;
    Ok(SupportSet::new(idx.iter().copied(), e.cols())?)
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn gmmv_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// `d` independent standard Gaussian `m x n` matrices; `unit_columns != 0`
/// normalizes every column.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_gaussian(
    m: usize,
    n: usize,
    d: usize,
    unit_columns: c_int,
    seed: u64,
    out_handle: *mut *mut GmmvEnsemble,
) -> GmmvStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let e = model::generate_gaussian_ensemble(m, n, d, unit_columns != 0, seed)?;
        *slot = Box::into_raw(Box::new(GmmvEnsemble(e)));
        Ok(())
    })
}

/// Builds an ensemble from `d` column-major `m x n` matrices stored back to back.
///
/// # Safety
/// `data` must point to `m * n * d` doubles and `out_handle` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_from_column_major(
    m: usize,
    n: usize,
    d: usize,
    data: *const f64,
    out_handle: *mut *mut GmmvEnsemble,
) -> GmmvStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let len = checked_len(&[m, n, d])?;
        let buf = slice(data, len, "data")?;
        let step = m * n;
        let mats = (0..d).map(|i| DMatrix::from_column_slice(m, n, &buf[i * step..(i + 1) * step])).collect();
        *slot = Box::into_raw(Box::new(GmmvEnsemble(MeasurementEnsemble::new(mats)?)));
        Ok(())
    })
}

/// Loads an ensemble directory written by `gmmv gen ensemble` or [`gmmv_ensemble_save`].
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out_handle` valid.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_load(dir: *const c_char, out_handle: *mut *mut GmmvEnsemble) -> GmmvStatus {
    guard(|| {
        let slot = out(out_handle, "out_handle")?;
        let e = gmmv::io::load_ensemble(path(dir, "dir")?)?;
        *slot = Box::into_raw(Box::new(GmmvEnsemble(e)));
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library and `dir` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_save(handle: *const GmmvEnsemble, dir: *const c_char) -> GmmvStatus {
    guard(|| {
        let e = deref(handle, "handle")?;
        gmmv::io::save_ensemble(path(dir, "dir")?, &e.0)?;
        Ok(())
    })
}

/// # Safety
/// `handle` must come from this library; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_dims(
    handle: *const GmmvEnsemble,
    m: *mut usize,
    n: *mut usize,
    d: *mut usize,
) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        *out(m, "m")? = e.rows();
        *out(n, "n")? = e.cols();
        *out(d, "d")? = e.count();
        Ok(())
    })
}

/// Copies matrix `i` into `dst` (`m * n` doubles, column-major).
///
/// # Safety
/// `handle` must come from this library and `dst` hold `m * n` doubles.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_matrix(handle: *const GmmvEnsemble, i: usize, dst: *mut f64) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        if i >= e.count() {
            return Err(invalid(format!("matrix index {i} out of range 0..{}", e.count())));
        }
        let a = e.matrix(i);
        slice_mut(dst, a.len(), "dst")?.copy_from_slice(a.as_slice());
        Ok(())
    })
}

/// Releases an ensemble. NULL is ignored.
///
/// # Safety
/// `handle` must be NULL or come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gmmv_ensemble_free(handle: *mut GmmvEnsemble) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `handle` must come from this library, `support` hold `s` indices and
/// `report` be valid.
#[no_mangle]
pub unsafe extern "C" fn gmmv_check_conditions(
    handle: *const GmmvEnsemble,
    support: *const usize,
    s: usize,
    report: *mut GmmvConditionReport,
) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        let dst = out(report, "report")?;
        let sup = support_from(e, support, s)?;
        let r = conditions::evaluate_conditions(e, &sup, None)?;
        *dst = GmmvConditionReport {
            alpha: r.alpha,
            gamma_col: r.gamma_col,
            worst_case_block: r.worst_case_block,
            worst_case_individual: r.worst_case_individual,
            delta_max: r.isometry.delta_max,
            mu_max: r.isometry.mu_max,
            momp_ratio: r.momp_ratio.unwrap_or(f64::NAN),
            eq7_holds: r.flags.eq7_holds.into(),
            eq8_holds: r.flags.eq8_holds.into(),
            rank_deficient: r.rank_deficient.into(),
        };
        Ok(())
    })
}

/// Writes `delta_i(S)` and `mu_i(S)` for every matrix into buffers of length `d`.
///
/// # Safety
/// `handle` must come from this library, `support` hold `s` indices, and
/// `delta` and `mu` hold `d` doubles each.
#[no_mangle]
pub unsafe extern "C" fn gmmv_local_isometry(
    handle: *const GmmvEnsemble,
    support: *const usize,
    s: usize,
    delta: *mut f64,
    mu: *mut f64,
) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        let sup = support_from(e, support, s)?;
        let p = conditions::local_isometry(e, &sup)?;
        slice_mut(delta, e.count(), "delta")?.copy_from_slice(&p.delta);
        slice_mut(mu, e.count(), "mu")?.copy_from_slice(&p.mu);
        Ok(())
    })
}

unsafe fn observations(e: &MeasurementEnsemble, y: *const f64) -> FfiResult<Observations> {
    let (m, d) = (e.rows(), e.count());
    let buf = slice(y, m * d, "y")?;
    Ok(Observations::new(DMatrix::from_column_slice(m, d, buf), 0.0)?)
}

/// Writes the `n x d` estimate and its sorted support.
unsafe fn write_solution(
    estimate: &DMatrix<f64>,
    support: &SupportSet,
    x_out: *mut f64,
    support_out: *mut usize,
) -> FfiResult<()> {
    slice_mut(x_out, estimate.len(), "x_out")?.copy_from_slice(estimate.as_slice());
    slice_mut(support_out, support.len(), "support_out")?.copy_from_slice(support.indices());
    Ok(())
}

/// Greedy solver. `y` is `m x d` column-major; `x_out` receives `n x d`
/// column-major and `support_out` (capacity `n`) the sorted support.
/// `sparsity == GMMV_NO_SPARSITY` stops on `stop_residual` alone.
///
/// # Safety
/// All pointers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn gmmv_momp_solve(
    handle: *const GmmvEnsemble,
    y: *const f64,
    sparsity: usize,
    stop_residual: f64,
    x_out: *mut f64,
    support_out: *mut usize,
    info: *mut GmmvSolveInfo,
) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        let info = out(info, "info")?;
        let obs = observations(e, y)?;
        let cfg = MompConfig {
            max_iterations: None,
            stop_residual,
            known_support_size: (sparsity != GMMV_NO_SPARSITY).then_some(sparsity),
        };
        let r = momp::momp_solve(e, &obs, &cfg)?;
        write_solution(r.estimate.values(), r.support(), x_out, support_out)?;
        *info = GmmvSolveInfo {
            iterations_used: r.selected.len(),
            kkt_residual: f64::NAN,
            feasibility_residual: f64::NAN,
            converged: r.converged.into(),
            support_len: r.support().len(),
        };
        Ok(())
    })
}

/// Library defaults for the convex solvers.
#[no_mangle]
pub extern "C" fn gmmv_solver_options_default() -> GmmvSolverOptions {
    let d = SolverConfig::default();
    GmmvSolverOptions {
        gamma_reg: d.gamma_reg,
        max_iters: d.max_iters,
        tol_obj: d.tol_obj,
        tol_feas: d.tol_feas,
        admm_rho: d.admm_rho,
        polish: d.polish.into(),
    }
}

fn config(o: &GmmvSolverOptions) -> SolverConfig {
    SolverConfig {
        gamma_reg: o.gamma_reg,
        max_iters: o.max_iters,
        tol_obj: o.tol_obj,
        tol_feas: o.tol_feas,
        admm_rho: o.admm_rho,
        step_rule: StepRule::PowerIteration,
        polish: o.polish != 0,
    }
}

unsafe fn convex_common(
    handle: *const GmmvEnsemble,
    y: *const f64,
    options: *const GmmvSolverOptions,
    x_out: *mut f64,
    support_out: *mut usize,
    info: *mut GmmvSolveInfo,
    solve: fn(&MeasurementEnsemble, &Observations, &SolverConfig) -> gmmv::Result<ConvexResult>,
) -> GmmvStatus {
    guard(|| {
        let e = &deref(handle, "handle")?.0;
        let opts = deref(options, "options")?;
        let info = out(info, "info")?;
        let obs = observations(e, y)?;
        let r = solve(e, &obs, &config(opts))?;
        write_solution(&r.estimate, &r.support, x_out, support_out)?;
        *info = GmmvSolveInfo {
            iterations_used: r.iterations_used,
            kkt_residual: r.kkt_residual,
            feasibility_residual: r.feasibility_residual.unwrap_or(f64::NAN),
            converged: r.converged.into(),
            support_len: r.support.len(),
        };
        Ok(())
    })
}

/// Constrained mixed-norm minimization; buffers as for [`gmmv_momp_solve`].
///
/// # Safety
/// All pointers must be valid for the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn gmmv_lopt_solve(
    handle: *const GmmvEnsemble,
    y: *const f64,
    options: *const GmmvSolverOptions,
    x_out: *mut f64,
    support_out: *mut usize,
    info: *mut GmmvSolveInfo,
) -> GmmvStatus {
    convex_common(handle, y, options, x_out, support_out, info, convex::lopt_solve)
}

/// Penalized mixed-norm least squares with weight `options->gamma_reg`.
///
/// # Safety
/// All pointers must be valid for the documented sizes.
#[no_mangle]
pub unsafe extern "C" fn gmmv_popt_solve(
    handle: *const GmmvEnsemble,
    y: *const f64,
    options: *const GmmvSolverOptions,
    x_out: *mut f64,
    support_out: *mut usize,
    info: *mut GmmvSolveInfo,
) -> GmmvStatus {
    convex_common(handle, y, options, x_out, support_out, info, convex::popt_solve)
}

fn bound(dst: *mut GmmvBound, f: impl FnOnce() -> gmmv::Result<BoundValue>) -> GmmvStatus {
    guard(|| {
        // SAFETY: the caller passes a valid pointer or NULL
        let slot = unsafe { out(dst, "out") }?;
        let v = f()?;
        *slot = GmmvBound { raw: v.raw, clamped: v.clamped };
        Ok(())
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_bound_lopt_subgaussian(
    n: usize,
    s: usize,
    d: usize,
    alpha: f64,
    gamma_col: f64,
    rho: f64,
    xi: f64,
    out: *mut GmmvBound,
) -> GmmvStatus {
    bound(out, || conditions::bound_lopt_subgaussian(n, s, d, alpha, gamma_col, rho, xi))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_bound_lopt_gaussian(
    n: usize,
    s: usize,
    d: usize,
    alpha: f64,
    gamma_col: f64,
    xi: f64,
    out: *mut GmmvBound,
) -> GmmvStatus {
    bound(out, || conditions::bound_lopt_gaussian(n, s, d, alpha, gamma_col, xi))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_bound_momp(
    n: usize,
    s: usize,
    d: usize,
    beta: f64,
    rho: f64,
    c_sa: f64,
    out: *mut GmmvBound,
) -> GmmvStatus {
    bound(out, || conditions::bound_momp(n, s, d, beta, rho, c_sa))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_bound_momp_gaussian(
    n: usize,
    s: usize,
    d: usize,
    beta: f64,
    varsigma: f64,
    c_sa: f64,
    out: *mut GmmvBound,
) -> GmmvStatus {
    bound(out, || conditions::bound_momp_gaussian(n, s, d, beta, varsigma, c_sa))
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gmmv_bound_popt_noisy(
    d: usize,
    alpha: f64,
    gamma_reg: f64,
    xi: f64,
    out: *mut GmmvBound,
) -> GmmvStatus {
    bound(out, || conditions::bound_popt_noisy(d, alpha, gamma_reg, xi))
}

/// Spark of a column-major `m x n` matrix. `*infinite` is set to 1 when every
/// column subset is independent, in which case `*spark_out` is 0.
///
/// # Safety
/// `a` must hold `m * n` doubles; the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gmmv_spark(
    a: *const f64,
    m: usize,
    n: usize,
    max_n: usize,
    spark_out: *mut usize,
    infinite: *mut c_int,
) -> GmmvStatus {
    guard(|| {
        let buf = slice(a, checked_len(&[m, n])?, "a")?;
        let sp = out(spark_out, "spark_out")?;
        let inf = out(infinite, "infinite")?;
        match conditions::spark(&DMatrix::from_column_slice(m, n, buf), max_n)? {
            Spark::Finite(k) => {
                *sp = k;
                *inf = 0;
            }
            Spark::Infinite => {
                *sp = 0;
                *inf = 1;
            }
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_handle_is_reported() {
        let mut m = 0;
        let status = unsafe { gmmv_ensemble_dims(ptr::null(), &mut m, &mut m, &mut m) };
        assert_eq!(status, GmmvStatus::NullPointer);
        let msg = unsafe { CStr::from_ptr(gmmv_last_error()) }.to_str().unwrap();
        assert!(msg.contains("handle"));
    }

    #[test]
    fn success_clears_error() {
        let mut b = GmmvBound { raw: 0.0, clamped: 0.0 };
        assert_eq!(unsafe { gmmv_bound_momp(10, 2, 1, 2.0, 0.5, -1.0, &mut b) }, GmmvStatus::InvalidArgument);
        assert!(!gmmv_last_error().is_null());
        assert_eq!(unsafe { gmmv_bound_momp(10, 2, 1, 0.5, 0.5, 1.0, &mut b) }, GmmvStatus::Ok);
        assert!(gmmv_last_error().is_null());
    }
}
