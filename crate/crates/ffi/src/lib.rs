//! C ABI for the `vaxmfg` solver.
//!
//! Conventions:
//! - Every function returns a [`VaxStatus`]; results come back through out
//!   pointers. On failure a message is available from
//!   [`vax_last_error_message`] on the same thread.
//! - Configurations and solutions are opaque handles created by this library
//!   and released with the matching `*_free` function.
//! - Panics never cross the boundary; they surface as `VAX_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use vaxmfg::model::HealthState;
use vaxmfg::oracle::closed_form_u_i;
use vaxmfg::{fixed_point_solve, EquilibriumSolution, GroupParams, MfgError, ModelConfig};

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Unreadable or malformed configuration.
    Config = 3,
    /// A parameter violates a model invariant.
    Validation = 4,
    /// The time step is too coarse or the iteration blew up.
    Numerical = 5,
    /// The solve finished without meeting the tolerance. The solution handle
    /// is still produced and must be freed.
    NotConverged = 6,
    /// The caller's buffer is too short; the required length is reported.
    BufferTooSmall = 7,
    /// Group, state or series index out of range.
    OutOfRange = 8,
    Internal = 9,
}

/// Health states, for guideline setters.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaxState {
    Susceptible = 0,
    Infected = 1,
    Recovered = 2,
}

/// Per-group time series exposed by [`vax_solution_copy_series`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaxSeries {
    Time = 0,
    DensityS = 1,
    DensityI = 2,
    DensityR = 3,
    ValueS = 4,
    ValueI = 5,
    ValueR = 6,
    AlphaS = 7,
    Nu = 8,
    Aggregate = 9,
    /// Mass-weighted infected share of the whole population; `group` ignored.
    CompositeInfected = 10,
}

/// Opaque model configuration.
pub struct VaxConfig(ModelConfig);

/// Opaque equilibrium solution.
pub struct VaxSolution(EquilibriumSolution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: VaxStatus, msg: impl Into<String>) -> VaxStatus {
    set_last_error(msg.into());
    status
}

fn status_of(err: &MfgError) -> VaxStatus {
    match err {
        MfgError::Validation(_) | MfgError::Domain(_) | MfgError::Deviation(_) => {
            VaxStatus::Validation
        }
        MfgError::StepSize { .. }
        | MfgError::NumericalInstability { .. }
        | MfgError::Invariant(_) => VaxStatus::Numerical,
        MfgError::Internal(_) => VaxStatus::Internal,
        _ => VaxStatus::Config,
    }
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<VaxStatus, (VaxStatus, String)>) -> VaxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err((s, msg))) => fail(s, msg),
        Err(_) => fail(VaxStatus::Internal, "panic inside vaxmfg"),
    }
}

fn lift(err: MfgError) -> (VaxStatus, String) {
    (status_of(&err), err.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VaxStatus, String)> {
    if p.is_null() {
        return Err((VaxStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VaxStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (VaxStatus, String)> {
    p.as_ref()
        .ok_or_else(|| (VaxStatus::NullPointer, format!("{what} is null")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (VaxStatus, String)> {
    p.as_mut()
        .ok_or_else(|| (VaxStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), (VaxStatus, String)> {
    if out.is_null() {
        return Err((VaxStatus::NullPointer, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn new_config(
    out: *mut *mut VaxConfig,
    make: impl FnOnce() -> vaxmfg::Result<ModelConfig>,
) -> VaxStatus {
    guard(|| {
        if out.is_null() {
            return Err((VaxStatus::NullPointer, "output pointer is null".into()));
        }
        out.write(ptr::null_mut());
        let cfg = make().map_err(lift)?;
        cfg.validate().map_err(lift)?;
        out.write(Box::into_raw(Box::new(VaxConfig(cfg))));
        Ok(VaxStatus::Ok)
    })
}

/// Message describing the last failure on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vax_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vax_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Built-in parameter set, `"table1"` or `"table2"`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_config_from_preset(
    name: *const c_char,
    out: *mut *mut VaxConfig,
) -> VaxStatus {
    let name = match str_arg(name, "name") {
        Ok(n) => n,
        Err((s, m)) => return fail(s, m),
    };
    new_config(out, || ModelConfig::preset(name))
}

/// Parses a TOML model description.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_config_from_toml(
    text: *const c_char,
    out: *mut *mut VaxConfig,
) -> VaxStatus {
    let text = match str_arg(text, "text") {
        Ok(t) => t,
        Err((s, m)) => return fail(s, m),
    };
    new_config(out, || {
        ModelConfig::from_toml_str(text, Path::new("<string>"))
    })
}

/// Loads a TOML model file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_config_from_file(
    path: *const c_char,
    out: *mut *mut VaxConfig,
) -> VaxStatus {
    let path = match str_arg(path, "path") {
        Ok(p) => p,
        Err((s, m)) => return fail(s, m),
    };
    new_config(out, || ModelConfig::load(Path::new(path)))
}

/// Releases a configuration. Null is ignored.
///
/// # Safety
/// `cfg` must come from a `vax_config_from_*` call and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vax_config_free(cfg: *mut VaxConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Applies `edit` and re-validates; the config is left unchanged on error.
unsafe fn edit_config(cfg: *mut VaxConfig, edit: impl FnOnce(&mut ModelConfig)) -> VaxStatus {
    guard(|| {
        let c = handle_mut(cfg, "config")?;
        let mut next = c.0.clone();
        edit(&mut next);
        next.validate().map_err(lift)?;
        c.0 = next;
        Ok(VaxStatus::Ok)
    })
}

/// Sets `c_pS = c_pI = cp` for every group and enables awareness.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vax_config_set_awareness(cfg: *mut VaxConfig, cp: f64) -> VaxStatus {
    edit_config(cfg, |c| c.set_awareness(cp))
}

/// Sets a constant guideline level for `state` in every group.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vax_config_set_guideline(
    cfg: *mut VaxConfig,
    state: VaxState,
    value: f64,
) -> VaxStatus {
    let state = match state {
        VaxState::Susceptible => HealthState::S,
        VaxState::Infected => HealthState::I,
        VaxState::Recovered => HealthState::R,
    };
    edit_config(cfg, |c| c.set_guideline(state, value))
}

/// Sets the same vaccination cost in every group.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vax_config_set_vaccination_cost(
    cfg: *mut VaxConfig,
    c_nu: f64,
) -> VaxStatus {
    edit_config(cfg, |c| c.set_vaccination_cost(c_nu))
}

/// Fixed-point tolerance, iteration cap and damping weight.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vax_config_set_solver(
    cfg: *mut VaxConfig,
    epsilon: f64,
    max_iterations: usize,
    damping: f64,
) -> VaxStatus {
    edit_config(cfg, |c| {
        c.solver.epsilon = epsilon;
        c.solver.max_iterations = max_iterations;
        c.solver.damping = damping;
    })
}

/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_config_n_groups(cfg: *const VaxConfig, out: *mut usize) -> VaxStatus {
    guard(|| {
        put(out, handle(cfg, "config")?.0.n_groups())?;
        Ok(VaxStatus::Ok)
    })
}

/// Solves for the equilibrium. Returns `VAX_STATUS_OK` on convergence and
/// `VAX_STATUS_NOT_CONVERGED` otherwise; in both cases `*out` holds a
/// solution to be released with [`vax_solution_free`]. On any other status
/// `*out` is null.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_solve(cfg: *const VaxConfig, out: *mut *mut VaxSolution) -> VaxStatus {
    guard(|| {
        if out.is_null() {
            return Err((VaxStatus::NullPointer, "output pointer is null".into()));
        }
        out.write(ptr::null_mut());
        let c = &handle(cfg, "config")?.0;
        let sol = fixed_point_solve(c, &c.solver).map_err(lift)?;
        let status = if sol.converged {
            VaxStatus::Ok
        } else {
            set_last_error(format!(
                "no convergence after {} iterations",
                sol.iterations
            ));
            VaxStatus::NotConverged
        };
        out.write(Box::into_raw(Box::new(VaxSolution(sol))));
        Ok(status)
    })
}

/// Releases a solution. Null is ignored.
///
/// # Safety
/// `sol` must come from [`vax_solve`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vax_solution_free(sol: *mut VaxSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Grid size, group count, iteration count and convergence flag. Any out
/// pointer may be null to skip it.
///
/// # Safety
/// `sol` must be a live handle; non-null out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_solution_info(
    sol: *const VaxSolution,
    n_points: *mut usize,
    n_groups: *mut usize,
    iterations: *mut usize,
    converged: *mut bool,
) -> VaxStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        if !n_points.is_null() {
            n_points.write(s.grid().n_points());
        }
        if !n_groups.is_null() {
            n_groups.write(s.config.n_groups());
        }
        if !iterations.is_null() {
            iterations.write(s.iterations);
        }
        if !converged.is_null() {
            converged.write(s.converged);
        }
        Ok(VaxStatus::Ok)
    })
}

/// Time at which the group stops vaccinating (0 if it never starts, the
/// horizon if it never stops) and the number of switches.
///
/// # Safety
/// `sol` must be a live handle; out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_solution_jump(
    sol: *const VaxSolution,
    group: usize,
    jump_time: *mut f64,
    crossing_count: *mut usize,
) -> VaxStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        let j = s
            .jumps
            .groups
            .get(group)
            .ok_or_else(|| (VaxStatus::OutOfRange, format!("group {group} out of range")))?;
        put(jump_time, j.jump_time)?;
        put(crossing_count, j.crossing_count)?;
        Ok(VaxStatus::Ok)
    })
}

/// Copies one time series (one value per grid point) into `buf`. `*written`
/// receives the number of points; if `len` is too small nothing is copied,
/// `*written` holds the required length and `VAX_STATUS_BUFFER_TOO_SMALL` is
/// returned.
///
/// # Safety
/// `sol` must be a live handle; `buf` must hold `len` doubles; `written`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_solution_copy_series(
    sol: *const VaxSolution,
    group: usize,
    series: VaxSeries,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> VaxStatus {
    guard(|| {
        let s = &handle(sol, "solution")?.0;
        if group >= s.config.n_groups() {
            return Err((VaxStatus::OutOfRange, format!("group {group} out of range")));
        }
        let n = s.grid().n_points();
        put(written, n)?;
        if len < n {
            return Err((
                VaxStatus::BufferTooSmall,
                format!("buffer holds {len} values, {n} needed"),
            ));
        }
        if buf.is_null() {
            return Err((VaxStatus::NullPointer, "buffer is null".into()));
        }
        let out = std::slice::from_raw_parts_mut(buf, n);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = match series {
                VaxSeries::Time => s.grid().time(i),
                VaxSeries::DensityS => s.p.get(i, group, HealthState::S),
                VaxSeries::DensityI => s.p.get(i, group, HealthState::I),
                VaxSeries::DensityR => s.p.get(i, group, HealthState::R),
                VaxSeries::ValueS => s.u.get(i, group, HealthState::S),
                VaxSeries::ValueI => s.u.get(i, group, HealthState::I),
                VaxSeries::ValueR => s.u.get(i, group, HealthState::R),
                VaxSeries::AlphaS => s.controls.alpha(i, group, HealthState::S),
                VaxSeries::Nu => s.controls.nu(i, group),
                VaxSeries::Aggregate => s.z.get(i, group),
                VaxSeries::CompositeInfected => s.composite_infected[i],
            };
        }
        Ok(VaxStatus::Ok)
    })
}

/// Exact infected value `(c_I / gamma) (1 - exp(-gamma (T - t)))`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vax_closed_form_value_infected(
    c_inf: f64,
    gamma: f64,
    horizon: f64,
    t: f64,
    out: *mut f64,
) -> VaxStatus {
    guard(|| {
        if gamma.is_nan() || gamma <= 0.0 {
            return Err((
                VaxStatus::Validation,
                format!("gamma = {gamma} must be positive"),
            ));
        }
        let params = GroupParams {
            beta: 0.0,
            gamma,
            kappa: 0.0,
            c_lambda: 1.0,
            c_nu: 0.0,
            c_inf,
            c_aware_s: 0.0,
            c_aware_i: 0.0,
            mass: 1.0,
        };
        put(out, closed_form_u_i(&params, horizon, t).map_err(lift)?)?;
        Ok(VaxStatus::Ok)
    })
}
