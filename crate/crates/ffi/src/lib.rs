//! C ABI for `d2dspread`.
//!
//! Conventions:
//! - Every fallible function returns a [`D2dStatus`]; results go through
//!   out-pointers that are written only on success.
//! - Missions and optimization results are opaque handles created by this
//!   library and released with the matching `*_free` function.
//! - After a failure, `d2d_last_error_message` yields a description of the
//!   most recent error on the calling thread.
//! - Layer and strand indices are 0-based; densities are per km², ranges km.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use d2dspread::degree::{strand_model, DegreeDistribution, LayerSpec, StrandId};
use d2dspread::epidemic::{epidemic_threshold, solve_theta_exact, SolveOptions};
use d2dspread::mission::{load_mission, parse_mission, preset};
use d2dspread::optimizer::{optimize, MissionSpec, OptimizationResult};
use d2dspread::Error;

/// Outcome of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParameter = 2,
    Infeasible = 3,
    NonConvergence = 4,
    Schema = 5,
    Io = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Kind of information strand.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum D2dStrandKind {
    /// Within layer `m`.
    Intra = 0,
    /// From layer `m` into layer `n`, within layer `m`'s range.
    Inter = 1,
    /// Every device, any layer.
    Combined = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct D2dStrand {
    pub kind: D2dStrandKind,
    pub m: usize,
    pub n: usize,
}

/// Opaque mission handle.
pub struct D2dMission(MissionSpec);

/// Opaque optimization result handle.
pub struct D2dOptimization(OptimizationResult);

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_last_error(msg: &str) {
    LAST_ERROR.with(|e| {
        let mut v = e.borrow_mut();
        v.clear();
        v.extend(msg.bytes().filter(|&b| b != 0));
    });
}

fn status_of(err: &Error) -> D2dStatus {
    match err {
        Error::Infeasible(_) | Error::InfeasibleByThreat(_) => D2dStatus::Infeasible,
        Error::NonConvergence { .. } | Error::StepSize { .. } => D2dStatus::NonConvergence,
        Error::Schema { .. } | Error::WeightSum(_) => D2dStatus::Schema,
        Error::Io(_) => D2dStatus::Io,
        _ => D2dStatus::InvalidParameter,
    }
}

/// Runs `f`, recording errors and converting panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (D2dStatus, String)>) -> D2dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => D2dStatus::Ok,
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            D2dStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (D2dStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (D2dStatus, String) {
    (D2dStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (D2dStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        (
            D2dStatus::InvalidParameter,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn layers_arg(
    density: *const f64,
    range_km: *const f64,
    layers: usize,
) -> Result<Vec<LayerSpec>, (D2dStatus, String)> {
    if density.is_null() || range_km.is_null() {
        return Err(null("layer array"));
    }
    if layers == 0 {
        return Err((
            D2dStatus::InvalidParameter,
            "at least one layer is required".into(),
        ));
    }
    let d = std::slice::from_raw_parts(density, layers);
    let r = std::slice::from_raw_parts(range_km, layers);
    d.iter()
        .zip(r)
        .map(|(&l, &r)| LayerSpec::fixed(l, r).map_err(lib_err))
        .collect()
}

fn strand_arg(s: D2dStrand, layers: usize) -> Result<StrandId, (D2dStatus, String)> {
    let id = match s.kind {
        D2dStrandKind::Intra => StrandId::Intra(s.m),
        D2dStrandKind::Inter => StrandId::Inter(s.m, s.n),
        D2dStrandKind::Combined => StrandId::Combined,
    };
    id.check(layers).map_err(lib_err)?;
    Ok(id)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn d2d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn d2d_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Mean and second moment of a strand's degree law.
///
/// # Safety
/// `density` and `range_km` must point to `layers` values; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_degree_moments(
    density: *const f64,
    range_km: *const f64,
    layers: usize,
    strand: D2dStrand,
    mean_out: *mut f64,
    second_moment_out: *mut f64,
) -> D2dStatus {
    guard(|| {
        if mean_out.is_null() || second_moment_out.is_null() {
            return Err(null("output"));
        }
        let specs = layers_arg(density, range_km, layers)?;
        let model = strand_model(&specs, strand_arg(strand, layers)?).map_err(lib_err)?;
        *mean_out = model.mean();
        *second_moment_out = model.second_moment();
        Ok(())
    })
}

/// Spreading-rate threshold `E[K]/E[K²]` of a strand.
///
/// # Safety
/// As [`d2d_degree_moments`].
#[no_mangle]
pub unsafe extern "C" fn d2d_epidemic_threshold(
    density: *const f64,
    range_km: *const f64,
    layers: usize,
    strand: D2dStrand,
    threshold_out: *mut f64,
) -> D2dStatus {
    guard(|| {
        if threshold_out.is_null() {
            return Err(null("output"));
        }
        let specs = layers_arg(density, range_km, layers)?;
        let model = strand_model(&specs, strand_arg(strand, layers)?).map_err(lib_err)?;
        *threshold_out = epidemic_threshold(&model).map_err(lib_err)?;
        Ok(())
    })
}

/// Stationary neighbour-informed probability Θ and average informed density
/// of a strand at spreading rate `alpha`.
///
/// # Safety
/// As [`d2d_degree_moments`].
#[no_mangle]
pub unsafe extern "C" fn d2d_solve_equilibrium(
    density: *const f64,
    range_km: *const f64,
    layers: usize,
    strand: D2dStrand,
    alpha: f64,
    theta_out: *mut f64,
    avg_informed_out: *mut f64,
) -> D2dStatus {
    guard(|| {
        if theta_out.is_null() || avg_informed_out.is_null() {
            return Err(null("output"));
        }
        let specs = layers_arg(density, range_km, layers)?;
        let model = strand_model(&specs, strand_arg(strand, layers)?).map_err(lib_err)?;
        let eq = solve_theta_exact(&model, alpha, SolveOptions::default()).map_err(lib_err)?;
        *theta_out = eq.theta;
        *avg_informed_out = eq.average_informed;
        Ok(())
    })
}

fn boxed_mission(out: *mut *mut D2dMission, spec: MissionSpec) {
    // SAFETY: callers checked `out` for null.
    unsafe { *out = Box::into_raw(Box::new(D2dMission(spec))) };
}

/// Bundled mission by name ("intelligence" or "encounter").
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_preset(
    name: *const c_char,
    out: *mut *mut D2dMission,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = preset(str_arg(name, "name")?).map_err(lib_err)?;
        boxed_mission(out, spec);
        Ok(())
    })
}

/// Mission from a JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_load(
    path: *const c_char,
    out: *mut *mut D2dMission,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = load_mission(str_arg(path, "path")?).map_err(lib_err)?;
        boxed_mission(out, spec);
        Ok(())
    })
}

/// Mission from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_from_json(
    json: *const c_char,
    out: *mut *mut D2dMission,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let spec = parse_mission(str_arg(json, "json")?).map_err(lib_err)?;
        boxed_mission(out, spec);
        Ok(())
    })
}

/// Sets the threat level δ ∈ [0, 1].
///
/// # Safety
/// `mission` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_set_delta(mission: *mut D2dMission, delta: f64) -> D2dStatus {
    guard(|| {
        let m = mission.as_mut().ok_or_else(|| null("mission"))?;
        m.0 = m.0.with_delta(delta).map_err(lib_err)?;
        Ok(())
    })
}

/// Number of layers, or 0 for a null handle.
///
/// # Safety
/// `mission` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_layer_count(mission: *const D2dMission) -> usize {
    mission.as_ref().map_or(0, |m| m.0.layer_count())
}

/// Releases a mission; null is ignored.
///
/// # Safety
/// `mission` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_mission_free(mission: *mut D2dMission) {
    if !mission.is_null() {
        drop(Box::from_raw(mission));
    }
}

/// Minimum-cost design for the mission at its current threat level.
/// Returns `D2D_STATUS_INFEASIBLE` when no design meets the requirements.
///
/// # Safety
/// `mission` must be a live handle; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimize(
    mission: *const D2dMission,
    out: *mut *mut D2dOptimization,
) -> D2dStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let m = mission.as_ref().ok_or_else(|| null("mission"))?;
        let res = optimize(&m.0, None).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(D2dOptimization(res)));
        Ok(())
    })
}

/// Cost per km² of the optimized design.
///
/// # Safety
/// `result` must be a live handle; `cost_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimization_cost(
    result: *const D2dOptimization,
    cost_out: *mut f64,
) -> D2dStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        let out = cost_out.as_mut().ok_or_else(|| null("output"))?;
        *out = r.0.cost;
        Ok(())
    })
}

/// Alternation rounds used by the winning start.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimization_iterations(result: *const D2dOptimization) -> usize {
    result.as_ref().map_or(0, |r| r.0.acs_iterations)
}

/// Copies the design into caller arrays of `len` entries each; `len` must be
/// at least the layer count (`D2D_STATUS_BUFFER_TOO_SMALL` otherwise).
///
/// # Safety
/// `result` must be a live handle; arrays must hold `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimization_design(
    result: *const D2dOptimization,
    density_out: *mut f64,
    range_km_out: *mut f64,
    len: usize,
) -> D2dStatus {
    guard(|| {
        let r = result.as_ref().ok_or_else(|| null("result"))?;
        if density_out.is_null() || range_km_out.is_null() {
            return Err(null("output"));
        }
        let n = r.0.design.density.len();
        if len < n {
            return Err((
                D2dStatus::BufferTooSmall,
                format!("need {n} entries, got {len}"),
            ));
        }
        ptr::copy_nonoverlapping(r.0.design.density.as_ptr(), density_out, n);
        ptr::copy_nonoverlapping(r.0.design.range_km.as_ptr(), range_km_out, n);
        Ok(())
    })
}

/// Releases a result; null is ignored.
///
/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn d2d_optimization_free(result: *mut D2dOptimization) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}
