//! C ABI for `pathloop`.
//!
//! Every fallible function returns a [`PlStatus`]; on failure a message is
//! available from [`pl_last_error_message`] on the same thread. Potentials
//! and observables are opaque handles created by `*_new` and released by
//! `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pathloop::bounds::compute_constants;
use pathloop::estimators::{
    estimate_cl_discretized, estimate_cl_truncated, sample_std, ClConfig, EstimatorResult, StdSamplerConfig,
};
use pathloop::oracle::{exact_thermal_average, OracleSettings};
use pathloop::potentials::{ObservableKind, ObservableSpec, PotentialKind, PotentialSpec};
use pathloop::spectral::{covariance, CovarianceMethod};
use pathloop::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    OracleFailed = 4,
    SamplerDiverged = 5,
    WeightUnderflow = 6,
    AssumptionViolated = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlPotentialKind {
    /// `ω²|q|²/2`
    Harmonic = 0,
    /// `ω²|q|²/2 + c·cos(k·Σq_i)`
    SoftBumped = 1,
    /// `|q|⁴`
    Quartic = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlObservableKind {
    Constant = 0,
    Position = 1,
    Square = 2,
    Tanh = 3,
    TanhSquared = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlCovarianceMethod {
    Spectral = 0,
    Closed = 1,
    Mehler = 2,
}

/// Opaque potential handle.
pub struct PlPotential(PotentialSpec);

/// Opaque observable handle.
pub struct PlObservable(ObservableSpec);

/// A Monte Carlo estimate. `acceptance` is NaN for the CL estimators.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub ess: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub ess_warning: bool,
    pub acceptance: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlBoundConstants {
    pub c0: f64,
    pub k1: f64,
    pub k2: f64,
    pub k: f64,
    pub l1: f64,
    pub l2: f64,
    pub l: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> PlStatus {
    match e {
        Error::InvalidArgument(_) | Error::Config(_) => PlStatus::InvalidArgument,
        Error::DimensionMismatch { .. } => PlStatus::DimensionMismatch,
        Error::OracleNotConverged { .. } | Error::OracleDomain { .. } => PlStatus::OracleFailed,
        Error::SamplerDiverged { .. } => PlStatus::SamplerDiverged,
        Error::WeightUnderflow => PlStatus::WeightUnderflow,
        Error::AssumptionViolated(_) => PlStatus::AssumptionViolated,
        _ => PlStatus::Other,
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (PlStatus, String)>>(f: F) -> PlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PlStatus::Ok,
        Ok(Err((s, msg))) => {
            set_error(&msg);
            s
        }
        Err(_) => {
            set_error("internal panic");
            PlStatus::Panic
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (PlStatus, String)>;
}

impl<T> IntoFfi<T> for pathloop::Result<T> {
    fn ffi(self) -> Result<T, (PlStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (PlStatus, String) {
    (PlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, (PlStatus, String)> {
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), (PlStatus, String)> {
    if out.is_null() {
        return Err(null(what));
    }
    unsafe { out.write(value) };
    Ok(())
}

fn to_ffi(r: &EstimatorResult) -> PlEstimate {
    PlEstimate {
        estimate: r.estimate,
        std_error: r.std_error,
        ess: r.ess,
        n_samples: r.n_samples as u64,
        seed: r.seed,
        ess_warning: r.ess_warning,
        acceptance: r.acceptance.unwrap_or(f64::NAN),
    }
}

/// Message of the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a NUL-terminated string with static lifetime.
#[no_mangle]
pub extern "C" fn pl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a potential. `omega`, `c` and `k` are ignored where the kind has
/// no such parameter.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pl_potential_new(
    kind: PlPotentialKind,
    omega: f64,
    c: f64,
    k: f64,
    dim: usize,
    a: f64,
    m1: f64,
    out: *mut *mut PlPotential,
) -> PlStatus {
    guard(|| {
        let kind = match kind {
            PlPotentialKind::Harmonic => PotentialKind::Harmonic { omega },
            PlPotentialKind::SoftBumped => PotentialKind::SoftBumped { omega, c, k },
            PlPotentialKind::Quartic => PotentialKind::Quartic,
        };
        let p = PotentialSpec::new(kind, dim, a, m1).ffi()?;
        unsafe { write(out, Box::into_raw(Box::new(PlPotential(p))), "out") }
    })
}

/// # Safety
/// `p` must be null or a handle from [`pl_potential_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_potential_free(p: *mut PlPotential) {
    if !p.is_null() {
        drop(unsafe { Box::from_raw(p) });
    }
}

/// `V^a(q) = V(q) − a²|q|²/2` at a point of length `dim`.
///
/// # Safety
/// `p` must be a live handle, `q` must point to `dim` doubles and `out` to
/// one writable double.
#[no_mangle]
pub unsafe extern "C" fn pl_potential_va(p: *const PlPotential, q: *const f64, dim: usize, out: *mut f64) -> PlStatus {
    guard(|| {
        let p = unsafe { deref(p, "potential") }?;
        if q.is_null() {
            return Err(null("q"));
        }
        let q = unsafe { std::slice::from_raw_parts(q, dim) };
        let v = p.0.va_eval(q).ffi()?;
        unsafe { write(out, v, "out") }
    })
}

/// Creates an observable. `value` is used only by the constant kind.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pl_observable_new(
    kind: PlObservableKind,
    value: f64,
    dim: usize,
    m2: f64,
    out: *mut *mut PlObservable,
) -> PlStatus {
    guard(|| {
        let kind = match kind {
            PlObservableKind::Constant => ObservableKind::Constant { value },
            PlObservableKind::Position => ObservableKind::Position,
            PlObservableKind::Square => ObservableKind::Square,
            PlObservableKind::Tanh => ObservableKind::Tanh,
            PlObservableKind::TanhSquared => ObservableKind::TanhSquared,
        };
        let o = ObservableSpec::new(kind, dim, m2).ffi()?;
        unsafe { write(out, Box::into_raw(Box::new(PlObservable(o))), "out") }
    })
}

/// # Safety
/// `o` must be null or a handle from [`pl_observable_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pl_observable_free(o: *mut PlObservable) {
    if !o.is_null() {
        drop(unsafe { Box::from_raw(o) });
    }
}

/// Grid-oracle thermal average for `d = 1`. `q_max ≤ 0` selects the default
/// box.
///
/// # Safety
/// Handles must be live and `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn pl_exact_average(
    p: *const PlPotential,
    o: *const PlObservable,
    beta: f64,
    n_grid: usize,
    q_max: f64,
    tol: f64,
    out: *mut f64,
) -> PlStatus {
    guard(|| {
        let (p, o) = unsafe { (deref(p, "potential")?, deref(o, "observable")?) };
        let settings = OracleSettings { n_grid, q_max: (q_max > 0.0).then_some(q_max), tol };
        let r = exact_thermal_average(&p.0, &o.0, beta, &settings).ffi()?;
        unsafe { write(out, r.value, "out") }
    })
}

/// Truncated CL estimate with `n_modes` modes. `n_quad = 0` selects the
/// default rule.
///
/// # Safety
/// Handles must be live and `out` must point to one writable estimate.
#[no_mangle]
pub unsafe extern "C" fn pl_estimate_cl(
    p: *const PlPotential,
    o: *const PlObservable,
    beta: f64,
    n_modes: usize,
    n_quad: usize,
    n_samples: usize,
    seed: u64,
    out: *mut PlEstimate,
) -> PlStatus {
    guard(|| {
        let (p, o) = unsafe { (deref(p, "potential")?, deref(o, "observable")?) };
        let cfg = ClConfig::new(n_samples, seed);
        let (r, _) = estimate_cl_truncated(&p.0, &o.0, beta, n_modes, (n_quad > 0).then_some(n_quad), &cfg).ffi()?;
        unsafe { write(out, to_ffi(&r), "out") }
    })
}

/// Discretised CL estimate with `n_modes` modes on `beads` beads.
///
/// # Safety
/// Handles must be live and `out` must point to one writable estimate.
#[no_mangle]
pub unsafe extern "C" fn pl_estimate_cl_disc(
    p: *const PlPotential,
    o: *const PlObservable,
    beta: f64,
    n_modes: usize,
    beads: usize,
    n_samples: usize,
    seed: u64,
    out: *mut PlEstimate,
) -> PlStatus {
    guard(|| {
        let (p, o) = unsafe { (deref(p, "potential")?, deref(o, "observable")?) };
        let cfg = ClConfig::new(n_samples, seed);
        let (r, _) = estimate_cl_discretized(&p.0, &o.0, beta, n_modes, beads, &cfg).ffi()?;
        unsafe { write(out, to_ffi(&r), "out") }
    })
}

/// Ring-polymer estimate on `beads` beads from four Metropolis-adjusted
/// Langevin chains with `n_steps` steps each.
///
/// # Safety
/// Handles must be live and `out` must point to one writable estimate.
#[no_mangle]
pub unsafe extern "C" fn pl_estimate_std(
    p: *const PlPotential,
    o: *const PlObservable,
    beta: f64,
    beads: usize,
    n_steps: usize,
    step_h: f64,
    seed: u64,
    out: *mut PlEstimate,
) -> PlStatus {
    guard(|| {
        let (p, o) = unsafe { (deref(p, "potential")?, deref(o, "observable")?) };
        let cfg = StdSamplerConfig { n_steps, step_h, seed, ..Default::default() };
        let r = sample_std(&p.0, &o.0, beta, beads, &cfg).ffi()?;
        unsafe { write(out, to_ffi(&r), "out") }
    })
}

/// Loop covariance `E_ν[x(0)·x(τ)]/d`. `k_max` is used by the spectral
/// method only; `tail_bound` may be null.
///
/// # Safety
/// `value` must point to one writable double; `tail_bound` may be null.
#[no_mangle]
pub unsafe extern "C" fn pl_covariance(
    beta: f64,
    a: f64,
    tau: f64,
    method: PlCovarianceMethod,
    k_max: usize,
    value: *mut f64,
    tail_bound: *mut f64,
) -> PlStatus {
    guard(|| {
        let m = match method {
            PlCovarianceMethod::Spectral => CovarianceMethod::Spectral { k_max },
            PlCovarianceMethod::Closed => CovarianceMethod::Closed,
            PlCovarianceMethod::Mehler => CovarianceMethod::Mehler,
        };
        let c = covariance(beta, a, tau, m).ffi()?;
        unsafe { write(value, c.value, "value") }?;
        if !tail_bound.is_null() {
            unsafe { tail_bound.write(c.tail_bound) };
        }
        Ok(())
    })
}

/// # Safety
/// `out` must point to one writable constants struct.
#[no_mangle]
pub unsafe extern "C" fn pl_bound_constants(
    m1: f64,
    m2: f64,
    beta: f64,
    dim: usize,
    a: f64,
    out: *mut PlBoundConstants,
) -> PlStatus {
    guard(|| {
        let c = compute_constants(m1, m2, beta, dim, a).ffi()?;
        let v = PlBoundConstants { c0: c.c0, k1: c.k1, k2: c.k2, k: c.k, l1: c.l1, l2: c.l2, l: c.l };
        unsafe { write(out, v, "out") }
    })
}
