//! C ABI over `bridge_lab`.
//!
//! Every fallible call returns a `BlStatus` and writes results through out-pointers.
//! On a nonzero status, `bl_last_error_message` returns a description that stays valid
//! until the next call on the same thread. Distributions are opaque handles created by
//! the `bl_dist_*` constructors and released with `bl_dist_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use bridge_lab::{se, theory, Error, QStarConfig, QuadConfig, RiskModel, SeConfig, SignalDistribution, Validity};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlStatus {
    Ok = 0,
    InvalidArgument = 1,
    NumericalFailure = 2,
    NonConvergence = 3,
    Inapplicable = 4,
    NullPointer = 5,
    Panic = 6,
}

/// Opaque signal distribution.
pub struct BlDist {
    inner: SignalDistribution,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlProx {
    pub value: f64,
    pub d_du: f64,
    pub d_dchi: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlSeOutcome {
    pub sigma_bar: f64,
    pub chi_star: f64,
    pub amse: f64,
    pub iterations: u64,
    pub residual: f64,
}

/// 0 valid, 1 LASSO rate bracket only, 2 inapplicable.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct BlExpansion {
    pub first_term: f64,
    pub second_term: f64,
    pub validity: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> BlStatus {
    match err {
        Error::InvalidArgument(_) => BlStatus::InvalidArgument,
        Error::NumericalFailure(_) => BlStatus::NumericalFailure,
        Error::NonConvergence { .. } => BlStatus::NonConvergence,
        Error::Inapplicable(_) => BlStatus::Inapplicable,
    }
}

fn guard(f: impl FnOnce() -> Result<(), BlStatus>) -> BlStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BlStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".to_string());
            BlStatus::Panic
        }
    }
}

fn fail(err: Error) -> BlStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

fn null(name: &str) -> BlStatus {
    set_error(format!("null pointer: {name}"));
    BlStatus::NullPointer
}

unsafe fn dist_ref<'a>(d: *const BlDist) -> Result<&'a SignalDistribution, BlStatus> {
    d.as_ref().map(|d| &d.inner).ok_or_else(|| null("dist"))
}

unsafe fn write<T>(out: *mut T, value: T, name: &str) -> Result<(), BlStatus> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

unsafe fn make_dist(dist: SignalDistribution, out: *mut *mut BlDist) -> Result<(), BlStatus> {
    if out.is_null() {
        return Err(null("out"));
    }
    dist.validate().map_err(fail)?;
    out.write(Box::into_raw(Box::new(BlDist { inner: dist })));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a success.
#[no_mangle]
pub extern "C" fn bl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |m| m.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a distribution from JSON, e.g. `{"kind": "uniform", "theta": 1}`.
///
/// # Safety
/// `json` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_from_json(json: *const c_char, out: *mut *mut BlDist) -> BlStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| fail(Error::InvalidArgument(e.to_string())))?;
        let dist: SignalDistribution =
            serde_json::from_str(text).map_err(|e| fail(Error::InvalidArgument(e.to_string())))?;
        make_dist(dist, out)
    })
}

/// Single atom at `value` with probability one.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_point_mass(value: f64, out: *mut *mut BlDist) -> BlStatus {
    guard(|| make_dist(SignalDistribution::point_mass(value), out))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_two_point(mu1: f64, mu2: f64, alpha: f64, out: *mut *mut BlDist) -> BlStatus {
    guard(|| make_dist(SignalDistribution::two_point(mu1, mu2, alpha), out))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_uniform(theta: f64, out: *mut *mut BlDist) -> BlStatus {
    guard(|| make_dist(SignalDistribution::uniform(theta), out))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_exp_tail(tau: f64, q0: f64, out: *mut *mut BlDist) -> BlStatus {
    guard(|| make_dist(SignalDistribution::exp_tail(tau, q0), out))
}

/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_power_zero(ell: f64, cap: f64, out: *mut *mut BlDist) -> BlStatus {
    guard(|| make_dist(SignalDistribution::power_zero(ell, cap), out))
}

/// Releases a handle; NULL is ignored.
///
/// # Safety
/// `dist` must come from a `bl_dist_*` constructor and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_free(dist: *mut BlDist) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// `E|B|^r`; infinite moments are reported as `+inf` with status Ok.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_dist_moment(dist: *const BlDist, r: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        let m = dist_ref(dist)?.moment(r).map_err(fail)?;
        write(out, m.as_f64(), "out")
    })
}

/// Proximal map of `chi |x|^q` and its partial derivatives.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_prox(u: f64, chi: f64, q: f64, out: *mut BlProx) -> BlStatus {
    guard(|| {
        let p = bridge_lab::prox(u, chi, q).map_err(fail)?;
        write(
            out,
            BlProx {
                value: p.value,
                d_du: p.d_du,
                d_dchi: p.d_dchi,
            },
            "out",
        )
    })
}

/// Scalar risk at threshold `chi` and noise level `sigma`, default quadrature.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_risk(dist: *const BlDist, q: f64, chi: f64, sigma: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        let model = RiskModel::new(dist_ref(dist)?, &QuadConfig::default()).map_err(fail)?;
        let point = model.risk(q, chi, sigma).map_err(fail)?;
        write(out, point.risk, "out")
    })
}

/// Optimally tuned state-evolution fixed point, default settings.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_se_solve(
    dist: *const BlDist,
    q: f64,
    delta: f64,
    sigma_w: f64,
    scaled: bool,
    out: *mut BlSeOutcome,
) -> BlStatus {
    guard(|| {
        let o = se::solve(q, delta, sigma_w, dist_ref(dist)?, scaled, &SeConfig::default()).map_err(fail)?;
        write(
            out,
            BlSeOutcome {
                sigma_bar: o.sigma_bar,
                chi_star: o.chi_star,
                amse: o.amse,
                iterations: o.iterations as u64,
                residual: o.residual,
            },
            "out",
        )
    })
}

/// Second-order coefficient `C_q`.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_cq(dist: *const BlDist, q: f64, out: *mut f64) -> BlStatus {
    guard(|| {
        let c = theory::cq(q, dist_ref(dist)?).map_err(fail)?;
        write(out, c, "out")
    })
}

/// Maximizer of `C_q` over `(1, 2]` and the maximum.
///
/// # Safety
/// `dist` must be a live handle; `q_star` and `cq_max` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_q_star(dist: *const BlDist, q_star: *mut f64, cq_max: *mut f64) -> BlStatus {
    guard(|| {
        if cq_max.is_null() {
            return Err(null("cq_max"));
        }
        let r = theory::q_star(dist_ref(dist)?, &QStarConfig::default()).map_err(fail)?;
        write(q_star, r.q_star, "q_star")?;
        write(cq_max, r.cq_max, "cq_max")
    })
}

fn expansion(report: theory::ExpansionReport) -> BlExpansion {
    BlExpansion {
        first_term: report.first_term,
        second_term: report.second_term,
        validity: match report.validity {
            Validity::Valid => 0,
            Validity::LassoBracketOnly => 1,
            Validity::Inapplicable => 2,
        },
    }
}

/// Small-noise expansion at fixed `delta`.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_small_noise_expansion(
    dist: *const BlDist,
    q: f64,
    delta: f64,
    sigma_w: f64,
    out: *mut BlExpansion,
) -> BlStatus {
    guard(|| {
        let r = theory::small_noise_expansion(q, delta, sigma_w, dist_ref(dist)?).map_err(fail)?;
        write(out, expansion(r), "out")
    })
}

/// Large-sample expansion at fixed `sigma_w`.
///
/// # Safety
/// `dist` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bl_large_delta_expansion(
    dist: *const BlDist,
    q: f64,
    delta: f64,
    sigma_w: f64,
    out: *mut BlExpansion,
) -> BlStatus {
    guard(|| {
        let r = theory::large_delta_expansion(q, delta, sigma_w, dist_ref(dist)?).map_err(fail)?;
        write(out, expansion(r), "out")
    })
}
