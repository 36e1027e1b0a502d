//! C interface to `xflex-core`: load a fitted bundle, build predictive distributions and
//! query them.
//!
//! Every fallible function returns an [`XflexStatus`]; on failure the message is available
//! from [`xflex_last_error_message`] on the same thread until the next failing call.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use xflex_core::banding::{assign_band, band_probs, Band, BandProbabilities, BandSpec};
use xflex_core::distributions::{dgp_cdf, dgp_pmf, GpParams};
use xflex_core::ensemble::{
    combine, default_prob_grid, member_weights, ForecastDistribution, MemberForecast, WeightSchedule,
};
use xflex_core::pipeline::ModelBundle;
use xflex_core::splice::CountDistribution;
use xflex_core::terms::Covariates;
use xflex_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XflexStatus {
    Ok = 0,
    NullPointer = 1,
    /// Invalid argument, malformed input or failed validation.
    Invalid = 2,
    /// An optimizer did not converge.
    Convergence = 3,
    Io = 4,
    VersionMismatch = 5,
    /// The requested quantile is infinite.
    Unbounded = 6,
    Internal = 7,
}

/// A fitted per-district model.
pub struct XflexBundle(ModelBundle);

/// A predictive count distribution, single-member or ensemble-combined.
pub struct XflexDist(ForecastDistribution);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> XflexStatus {
    match e {
        Error::NonConvergence { .. } => XflexStatus::Convergence,
        Error::Io(_) => XflexStatus::Io,
        Error::VersionMismatch { .. } => XflexStatus::VersionMismatch,
        Error::UnboundedQuantile => XflexStatus::Unbounded,
        _ => XflexStatus::Invalid,
    }
}

enum Failure {
    Null(&'static str),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> XflexStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => XflexStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            XflexStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            XflexStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass either null or a pointer to a live, properly aligned value.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: as for `non_null`, for a writable location.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    let p = non_null(p, what)?;
    // SAFETY: the caller guarantees a nul-terminated string.
    let s = unsafe { CStr::from_ptr(p) };
    s.to_str().map_err(|_| Failure::Core(Error::Validation(format!("{what} is not UTF-8"))))
}

fn covariates(names: *const *const c_char, values: *const f64, n: usize) -> Result<Covariates, Failure> {
    let mut x = Covariates::new();
    if n == 0 {
        return Ok(x);
    }
    non_null(names, "covariate names")?;
    non_null(values, "covariate values")?;
    // SAFETY: both arrays hold `n` elements per the calling convention.
    let (names, values) = unsafe { (std::slice::from_raw_parts(names, n), std::slice::from_raw_parts(values, n)) };
    for (&name, &v) in names.iter().zip(values) {
        x.insert(c_str(name, "covariate name")?.to_string(), v);
    }
    Ok(x)
}

/// Load a bundle written by `xflex fit`.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn xflex_bundle_load(path: *const c_char, out: *mut *mut XflexBundle) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let b = ModelBundle::load(Path::new(c_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(XflexBundle(b)));
        Ok(())
    })
}

/// # Safety
/// `bundle` must come from [`xflex_bundle_load`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn xflex_bundle_free(bundle: *mut XflexBundle) {
    if !bundle.is_null() {
        // SAFETY: created by Box::into_raw in xflex_bundle_load.
        drop(unsafe { Box::from_raw(bundle) });
    }
}

/// Spliced predictive distribution at one covariate vector of `n` named values.
///
/// # Safety
/// `names` and `values` must hold `n` elements; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_predict(
    bundle: *const XflexBundle,
    names: *const *const c_char,
    values: *const f64,
    n: usize,
    out: *mut *mut XflexDist,
) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let b = non_null(bundle, "bundle")?;
        let d = b.0.predict(&covariates(names, values, n)?)?;
        *out = Box::into_raw(Box::new(XflexDist(ForecastDistribution::Single(d))));
        Ok(())
    })
}

/// Ensemble forecast: member `i` has id `member_ids[i]` (0 is HRES) and covariates
/// `values[i * n_cov .. (i + 1) * n_cov]` named by `names`.
///
/// # Safety
/// `member_ids` must hold `n_members` elements, `values` `n_members * n_cov` and `names` `n_cov`.
#[no_mangle]
pub unsafe extern "C" fn xflex_predict_ensemble(
    bundle: *const XflexBundle,
    member_ids: *const u32,
    n_members: usize,
    names: *const *const c_char,
    values: *const f64,
    n_cov: usize,
    lead_hours: i64,
    out: *mut *mut XflexDist,
) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let b = non_null(bundle, "bundle")?;
        if n_members == 0 {
            return Err(Error::Empty("member list").into());
        }
        non_null(member_ids, "member ids")?;
        // SAFETY: `n_members` ids per the calling convention.
        let ids = unsafe { std::slice::from_raw_parts(member_ids, n_members) };
        let mut members = Vec::with_capacity(n_members);
        for (i, &id) in ids.iter().enumerate() {
            let vals = if n_cov == 0 { values } else { non_null(values, "covariate values")? as *const f64 };
            // SAFETY: row `i` lies inside the `n_members * n_cov` block.
            let row = unsafe { vals.add(i * n_cov) };
            let x = covariates(names, row, n_cov)?;
            members.push(MemberForecast { member_id: id, lead_hours, dist: b.0.predict(&x)? });
        }
        members.sort_by_key(|m| m.member_id);
        let d = combine(&members, &WeightSchedule::default(), &default_prob_grid())?;
        *out = Box::into_raw(Box::new(XflexDist(d)));
        Ok(())
    })
}

/// # Safety
/// `dist` must come from a predict function and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn xflex_dist_free(dist: *mut XflexDist) {
    if !dist.is_null() {
        // SAFETY: created by Box::into_raw in a predict function.
        drop(unsafe { Box::from_raw(dist) });
    }
}

/// `P(Y <= y)`.
///
/// # Safety
/// `dist` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_dist_cdf(dist: *const XflexDist, y: i64, out: *mut f64) -> XflexStatus {
    guard(|| {
        *out_ref(out, "out")? = non_null(dist, "dist")?.0.cdf(y);
        Ok(())
    })
}

/// Smallest count whose cdf reaches `p`.
///
/// # Safety
/// `dist` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_dist_quantile(dist: *const XflexDist, p: f64, out: *mut u64) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = non_null(dist, "dist")?.0.quantile(p)?;
        Ok(())
    })
}

/// Green, amber and red probabilities for thresholds `tau_ag < tau_ra`, written to `out[0..3]`.
///
/// # Safety
/// `dist` must be live and `out` must have room for three values.
#[no_mangle]
pub unsafe extern "C" fn xflex_dist_band_probs(
    dist: *const XflexDist,
    tau_ag: u64,
    tau_ra: u64,
    out: *mut f64,
) -> XflexStatus {
    guard(|| {
        let d = non_null(dist, "dist")?;
        non_null(out, "out")?;
        let p = band_probs(&d.0, &BandSpec::new(tau_ag, tau_ra)?).as_array();
        // SAFETY: three writable doubles per the calling convention.
        unsafe { ptr::copy_nonoverlapping(p.as_ptr(), out, 3) };
        Ok(())
    })
}

/// Communicated band for probabilities `(green, amber, red)`: writes 0, 1 or 2.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_assign_band(green: f64, amber: f64, red: f64, out: *mut u8) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if ![green, amber, red].iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(Error::InvalidParameter("band probabilities must lie in [0, 1]".into()).into());
        }
        *out = match assign_band(&BandProbabilities { green, amber, red }) {
            Band::Green => 0,
            Band::Amber => 1,
            Band::Red => 2,
        };
        Ok(())
    })
}

/// DGP probability mass at `k`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_dgp_pmf(k: u64, sigma: f64, xi: f64, out: *mut f64) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = dgp_pmf(k, &GpParams::new(sigma, xi)?);
        Ok(())
    })
}

/// DGP cdf at `k`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_dgp_cdf(k: u64, sigma: f64, xi: f64, out: *mut f64) -> XflexStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = dgp_cdf(k, &GpParams::new(sigma, xi)?);
        Ok(())
    })
}

/// HRES and EPS member weights at a lead time under the default schedule.
///
/// # Safety
/// `hres` and `member` must be writable.
#[no_mangle]
pub unsafe extern "C" fn xflex_member_weights(lead_hours: i64, hres: *mut f64, member: *mut f64) -> XflexStatus {
    guard(|| {
        let h = out_ref(hres, "hres")?;
        let m = out_ref(member, "member")?;
        (*h, *m) = member_weights(lead_hours, &WeightSchedule::default())?;
        Ok(())
    })
}

/// Message of the last failure on this thread, or null. Valid until the next failing call
/// on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn xflex_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
