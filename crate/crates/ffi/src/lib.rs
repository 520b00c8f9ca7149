//! C ABI for the koppelman library.
//!
//! Varieties are opaque handles created by `kop_variety_from_catalog` or
//! `kop_variety_from_json` and released with `kop_variety_free`. Every call
//! returns a [`KopStatus`]; on failure `kop_last_error` gives the message for
//! the calling thread. Strings returned through `char **` are owned by the
//! caller and released with `kop_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use koppelman::sampling::{estimate_v, SamplingPlan};
use koppelman::varieties::ConeVariety;
use koppelman::verify::{run_experiment, ExperimentConfig};
use koppelman::{Error, C64};

/// Opaque variety handle.
pub struct KopVariety {
    inner: ConeVariety,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KopStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownVariety = 3,
    InvalidVariety = 4,
    UnsupportedDegree = 5,
    NearSingular = 6,
    Pole = 7,
    UnknownExperiment = 8,
    Numerical = 9,
    Parse = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KopComplex {
    pub re: f64,
    pub im: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KopThresholds {
    pub p_min: f64,
    pub p_min_w: f64,
    pub canonical: bool,
    pub main1_applicable: bool,
    pub main4_applicable: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> KopStatus {
    match e {
        Error::InvalidVariety(_) | Error::FiberDegenerate { .. } => KopStatus::InvalidVariety,
        Error::UnknownVariety(_) => KopStatus::UnknownVariety,
        Error::UnsupportedDegree(_) | Error::DegenerateExponent { .. } => KopStatus::UnsupportedDegree,
        Error::NearSingular { .. } => KopStatus::NearSingular,
        Error::Pole(_) => KopStatus::Pole,
        Error::UnknownExperiment(_) => KopStatus::UnknownExperiment,
        Error::Parse(_) => KopStatus::Parse,
        Error::Io(_) => KopStatus::Io,
        Error::EmptyRegion(_)
        | Error::NonRadialProfile
        | Error::ExponentRange(_)
        | Error::InsufficientDecades { .. }
        | Error::CalibrationFailure { .. } => KopStatus::Numerical,
        Error::UniverseMismatch(..)
        | Error::WrongDegree { .. }
        | Error::DegreeOverflow { .. }
        | Error::InvalidArgument(_) => KopStatus::InvalidArgument,
    }
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (KopStatus, String)>) -> KopStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            KopStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KopStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (KopStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (KopStatus, String) {
    (KopStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (KopStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (KopStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn variety<'a>(v: *const KopVariety) -> Result<&'a ConeVariety, (KopStatus, String)> {
    v.as_ref().map(|h| &h.inner).ok_or_else(|| null("variety"))
}

unsafe fn point(v: &ConeVariety, p: *const KopComplex, len: usize) -> Result<Vec<C64>, (KopStatus, String)> {
    if p.is_null() {
        return Err(null("point"));
    }
    if len != v.ambient_dim() {
        return Err((KopStatus::InvalidArgument, format!("point has {len} coordinates, expected {}", v.ambient_dim())));
    }
    Ok(std::slice::from_raw_parts(p, len).iter().map(|c| C64::new(c.re, c.im)).collect())
}

unsafe fn store_handle(v: ConeVariety, out: *mut *mut KopVariety) {
    *out = Box::into_raw(Box::new(KopVariety { inner: v }));
}

/// Creates a catalog variety (`hyperplane`, `a1`, `fermat2`..`fermat4`, `ci22`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_from_catalog(name: *const c_char, out: *mut *mut KopVariety) -> KopStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let v = ConeVariety::catalog(read_str(name, "name")?).map_err(lib_err)?;
        store_handle(v, out);
        Ok(())
    })
}

/// Creates a variety from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_from_json(json: *const c_char, out: *mut *mut KopVariety) -> KopStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let v = ConeVariety::from_json(read_str(json, "json")?).map_err(lib_err)?;
        store_handle(v, out);
        Ok(())
    })
}

/// Releases a handle; null is ignored.
///
/// # Safety
/// `v` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_free(v: *mut KopVariety) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// Ambient dimension `N`, dimension `n` and codimension `nu`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_dims(
    v: *const KopVariety,
    ambient_dim: *mut usize,
    dim: *mut usize,
    codim: *mut usize,
) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        if ambient_dim.is_null() || dim.is_null() || codim.is_null() {
            return Err(null("output"));
        }
        *ambient_dim = v.ambient_dim();
        *dim = v.dim();
        *codim = v.codim();
        Ok(())
    })
}

/// Writes `f_1(zeta), ..., f_nu(zeta)` into `out`, which holds `out_len >= nu` entries.
///
/// # Safety
/// `zeta` must hold `len` entries and `out` `out_len` entries.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_eval_tuple(
    v: *const KopVariety,
    zeta: *const KopComplex,
    len: usize,
    out: *mut KopComplex,
    out_len: usize,
) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        let z = point(v, zeta, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < v.codim() {
            return Err((KopStatus::InvalidArgument, format!("out holds {out_len} entries, need {}", v.codim())));
        }
        let vals = v.eval_tuple(&z);
        let dst = std::slice::from_raw_parts_mut(out, out_len);
        for (d, s) in dst.iter_mut().zip(vals) {
            *d = KopComplex { re: s.re, im: s.im };
        }
        Ok(())
    })
}

/// Norm of the maximal minors of the Jacobian at `zeta`.
///
/// # Safety
/// `zeta` must hold `len` entries; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_minors_norm(
    v: *const KopVariety,
    zeta: *const KopComplex,
    len: usize,
    out: *mut f64,
) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        let z = point(v, zeta, len)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = v.minors_norm(&z);
        Ok(())
    })
}

/// Degree-derived exponent thresholds.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kop_variety_thresholds(v: *const KopVariety, out: *mut KopThresholds) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let t = v.thresholds().map_err(lib_err)?;
        *out = KopThresholds {
            p_min: t.p_min,
            p_min_w: t.p_min_w,
            canonical: t.canonical,
            main1_applicable: t.main1_applicable,
            main4_applicable: t.main4_applicable,
        };
        Ok(())
    })
}

/// Monte Carlo estimate of `v(r, z) = Vol(X cap B_r(z)) / r^{2n}`.
///
/// # Safety
/// `z` must hold `len` entries; `value` and `stderr` must be valid.
#[no_mangle]
pub unsafe extern "C" fn kop_estimate_v(
    v: *const KopVariety,
    r: f64,
    z: *const KopComplex,
    len: usize,
    samples: usize,
    seed: u64,
    value: *mut f64,
    stderr: *mut f64,
) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        let z = point(v, z, len)?;
        if value.is_null() || stderr.is_null() {
            return Err(null("output"));
        }
        if samples == 0 {
            return Err((KopStatus::InvalidArgument, "samples must be positive".into()));
        }
        let e = estimate_v(v, r, &z, &SamplingPlan::new(samples, seed)).map_err(lib_err)?;
        *value = e.value;
        *stderr = e.stderr;
        Ok(())
    })
}

/// Runs a registered experiment and returns its report as JSON in `*json_out`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `json_out` valid. Release the
/// result with `kop_string_free`.
#[no_mangle]
pub unsafe extern "C" fn kop_run_experiment(
    v: *const KopVariety,
    name: *const c_char,
    samples: usize,
    seed: u64,
    tolerance_scale: f64,
    json_out: *mut *mut c_char,
) -> KopStatus {
    guard(|| {
        let v = variety(v)?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        *json_out = ptr::null_mut();
        let name = read_str(name, "name")?;
        let cfg = ExperimentConfig { samples, seed, tolerance_scale, ..Default::default() };
        let rep = run_experiment(name, v, &cfg).map_err(lib_err)?;
        let text = serde_json::to_string(&rep).map_err(|e| (KopStatus::Parse, e.to_string()))?;
        *json_out = CString::new(text).map_err(|e| (KopStatus::Parse, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Releases a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn kop_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn kop_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
