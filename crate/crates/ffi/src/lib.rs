//! C ABI over `wavg-core`.
//!
//! Objects are opaque handles created by `*_new`/`*_builtin` calls and released
//! with the matching `*_free`. Every fallible call returns a [`WavgStatus`]; on
//! failure [`wavg_last_error`] describes the most recent error on this thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use num_complex::Complex64;
use wavg_core::averaging::{iterated_avg_direct, weighted_avg};
use wavg_core::calculus::Sequence;
use wavg_core::ergodic::{MeasurableSet, MpSystem};
use wavg_core::weights::{builtin, WeightScheme};
use wavg_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WavgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    UnknownName = 3,
    Domain = 4,
    InvalidArgument = 5,
    Numerical = 6,
    Panic = 7,
}

/// Opaque weight scheme.
pub struct WavgScheme(WeightScheme);

/// Opaque bounded complex sequence.
pub struct WavgSequence(Sequence<Complex64>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> WavgStatus {
    match err {
        Error::UnknownName { .. } => WavgStatus::UnknownName,
        Error::Domain { .. } | Error::BeyondHorizon { .. } | Error::DegenerateInterval { .. } => WavgStatus::Domain,
        Error::Invalid(_) | Error::RangeExhausted { .. } => WavgStatus::InvalidArgument,
        _ => WavgStatus::Numerical,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (WavgStatus, String)>) -> WavgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => WavgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            WavgStatus::Panic
        }
    }
}

fn engine(err: Error) -> (WavgStatus, String) {
    (status_of(&err), err.to_string())
}

fn null(what: &str) -> (WavgStatus, String) {
    (WavgStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (WavgStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (WavgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (WavgStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message for the last failed call on this thread, or null. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn wavg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn wavg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Looks up a built-in scheme such as `"cesaro"`, `"log"`, `"exp_sqrt"` or `"power:2"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn wavg_scheme_builtin(name: *const c_char, out: *mut *mut WavgScheme) -> WavgStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let scheme = builtin(name).map_err(engine)?;
        *out = Box::into_raw(Box::new(WavgScheme(scheme)));
        Ok(())
    })
}

/// # Safety
/// `scheme` must come from [`wavg_scheme_builtin`] and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wavg_scheme_free(scheme: *mut WavgScheme) {
    if !scheme.is_null() {
        drop(Box::from_raw(scheme));
    }
}

/// ΔV(n)/V(N).
///
/// # Safety
/// `scheme` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wavg_normalized_weight(
    scheme: *const WavgScheme,
    n: u64,
    big_n: u64,
    out: *mut f64,
) -> WavgStatus {
    guard(|| {
        let s = scheme.as_ref().ok_or_else(|| null("scheme"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = s.0.normalized_weight(n, big_n).map_err(engine)?;
        Ok(())
    })
}

/// Catalog sequence such as `"exp_log_phase"` or `"constant:3"`; `len` sizes random sequences.
///
/// # Safety
/// `spec` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn wavg_sequence_named(
    spec: *const c_char,
    seed: u64,
    len: u64,
    out: *mut *mut WavgSequence,
) -> WavgStatus {
    guard(|| {
        let spec = str_arg(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let seq = wavg_core::catalog::sequence(spec, seed, len).map_err(engine)?;
        *out = Box::into_raw(Box::new(WavgSequence(seq)));
        Ok(())
    })
}

/// Sequence x_1..x_len from parallel real/imaginary arrays; zero past the end.
/// `im` may be null for a real sequence.
///
/// # Safety
/// `re` (and `im` if non-null) must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn wavg_sequence_from_values(
    re: *const f64,
    im: *const f64,
    len: usize,
    out: *mut *mut WavgSequence,
) -> WavgStatus {
    guard(|| {
        let re = slice_arg(re, len, "re")?;
        let im = if im.is_null() { None } else { Some(slice_arg(im, len, "im")?) };
        if out.is_null() {
            return Err(null("out"));
        }
        let values: Vec<Complex64> =
            (0..len).map(|i| Complex64::new(re[i], im.map_or(0.0, |v| v[i]))).collect();
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err((WavgStatus::InvalidArgument, "values must be finite".into()));
        }
        *out = Box::into_raw(Box::new(WavgSequence(Sequence::from_values("values", values))));
        Ok(())
    })
}

/// # Safety
/// `seq` must come from a `wavg_sequence_*` constructor and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn wavg_sequence_free(seq: *mut WavgSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Σ ΔV(n)/V(N) x_n; the result is written to `out_re`/`out_im`.
///
/// # Safety
/// Handles must be live; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn wavg_weighted_avg(
    scheme: *const WavgScheme,
    seq: *const WavgSequence,
    big_n: u64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> WavgStatus {
    wavg_iterated_avg(scheme, seq, 1, big_n, out_re, out_im)
}

/// k-fold iterated weighted average at N.
///
/// # Safety
/// Handles must be live; output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn wavg_iterated_avg(
    scheme: *const WavgScheme,
    seq: *const WavgSequence,
    k: u32,
    big_n: u64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> WavgStatus {
    guard(|| {
        let s = scheme.as_ref().ok_or_else(|| null("scheme"))?;
        let x = seq.as_ref().ok_or_else(|| null("seq"))?;
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let v = if k == 1 {
            weighted_avg(&s.0, &x.0, big_n)
        } else {
            iterated_avg_direct(&s.0, &x.0, k as usize, big_n)
        }
        .map_err(engine)?;
        *out_re = v.re;
        *out_im = v.im;
        Ok(())
    })
}

/// μ(A ∩ T^{−m₁}A ∩ …) for rotation by `alpha`, with A the union of arcs
/// `[arcs[2i], arcs[2i+1])`.
///
/// # Safety
/// `arcs` must hold `2 * n_arcs` doubles and `shifts` `n_shifts` integers.
#[no_mangle]
pub unsafe extern "C" fn wavg_rotation_correlation(
    alpha: f64,
    arcs: *const f64,
    n_arcs: usize,
    shifts: *const i64,
    n_shifts: usize,
    out: *mut f64,
) -> WavgStatus {
    guard(|| {
        let flat = slice_arg(arcs, 2 * n_arcs, "arcs")?;
        let shifts = slice_arg(shifts, n_shifts, "shifts")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let pairs: Vec<(f64, f64)> = flat.chunks_exact(2).map(|p| (p[0], p[1])).collect();
        let sys = MpSystem::rotation(alpha).map_err(engine)?;
        let set = MeasurableSet::arcs(&pairs).map_err(engine)?;
        *out = wavg_core::ergodic::correlation(&sys, &set, shifts).map_err(engine)?;
        Ok(())
    })
}

/// Same as [`wavg_rotation_correlation`] on ℤ_q with x ↦ x + step and A given by its elements.
///
/// # Safety
/// `elements` must hold `n_elements` values and `shifts` `n_shifts` integers.
#[no_mangle]
pub unsafe extern "C" fn wavg_cyclic_correlation(
    q: u32,
    step: u32,
    elements: *const u32,
    n_elements: usize,
    shifts: *const i64,
    n_shifts: usize,
    out: *mut f64,
) -> WavgStatus {
    guard(|| {
        let elements = slice_arg(elements, n_elements, "elements")?;
        let shifts = slice_arg(shifts, n_shifts, "shifts")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let sys = MpSystem::cyclic(q, step).map_err(engine)?;
        let set = MeasurableSet::elements(q, elements.iter().copied()).map_err(engine)?;
        *out = wavg_core::ergodic::correlation(&sys, &set, shifts).map_err(engine)?;
        Ok(())
    })
}
