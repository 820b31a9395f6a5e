//! C ABI over `dinidiff`. Objects are opaque handles built from the same JSON
//! descriptors the CLI reads; exact values cross the boundary as rational strings.
//!
//! Every call returns a [`DinidiffStatus`]. On failure the message is available
//! from [`dinidiff_last_error`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dinidiff::cli::{FunctionDesc, MartingaleDesc};
use dinidiff::exact::parse_rational;
use dinidiff::function::SharedFn;
use dinidiff::martingale::{check_fairness, SharedMartingale, DEFAULT_BUDGET};
use dinidiff::sawtooth::{refine, sawtooth_fixture_cover, EffectiveCover, SawtoothFunction};
use dinidiff::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DinidiffStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Precondition = 4,
    NotExact = 5,
    Domain = 6,
    Budget = 7,
    Violation = 8,
    Panic = 9,
}

impl From<&Error> for DinidiffStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse(_) | Error::UnknownName(_) | Error::InvalidDigit { .. } => DinidiffStatus::Parse,
            Error::NotExact => DinidiffStatus::NotExact,
            Error::DomainGap(_) | Error::RangeUnsupported { .. } | Error::NotInCover(_) | Error::PrecisionUnavailable(_) => {
                DinidiffStatus::Domain
            }
            Error::BudgetExceeded { .. } | Error::SplitBudgetExceeded { .. } | Error::DepthExceeded { .. } | Error::Stalled { .. } => {
                DinidiffStatus::Budget
            }
            Error::NestingViolated { .. } | Error::MeasureTooLarge { .. } | Error::LipschitzViolated { .. } => DinidiffStatus::Violation,
            _ => DinidiffStatus::Precondition,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Failure(DinidiffStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn guard(f: impl FnOnce() -> Outcome<()>) -> DinidiffStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DinidiffStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DinidiffStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(Failure(DinidiffStatus::NullPointer, "null string argument".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| Failure(DinidiffStatus::InvalidUtf8, e.to_string()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return Err(Failure(DinidiffStatus::NullPointer, "null output pointer".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Outcome<()> {
    let c = CString::new(s).map_err(|e| Failure(DinidiffStatus::Panic, e.to_string()))?;
    write_out(out, c.into_raw())
}

unsafe fn handle<'a, T>(h: *const T) -> Outcome<&'a T> {
    h.as_ref().ok_or_else(|| Failure(DinidiffStatus::NullPointer, "null handle".into()))
}

/// Opaque martingale.
pub struct DinidiffMartingale {
    inner: SharedMartingale,
}

/// Opaque rational function on `[0, 1]`.
pub struct DinidiffFunction {
    inner: SharedFn,
}

/// Opaque sawtooth sum built from an effective cover.
pub struct DinidiffSawtooth {
    inner: SawtoothFunction,
}

/// Message of the last failed call on this thread, or null. Owned by the library.
#[no_mangle]
pub extern "C" fn dinidiff_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn dinidiff_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a martingale from a JSON descriptor.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_martingale_from_json(json: *const c_char, out: *mut *mut DinidiffMartingale) -> DinidiffStatus {
    guard(|| {
        let desc: MartingaleDesc = dinidiff::cli::parse_json(read_str(json)?)?;
        let m = DinidiffMartingale { inner: desc.build()? };
        write_out(out, Box::into_raw(Box::new(m)))
    })
}

/// # Safety
/// `m` must be null or a handle from [`dinidiff_martingale_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_martingale_free(m: *mut DinidiffMartingale) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// # Safety
/// `m` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_martingale_base(m: *const DinidiffMartingale, out: *mut u32) -> DinidiffStatus {
    guard(|| write_out(out, handle(m)?.inner.base()))
}

/// `M(σ)` as a rational string, exact for exact martingales and within `2^-precision` otherwise.
/// Free the result with [`dinidiff_string_free`].
///
/// # Safety
/// `m` must be a live handle, `digits` must point to `len` bytes (or be null with `len == 0`),
/// and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_martingale_eval(
    m: *const DinidiffMartingale,
    digits: *const u8,
    len: usize,
    precision: u32,
    out: *mut *mut c_char,
) -> DinidiffStatus {
    guard(|| {
        let m = handle(m)?;
        let sigma: &[u8] = if len == 0 {
            &[]
        } else if digits.is_null() {
            return Err(Failure(DinidiffStatus::NullPointer, "null digit buffer".into()));
        } else {
            std::slice::from_raw_parts(digits, len)
        };
        let v = m.inner.eval(sigma, precision)?;
        write_string(out, v.to_string())
    })
}

/// Exact fairness on all strings shorter than `depth`; `passed` is set to 1 or 0.
///
/// # Safety
/// `m` must be a live handle; `passed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_martingale_check_fairness(
    m: *const DinidiffMartingale,
    depth: u32,
    precision: u32,
    passed: *mut i32,
) -> DinidiffStatus {
    guard(|| {
        let r = check_fairness(handle(m)?.inner.as_ref(), depth as usize, precision, DEFAULT_BUDGET)?;
        write_out(passed, i32::from(r.passed()))
    })
}

/// Builds a function from a JSON descriptor.
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_function_from_json(json: *const c_char, out: *mut *mut DinidiffFunction) -> DinidiffStatus {
    guard(|| {
        let desc: FunctionDesc = dinidiff::cli::parse_json(read_str(json)?)?;
        let f = DinidiffFunction { inner: desc.build()? };
        write_out(out, Box::into_raw(Box::new(f)))
    })
}

/// # Safety
/// `f` must be null or a handle from [`dinidiff_function_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_function_free(f: *mut DinidiffFunction) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// `f(x)` for a rational string `x`, within `2^-precision` unless the function is exact.
///
/// # Safety
/// `f` must be a live handle, `x` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_function_value(
    f: *const DinidiffFunction,
    x: *const c_char,
    precision: u32,
    out: *mut *mut c_char,
) -> DinidiffStatus {
    guard(|| {
        let f = handle(f)?;
        let x = parse_rational(read_str(x)?)?;
        write_string(out, f.inner.value(&x, precision)?.to_string())
    })
}

/// Refines the cover given as JSON, or the built-in cover around 1/3 when `json` is null.
///
/// # Safety
/// `json` must be null or a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_sawtooth_new(json: *const c_char, out: *mut *mut DinidiffSawtooth) -> DinidiffStatus {
    guard(|| {
        let cover = if json.is_null() { sawtooth_fixture_cover() } else { EffectiveCover::from_json(read_str(json)?)? };
        let s = DinidiffSawtooth { inner: refine(&cover)? };
        write_out(out, Box::into_raw(Box::new(s)))
    })
}

/// # Safety
/// `s` must be null or a handle from [`dinidiff_sawtooth_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_sawtooth_free(s: *mut DinidiffSawtooth) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of cover levels.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_sawtooth_levels(s: *const DinidiffSawtooth, out: *mut usize) -> DinidiffStatus {
    guard(|| write_out(out, handle(s)?.inner.levels.len()))
}

/// Exact value of the truncated sum at a rational string `x`.
///
/// # Safety
/// `s` must be a live handle, `x` a nul-terminated string, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dinidiff_sawtooth_eval(s: *const DinidiffSawtooth, x: *const c_char, out: *mut *mut c_char) -> DinidiffStatus {
    guard(|| {
        let s = handle(s)?;
        let x = parse_rational(read_str(x)?)?;
        write_string(out, s.inner.exact(&x).to_string())
    })
}
