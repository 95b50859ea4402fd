//! C interface to `fz-core`.
//!
//! Every call returns an [`FzStatus`]. Objects come back through out-pointers
//! as opaque handles that the caller releases with the matching `*_free`.
//! Reports are returned as NUL-terminated JSON strings released with
//! [`fz_string_free`]. After a failing call, [`fz_last_error`] describes it.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;
use std::sync::Arc;

use fz_core::cli::{bundle_json, run_selftest};
use fz_core::corpus::{corpus_dir, load_corpus};
use fz_core::error::FzError;
use fz_core::finsys::{load_factor_file, load_system, load_system_file, FactorMap, FinSystem, DEFAULT_GROUP_CAP};
use fz_core::skew::{extract_cocycle, load_cocycle_file, mackey_range, skew_build, verify_cocycle, CocycleSpec};
use fz_core::structure::{classify_compact, dichotomy, furstenberg_tower, rel_wm_extension};
use serde_json::{json, Value};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FzStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Schema = 4,
    Validation = 5,
    Budget = 6,
    Precondition = 7,
    /// Two routes that must agree did not.
    Equivalence = 8,
    Internal = 9,
}

impl From<&FzError> for FzStatus {
    fn from(e: &FzError) -> Self {
        match e {
            FzError::Io(_) => FzStatus::Io,
            FzError::Json(_) | FzError::Schema(_) => FzStatus::Schema,
            FzError::Validation(_) | FzError::Mismatch(_) => FzStatus::Validation,
            FzError::CapExceeded { .. } | FzError::BudgetExceeded { .. } => FzStatus::Budget,
            FzError::Precondition(_) | FzError::NotErgodic(_) => FzStatus::Precondition,
            FzError::Equivalence(_) | FzError::NoConvergence(_) => FzStatus::Equivalence,
        }
    }
}

/// A measure-preserving system.
pub struct FzSystem {
    inner: Arc<FinSystem>,
}

/// A factor map `X → Y`.
pub struct FzFactor {
    inner: FactorMap,
}

/// A cocycle together with the subgroup defining its fiber.
pub struct FzCocycle {
    inner: CocycleSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

enum Failure {
    Status(FzStatus, String),
    Core(FzError),
}

impl From<FzError> for Failure {
    fn from(e: FzError) -> Self {
        Failure::Core(e)
    }
}

type Outcome<T> = Result<T, Failure>;

/// Runs `body`, records any failure and converts panics into `Internal`.
fn guard(body: impl FnOnce() -> Outcome<FzStatus>) -> FzStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure::Status(status, msg))) => {
            set_error(msg);
            status
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            FzStatus::from(&e)
        }
        Err(_) => {
            set_error("internal panic");
            FzStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Outcome<&'a str> {
    if p.is_null() {
        return Err(Failure::Status(FzStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure::Status(FzStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Outcome<PathBuf> {
    Ok(PathBuf::from(str_arg(p, what)?))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Outcome<&'a T> {
    p.as_ref().ok_or_else(|| Failure::Status(FzStatus::NullArgument, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Outcome<()> {
    if out.is_null() {
        return Err(Failure::Status(FzStatus::NullArgument, "output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn put_json(out: *mut *mut c_char, value: &Value) -> Outcome<()> {
    if out.is_null() {
        return Err(Failure::Status(FzStatus::NullArgument, "output pointer is null".into()));
    }
    let text = serde_json::to_string(value).map_err(FzError::from)?;
    *out = CString::new(text).expect("JSON has no NUL").into_raw();
    Ok(())
}

fn cap(group_cap: usize) -> usize {
    if group_cap == 0 {
        DEFAULT_GROUP_CAP
    } else {
        group_cap
    }
}

fn to_value(report: &impl serde::Serialize) -> Outcome<Value> {
    Ok(serde_json::to_value(report).map_err(FzError::from)?)
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fz_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread, or null. The pointer is
/// valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn fz_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn fz_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a system document from a file. `group_cap` 0 selects the default.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_system_load(path: *const c_char, group_cap: usize, out: *mut *mut FzSystem) -> FzStatus {
    guard(|| {
        let sys = load_system_file(path_arg(path, "path")?)?.with_group_cap(cap(group_cap));
        put(out, FzSystem { inner: Arc::new(sys) })?;
        Ok(FzStatus::Ok)
    })
}

/// Parses a system document held in memory.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_system_from_json(json: *const c_char, group_cap: usize, out: *mut *mut FzSystem) -> FzStatus {
    guard(|| {
        let sys = load_system(str_arg(json, "json")?)?.with_group_cap(cap(group_cap));
        put(out, FzSystem { inner: Arc::new(sys) })?;
        Ok(FzStatus::Ok)
    })
}

/// # Safety
/// `sys` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fz_system_free(sys: *mut FzSystem) {
    if !sys.is_null() {
        drop(Box::from_raw(sys));
    }
}

/// Number of atoms, or 0 for a null handle.
///
/// # Safety
/// `sys` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn fz_system_atom_count(sys: *const FzSystem) -> usize {
    sys.as_ref().map_or(0, |s| s.inner.len())
}

/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_system_group_order(sys: *const FzSystem, out: *mut usize) -> FzStatus {
    guard(|| {
        let order = handle(sys, "system")?.inner.group()?.len();
        if out.is_null() {
            return Err(Failure::Status(FzStatus::NullArgument, "output pointer is null".into()));
        }
        *out = order;
        Ok(FzStatus::Ok)
    })
}

/// Loads a factor document and validates the map.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_factor_load(path: *const c_char, group_cap: usize, out: *mut *mut FzFactor) -> FzStatus {
    guard(|| {
        let pi = load_factor_file(path_arg(path, "path")?, cap(group_cap))?;
        if let Some(msg) = pi.validate().failure() {
            return Err(FzError::Validation(msg).into());
        }
        put(out, FzFactor { inner: pi })?;
        Ok(FzStatus::Ok)
    })
}

/// The factor onto the one-point system.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_factor_to_trivial(sys: *const FzSystem, out: *mut *mut FzFactor) -> FzStatus {
    guard(|| {
        let pi = FactorMap::to_trivial(handle(sys, "system")?.inner.clone());
        put(out, FzFactor { inner: pi })?;
        Ok(FzStatus::Ok)
    })
}

/// The identity factor of a system.
///
/// # Safety
/// `sys` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_factor_identity(sys: *const FzSystem, out: *mut *mut FzFactor) -> FzStatus {
    guard(|| {
        let pi = FactorMap::identity(handle(sys, "system")?.inner.clone());
        put(out, FzFactor { inner: pi })?;
        Ok(FzStatus::Ok)
    })
}

/// # Safety
/// `pi` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fz_factor_free(pi: *mut FzFactor) {
    if !pi.is_null() {
        drop(Box::from_raw(pi));
    }
}

/// All six compactness criteria as JSON. Returns `Equivalence` (with the
/// report still written) when they disagree.
///
/// # Safety
/// `pi` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_classify(pi: *const FzFactor, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let r = classify_compact(&handle(pi, "factor")?.inner)?;
        put_json(out_json, &to_value(&r)?)?;
        match r.require_agreement() {
            Ok(()) => Ok(FzStatus::Ok),
            Err(e) => {
                set_error(e.to_string());
                Ok(FzStatus::Equivalence)
            }
        }
    })
}

/// The almost periodic / weakly mixing split as JSON.
///
/// # Safety
/// `pi` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_dichotomy(pi: *const FzFactor, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let d = dichotomy(&handle(pi, "factor")?.inner)?;
        put_json(out_json, &to_value(&d)?)?;
        Ok(if d.oracle_agrees { FzStatus::Ok } else { FzStatus::Equivalence })
    })
}

/// Relative weak mixing along all three routes, as JSON.
///
/// # Safety
/// `pi` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_wm(pi: *const FzFactor, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let r = rel_wm_extension(&handle(pi, "factor")?.inner)?;
        put_json(out_json, &to_value(&r)?)?;
        Ok(FzStatus::Ok)
    })
}

/// The tower of compact extensions. `max_rank` 0 means no cap.
///
/// # Safety
/// `sys` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_tower(sys: *const FzSystem, max_rank: usize, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let rank = (max_rank > 0).then_some(max_rank);
        let t = furstenberg_tower(&handle(sys, "system")?.inner, rank)?;
        put_json(out_json, &to_value(&t)?)?;
        Ok(FzStatus::Ok)
    })
}

/// Unitary cocycles of the irreducible invariant modules, as JSON.
///
/// # Safety
/// `pi` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_extract(pi: *const FzFactor, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let pi = &handle(pi, "factor")?.inner;
        let b = extract_cocycle(pi, None)?;
        put_json(out_json, &bundle_json(&b, pi))?;
        Ok(FzStatus::Ok)
    })
}

/// Loads a cocycle document.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_cocycle_load(path: *const c_char, group_cap: usize, out: *mut *mut FzCocycle) -> FzStatus {
    guard(|| {
        let spec = load_cocycle_file(path_arg(path, "path")?, cap(group_cap))?;
        put(out, FzCocycle { inner: spec })?;
        Ok(FzStatus::Ok)
    })
}

/// # Safety
/// `c` must be null or a handle from this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn fz_cocycle_free(c: *mut FzCocycle) {
    if !c.is_null() {
        drop(Box::from_raw(c));
    }
}

/// The Mackey range: subgroup labels, order and transfer map.
///
/// # Safety
/// `c` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_mackey(c: *const FzCocycle, budget: u64, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let rho = &handle(c, "cocycle")?.inner.cocycle;
        let m = mackey_range(rho, u128::from(budget))?;
        let transfer: Vec<&str> = m.transfer.iter().map(|&k| rho.group().label(k)).collect();
        let report = json!({
            "subgroup": m.subgroup.labels(),
            "order": m.subgroup.order(),
            "group_order": rho.group().len(),
            "transfer": transfer,
        });
        put_json(out_json, &report)?;
        Ok(FzStatus::Ok)
    })
}

/// Builds the skew product and reports its size, ergodicity and compactness.
///
/// # Safety
/// `c` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_skew(c: *const FzCocycle, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        let spec = &handle(c, "cocycle")?.inner;
        let table = spec.cocycle.enumerate(spec.cocycle.base().group_cap())?;
        let (sys, pi) = skew_build(&spec.cocycle, &spec.subgroup)?;
        let r = classify_compact(&pi)?;
        let report = json!({
            "atoms": sys.len(),
            "ergodic": fz_core::ergodic::invariant_factor(&sys)?.ergodic,
            "cocycle_law": verify_cocycle(&table).ok,
            "relatively_compact": r.relatively_compact,
            "agreement": r.agreement,
        });
        put_json(out_json, &report)?;
        Ok(if r.agreement { FzStatus::Ok } else { FzStatus::Equivalence })
    })
}

/// Runs the invariant suite on a fixture directory (null selects the
/// default). Returns `Validation` when a check fails and `Equivalence` when
/// routes disagree; the report is written either way.
///
/// # Safety
/// `corpus` must be null or a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fz_selftest(corpus: *const c_char, tol: f64, out_json: *mut *mut c_char) -> FzStatus {
    guard(|| {
        if !(tol > 0.0) {
            return Err(FzError::Precondition("tolerance must be positive".into()).into());
        }
        let dir = if corpus.is_null() { corpus_dir() } else { Path::new(str_arg(corpus, "corpus")?).to_path_buf() };
        let c = load_corpus(&dir, DEFAULT_GROUP_CAP)?;
        let report = run_selftest(&c, tol, fz_core::skew::DEFAULT_MACKEY_BUDGET);
        put_json(out_json, &to_value(&report)?)?;
        Ok(match report.exit_code() {
            0 => FzStatus::Ok,
            3 => FzStatus::Equivalence,
            _ => FzStatus::Validation,
        })
    })
}
