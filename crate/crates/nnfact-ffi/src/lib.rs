//! C interface: opaque handles over the compiler pipeline, JSON strings as
//! the exchange format, and integer status codes mirroring the CLI exit
//! contract. Every function is safe to call with null pointers (it reports
//! `NNF_STATUS_INTERNAL`); returned strings and handles must be released
//! with the matching `nnf_*_free`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;

use nnfact::compiler::Instance;
use nnfact::solver::{nmf_search, DenseMatrix, SolveConfig};
use nnfact::witness::{
    build_witness, extract_root, verify_factorization, Factorization, VerifyMode,
};
use nnfact::{Error, RatMatrix};

/// Status codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[allow(non_camel_case_types)]
pub enum NnfStatus {
    /// Success.
    NNF_STATUS_OK = 0,
    /// Null pointer, invalid UTF-8, or an internal invariant failure.
    NNF_STATUS_INTERNAL = 1,
    /// Input text or JSON failed to parse.
    NNF_STATUS_PARSE = 2,
    /// The pipeline could not process a well-formed input.
    NNF_STATUS_PIPELINE = 3,
    /// Semantically rejected: non-root, failed probe, failed verification.
    NNF_STATUS_SEMANTIC = 4,
}

use NnfStatus::*;

/// Opaque compiled instance.
pub struct NnfInstance(Instance);

/// Opaque factorization.
pub struct NnfFactorization(Factorization);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NnfStatus {
    match e {
        Error::Parse { .. } | Error::Json(_) => NNF_STATUS_PARSE,
        Error::NotARoot(_)
        | Error::OutOfCube { .. }
        | Error::OutOfRange { .. }
        | Error::ProbeFailure(_)
        | Error::DegenerateFactorization
        | Error::CompletionInfeasible(_)
        | Error::UnderDetermined(_) => NNF_STATUS_SEMANTIC,
        _ => NNF_STATUS_PIPELINE,
    }
}

fn fail(e: Error) -> NnfStatus {
    set_error(&e.to_string());
    status_of(&e)
}

fn internal(msg: &str) -> NnfStatus {
    set_error(msg);
    NNF_STATUS_INTERNAL
}

/// # Safety
/// `ptr` must be a valid C string or null.
unsafe fn read_str<'a>(ptr: *const c_char) -> Result<&'a str, NnfStatus> {
    if ptr.is_null() {
        return Err(internal("null string argument"));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| internal("string argument is not UTF-8"))
}

fn give_string(s: String, out: *mut *mut c_char) -> NnfStatus {
    if out.is_null() {
        return internal("null output pointer");
    }
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            NNF_STATUS_OK
        }
        Err(_) => internal("output contained an interior NUL"),
    }
}

/// Message of the most recent failure on this thread. Valid until the next
/// failing call; do not free.
#[no_mangle]
pub extern "C" fn nnf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Compiles the polynomial text (e.g. "x1 + x2 - 1") into an instance.
///
/// # Safety
/// `poly` must be a valid C string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nnf_compile(
    poly: *const c_char,
    out: *mut *mut NnfInstance,
) -> NnfStatus {
    let text = match read_str(poly) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return internal("null output pointer");
    }
    let f = match nnfact::parse_poly(text.trim()) {
        Ok(f) => f,
        Err(e) => return fail(e),
    };
    match nnfact::compile(&f) {
        Ok(inst) => {
            *out = Box::into_raw(Box::new(NnfInstance(inst)));
            NNF_STATUS_OK
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `json` must be a valid C string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_from_json(
    json: *const c_char,
    out: *mut *mut NnfInstance,
) -> NnfStatus {
    let text = match read_str(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return internal("null output pointer");
    }
    match serde_json::from_str::<Instance>(text) {
        Ok(inst) => {
            if inst.k != inst.recompute_k() {
                return fail(Error::InvalidInstance(
                    "stored k disagrees with the layer budget".into(),
                ));
            }
            *out = Box::into_raw(Box::new(NnfInstance(inst)));
            NNF_STATUS_OK
        }
        Err(e) => fail(Error::Json(e)),
    }
}

/// # Safety
/// `inst` must come from this library; `out` must be valid. Free the string
/// with `nnf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_to_json(
    inst: *const NnfInstance,
    out: *mut *mut c_char,
) -> NnfStatus {
    let Some(inst) = inst.as_ref() else {
        return internal("null instance");
    };
    match serde_json::to_string(&inst.0) {
        Ok(js) => give_string(js, out),
        Err(e) => fail(Error::Json(e)),
    }
}

/// Target factorization size of the instance, or -1 on null.
///
/// # Safety
/// `inst` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_k(inst: *const NnfInstance) -> i64 {
    inst.as_ref().map_or(-1, |i| i.0.k as i64)
}

/// Number of original variables, or -1 on null.
///
/// # Safety
/// `inst` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_vars(inst: *const NnfInstance) -> i64 {
    inst.as_ref().map_or(-1, |i| i.0.n as i64)
}

/// Matrix dimensions, or -1 on null.
///
/// # Safety
/// `inst` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_rows(inst: *const NnfInstance) -> i64 {
    inst.as_ref().map_or(-1, |i| i.0.matrix.rows() as i64)
}

/// # Safety
/// `inst` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_cols(inst: *const NnfInstance) -> i64 {
    inst.as_ref().map_or(-1, |i| i.0.matrix.cols() as i64)
}

/// Builds the exact witness factorization at a root given as
/// `"x1=1/2,x2=1/2"`.
///
/// # Safety
/// `inst` from this library; `assign` a valid C string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nnf_witness(
    inst: *const NnfInstance,
    assign: *const c_char,
    out: *mut *mut NnfFactorization,
) -> NnfStatus {
    let Some(inst) = inst.as_ref() else {
        return internal("null instance");
    };
    let assign = match read_str(assign) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return internal("null output pointer");
    }
    let point = match inst.0.parse_point(assign) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    match build_witness(&inst.0, &point) {
        Ok(fac) => {
            *out = Box::into_raw(Box::new(NnfFactorization(fac)));
            NNF_STATUS_OK
        }
        Err(e) => fail(e),
    }
}

/// Extracts the root; writes it in the same `"x1=...,x2=..."` format.
///
/// # Safety
/// Handles from this library; `out` valid. Free with `nnf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn nnf_extract(
    inst: *const NnfInstance,
    fac: *const NnfFactorization,
    tol: f64,
    out: *mut *mut c_char,
) -> NnfStatus {
    let (Some(inst), Some(fac)) = (inst.as_ref(), fac.as_ref()) else {
        return internal("null handle");
    };
    match extract_root(&inst.0, &fac.0, tol) {
        Ok(point) => {
            let rendered = inst
                .0
                .x_names()
                .iter()
                .zip(&point)
                .map(|(n, v)| format!("{n}={}", nnfact::exact::rat_to_string(v)))
                .collect::<Vec<_>>()
                .join(",");
            give_string(rendered, out)
        }
        Err(e) => fail(e),
    }
}

/// Verifies the factorization against the instance. `tol < 0` selects exact
/// mode. Writes the JSON report; returns `NNF_STATUS_OK` only if every
/// check passed.
///
/// # Safety
/// Handles from this library; `report_out` valid or null.
#[no_mangle]
pub unsafe extern "C" fn nnf_verify(
    inst: *const NnfInstance,
    fac: *const NnfFactorization,
    tol: f64,
    report_out: *mut *mut c_char,
) -> NnfStatus {
    let (Some(inst), Some(fac)) = (inst.as_ref(), fac.as_ref()) else {
        return internal("null handle");
    };
    let mode = if tol < 0.0 {
        VerifyMode::Exact
    } else {
        VerifyMode::Tol(tol)
    };
    let report = verify_factorization(&inst.0.matrix, inst.0.k, &fac.0, mode);
    if !report_out.is_null() {
        match serde_json::to_string(&report) {
            Ok(js) => {
                let s = give_string(js, report_out);
                if s != NNF_STATUS_OK {
                    return s;
                }
            }
            Err(e) => return fail(Error::Json(e)),
        }
    }
    if report.all_ok() {
        NNF_STATUS_OK
    } else {
        set_error("verification failed");
        NNF_STATUS_SEMANTIC
    }
}

/// # Safety
/// `json` a valid C string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nnf_factorization_from_json(
    json: *const c_char,
    out: *mut *mut NnfFactorization,
) -> NnfStatus {
    let text = match read_str(json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return internal("null output pointer");
    }
    match serde_json::from_str::<Factorization>(text) {
        Ok(fac) => {
            if let Err(e) = fac.validate() {
                return fail(e);
            }
            *out = Box::into_raw(Box::new(NnfFactorization(fac)));
            NNF_STATUS_OK
        }
        Err(e) => fail(Error::Json(e)),
    }
}

/// # Safety
/// `fac` from this library; `out` valid. Free with `nnf_string_free`.
#[no_mangle]
pub unsafe extern "C" fn nnf_factorization_to_json(
    fac: *const NnfFactorization,
    out: *mut *mut c_char,
) -> NnfStatus {
    let Some(fac) = fac.as_ref() else {
        return internal("null factorization");
    };
    match serde_json::to_string(&fac.0) {
        Ok(js) => give_string(js, out),
        Err(e) => fail(Error::Json(e)),
    }
}

/// Numeric factorization search on a matrix given as Matrix JSON. Returns
/// `NNF_STATUS_SEMANTIC` when no factorization meets the threshold.
///
/// # Safety
/// `matrix_json` a valid C string; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn nnf_solve(
    matrix_json: *const c_char,
    rank: u64,
    restarts: u64,
    max_iters: u64,
    threshold: f64,
    seed: u64,
    threads: u64,
    out: *mut *mut NnfFactorization,
) -> NnfStatus {
    let text = match read_str(matrix_json) {
        Ok(t) => t,
        Err(s) => return s,
    };
    if out.is_null() {
        return internal("null output pointer");
    }
    let m: RatMatrix = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => return fail(Error::Json(e)),
    };
    let cfg = SolveConfig {
        k: rank as usize,
        restarts: restarts as usize,
        max_iters: max_iters as usize,
        tol: 1e-12,
        threshold,
        seed,
        threads: threads.max(1) as usize,
    };
    match nmf_search(&DenseMatrix::from_exact(&m), &cfg) {
        Ok(Some(fac)) => {
            *out = Box::into_raw(Box::new(NnfFactorization(fac)));
            NNF_STATUS_OK
        }
        Ok(None) => {
            set_error("no factorization met the threshold");
            NNF_STATUS_SEMANTIC
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `inst` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn nnf_instance_free(inst: *mut NnfInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// # Safety
/// `fac` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn nnf_factorization_free(fac: *mut NnfFactorization) {
    if !fac.is_null() {
        drop(Box::from_raw(fac));
    }
}

/// # Safety
/// `s` must have been returned by this library (or be null) and not be used
/// again.
#[no_mangle]
pub unsafe extern "C" fn nnf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
