//! C ABI over `dmd-core`.
//!
//! Every function returns a [`DmdStatus`]. On failure the message is kept
//! per thread and can be read with [`dmd_last_error`]. Handles and strings
//! handed out by the library must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dmd_core::dsl::{code_length, parse, serialize, Skeleton, SymbolScope, TargetKind};
use dmd_core::engine::{check_trigger, Trigger, TriggerConfig};
use dmd_core::eval::{evaluate, SampleBatch};
use dmd_core::fit::{fit_and_score, FitConfig};
use dmd_core::metrics::{mape, r_squared};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Eval = 4,
    DomainFault = 5,
    InvalidArgument = 6,
    Undefined = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdKind {
    De = 0,
    Ae = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmdTrigger {
    Continue = 0,
    ExtendVariables = 1,
    Terminate = 2,
}

/// Opaque parsed skeleton.
pub struct DmdSkeleton {
    inner: Skeleton,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut msg: String = msg.into();
    msg.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

struct Failure(DmdStatus, String);

impl Failure {
    fn new(status: DmdStatus, msg: impl Into<String>) -> Failure {
        Failure(status, msg.into())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DmdStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DmdStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(DmdStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(DmdStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn str_list(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<String>, Failure> {
    if n == 0 {
        return Ok(Vec::new());
    }
    non_null(p, what)?;
    std::slice::from_raw_parts(p, n)
        .iter()
        .map(|s| str_arg(*s, what).map(str::to_string))
        .collect()
}

unsafe fn f64_slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn handle<'a>(h: *const DmdSkeleton) -> Result<&'a Skeleton, Failure> {
    non_null(h, "skeleton handle")?;
    Ok(&(*h).inner)
}

/// Column-major `n_cols × n_samples` block with its names.
unsafe fn batch_arg(
    names: *const *const c_char,
    data: *const f64,
    n_cols: usize,
    n_samples: usize,
) -> Result<SampleBatch, Failure> {
    let names = str_list(names, n_cols, "column names")?;
    let data = f64_slice(data, n_cols * n_samples, "column data")?;
    let pairs = names
        .into_iter()
        .enumerate()
        .map(|(i, n)| (n, data[i * n_samples..(i + 1) * n_samples].to_vec()));
    SampleBatch::from_pairs(pairs).map_err(|e| Failure::new(DmdStatus::InvalidArgument, e.to_string()))
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dmd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses `text` against the given states and variables. `targets` lists
/// the left-hand sides in order.
///
/// # Safety
/// String arrays must hold `n_*` valid NUL-terminated strings and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_parse(
    text: *const c_char,
    kind: DmdKind,
    states: *const *const c_char,
    n_states: usize,
    variables: *const *const c_char,
    n_variables: usize,
    targets: *const *const c_char,
    n_targets: usize,
    out: *mut *mut DmdSkeleton,
) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = str_arg(text, "text")?;
        let states = str_list(states, n_states, "states")?;
        let variables = str_list(variables, n_variables, "variables")?;
        let targets = str_list(targets, n_targets, "targets")?;
        let scope = SymbolScope::new(states, variables).map_err(|e| Failure::new(DmdStatus::Parse, e.to_string()))?;
        let kind = match kind {
            DmdKind::De => TargetKind::De,
            DmdKind::Ae => TargetKind::Ae,
        };
        let s = parse(text, kind, &scope, &targets).map_err(|e| Failure::new(DmdStatus::Parse, e.to_string()))?;
        *out = Box::into_raw(Box::new(DmdSkeleton { inner: s }));
        Ok(())
    })
}

/// # Safety
/// `h` must come from [`dmd_skeleton_parse`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_free(h: *mut DmdSkeleton) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Canonical text; release it with [`dmd_string_free`].
///
/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_serialize(h: *const DmdSkeleton, out: *mut *mut c_char) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = serialize(handle(h)?);
        let c = CString::new(text).map_err(|e| Failure::new(DmdStatus::InvalidArgument, e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library, or be null.
#[no_mangle]
pub unsafe extern "C" fn dmd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_code_length(h: *const DmdSkeleton, out: *mut usize) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = code_length(handle(h)?);
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_num_params(h: *const DmdSkeleton, out: *mut usize) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = handle(h)?.n_params;
        Ok(())
    })
}

/// # Safety
/// `h` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_num_targets(h: *const DmdSkeleton, out: *mut usize) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = handle(h)?.targets.len();
        Ok(())
    })
}

/// Evaluates every target on a column-major data block. `out` receives
/// `n_targets × n_samples` values, target-major.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_evaluate(
    h: *const DmdSkeleton,
    params: *const f64,
    n_params: usize,
    names: *const *const c_char,
    data: *const f64,
    n_cols: usize,
    n_samples: usize,
    out: *mut f64,
    out_len: usize,
) -> DmdStatus {
    guard(|| {
        let s = handle(h)?;
        let params = f64_slice(params, n_params, "params")?;
        let batch = batch_arg(names, data, n_cols, n_samples)?;
        let need = s.targets.len() * n_samples;
        if out_len < need {
            return Err(Failure::new(
                DmdStatus::InvalidArgument,
                format!("output buffer holds {out_len} values, {need} needed"),
            ));
        }
        non_null(out, "out")?;
        let r = evaluate(s, params, &batch).map_err(|e| Failure::new(DmdStatus::Eval, e.to_string()))?;
        if let Some(f) = &r.domain_fault {
            return Err(Failure::new(DmdStatus::DomainFault, format!("{f:?}")));
        }
        let out = std::slice::from_raw_parts_mut(out, need);
        for (t, row) in r.outputs.iter().enumerate() {
            out[t * n_samples..(t + 1) * n_samples].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Fits the parameters against the `labels` columns (one per target) with
/// the default Adam settings, overriding steps and seed. Writes the
/// parameters to `out_params` and `-MSE` to `out_score`.
///
/// # Safety
/// Pointers must cover the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dmd_skeleton_fit(
    h: *const DmdSkeleton,
    names: *const *const c_char,
    data: *const f64,
    n_cols: usize,
    n_samples: usize,
    labels: *const *const c_char,
    n_labels: usize,
    steps: usize,
    seed: u64,
    out_params: *mut f64,
    n_params: usize,
    out_score: *mut f64,
) -> DmdStatus {
    guard(|| {
        let s = handle(h)?;
        non_null(out_score, "out_score")?;
        if n_params != s.n_params {
            return Err(Failure::new(
                DmdStatus::InvalidArgument,
                format!("skeleton has {} parameters, buffer holds {n_params}", s.n_params),
            ));
        }
        let batch = batch_arg(names, data, n_cols, n_samples)?;
        let labels = str_list(labels, n_labels, "labels")?;
        let cfg = FitConfig {
            steps,
            seed,
            ..FitConfig::default()
        };
        cfg.validate().map_err(|e| Failure::new(DmdStatus::InvalidArgument, e))?;
        let fit = fit_and_score(s, &batch, &labels, &cfg).map_err(|e| Failure::new(DmdStatus::Eval, e.to_string()))?;
        if n_params > 0 {
            non_null(out_params, "out_params")?;
            std::slice::from_raw_parts_mut(out_params, n_params).copy_from_slice(&fit.params);
        }
        *out_score = fit.score;
        if let Some(reason) = fit.fault {
            return Err(Failure::new(DmdStatus::DomainFault, reason));
        }
        Ok(())
    })
}

/// Trigger decision for the best-score history `s*_0..s*_t`.
///
/// # Safety
/// `history` must hold `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_check_trigger(
    history: *const f64,
    len: usize,
    epsilon: f64,
    gamma: f64,
    window: usize,
    out: *mut DmdTrigger,
) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        let h = f64_slice(history, len, "history")?;
        let cfg = TriggerConfig { epsilon, gamma, window };
        cfg.validate().map_err(|e| Failure::new(DmdStatus::InvalidArgument, e))?;
        *out = match check_trigger(h, &cfg) {
            Trigger::Continue => DmdTrigger::Continue,
            Trigger::ExtendVariables => DmdTrigger::ExtendVariables,
            Trigger::Terminate => DmdTrigger::Terminate,
        };
        Ok(())
    })
}

/// MAPE in percent; near-zero truth samples are skipped.
///
/// # Safety
/// `truth` and `pred` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_mape(truth: *const f64, pred: *const f64, n: usize, out: *mut f64) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = f64_slice(truth, n, "truth")?;
        let p = f64_slice(pred, n, "pred")?;
        *out = mape(t, p)
            .value
            .ok_or_else(|| Failure::new(DmdStatus::Undefined, "every truth sample is near zero"))?;
        Ok(())
    })
}

/// # Safety
/// `truth` and `pred` must hold `n` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dmd_r_squared(truth: *const f64, pred: *const f64, n: usize, out: *mut f64) -> DmdStatus {
    guard(|| {
        non_null(out, "out")?;
        let t = f64_slice(truth, n, "truth")?;
        let p = f64_slice(pred, n, "pred")?;
        *out = r_squared(t, p).ok_or_else(|| Failure::new(DmdStatus::Undefined, "truth has no variance"))?;
        Ok(())
    })
}
