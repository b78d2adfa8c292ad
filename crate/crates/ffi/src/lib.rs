//! C ABI over `swimcal`.
//!
//! Every fallible call returns a [`SwimcalStatus`]; on failure the message
//! is available from [`swimcal_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function. Strings
//! returned through out-pointers are owned by the caller and released with
//! [`swimcal_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use swimcal::calib::RunRecord;
use swimcal::harness::{run_method, ExperimentConfig, HarnessError, MethodSpec, ProposerSpec, ReferenceSpec};
use swimcal::objective::reference::ReferenceSet;
use swimcal::objective::{Evaluator, SwimObjective, DEFAULT_FREQUENCIES};
use swimcal::params::{ParamBounds, ParamVector, SWIMMER_DIM};
use swimcal::swimsim::{SimConfig, SwimmerModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwimcalStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Runtime = 5,
    Aborted = 6,
    Panic = 7,
}

/// Reference marker data for a set of actuation frequencies.
pub struct SwimcalReference(Arc<ReferenceSet>);

/// Calibration objective bound to a reference.
pub struct SwimcalObjective(SwimObjective);

/// Result of one calibration or baseline run.
pub struct SwimcalRecord(RunRecord);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

struct Fail(SwimcalStatus, String);

impl From<HarnessError> for Fail {
    fn from(e: HarnessError) -> Self {
        let status = match &e {
            HarnessError::Config(_) | HarnessError::Reference(_) => SwimcalStatus::Config,
            HarnessError::Io(_) => SwimcalStatus::Io,
            _ => SwimcalStatus::Runtime,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SwimcalStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SwimcalStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
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
            SwimcalStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(SwimcalStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(SwimcalStatus::InvalidArgument, msg.into())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = CString::new(s).map_err(|e| invalid(e.to_string()))?.into_raw();
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn swimcal_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn swimcal_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn swimcal_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Number of swimmer parameters.
#[no_mangle]
pub extern "C" fn swimcal_param_dim() -> usize {
    SWIMMER_DIM
}

/// Copies the swimmer box into `lower` and `upper`, each of length `len`.
///
/// # Safety
/// `lower` and `upper` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn swimcal_param_bounds(lower: *mut f64, upper: *mut f64, len: usize) -> SwimcalStatus {
    guard(|| {
        if lower.is_null() || upper.is_null() {
            return Err(null("bounds buffer"));
        }
        if len != SWIMMER_DIM {
            return Err(invalid(format!("expected length {SWIMMER_DIM}, got {len}")));
        }
        let b = ParamBounds::swimmer();
        std::slice::from_raw_parts_mut(lower, len).copy_from_slice(&b.lower().0);
        std::slice::from_raw_parts_mut(upper, len).copy_from_slice(&b.upper().0);
        Ok(())
    })
}

/// Synthetic references at the default frequencies from a hidden vector
/// drawn with `hidden_seed`.
///
/// # Safety
/// `out` must be a valid pointer to a handle slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_synthetic(
    hidden_seed: u64,
    noise_sigma: f64,
    noise_seed: u64,
    out: *mut *mut SwimcalReference,
) -> SwimcalStatus {
    guard(|| {
        let r = ReferenceSet::synthetic_hidden(
            hidden_seed,
            &DEFAULT_FREQUENCIES,
            noise_sigma,
            noise_seed,
            &SimConfig::default(),
            &SwimmerModel::default(),
        )
        .map_err(HarnessError::from)?;
        write_out(out, SwimcalReference(Arc::new(r)))
    })
}

/// Synthetic references at the default frequencies from explicit
/// parameters.
///
/// # Safety
/// `theta` must point to `len` doubles; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_from_theta(
    theta: *const f64,
    len: usize,
    noise_sigma: f64,
    noise_seed: u64,
    out: *mut *mut SwimcalReference,
) -> SwimcalStatus {
    guard(|| {
        let t = ParamVector(slice_arg(theta, len, "theta")?.to_vec());
        let r = ReferenceSet::synthetic(
            &t,
            &DEFAULT_FREQUENCIES,
            noise_sigma,
            noise_seed,
            &SimConfig::default(),
            &SwimmerModel::default(),
        )
        .map_err(HarnessError::from)?;
        write_out(out, SwimcalReference(Arc::new(r)))
    })
}

/// Loads a reference directory.
///
/// # Safety
/// `dir` must be a NUL-terminated path; `out` must be a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_load(dir: *const c_char, out: *mut *mut SwimcalReference) -> SwimcalStatus {
    guard(|| {
        let d = str_arg(dir, "dir")?;
        let r = ReferenceSet::read_dir(Path::new(d), &SimConfig::default()).map_err(HarnessError::from)?;
        write_out(out, SwimcalReference(Arc::new(r)))
    })
}

/// Writes the reference as CSV files plus metadata into `dir`.
///
/// # Safety
/// `reference` must be a live handle; `dir` a NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_write(reference: *const SwimcalReference, dir: *const c_char) -> SwimcalStatus {
    guard(|| {
        let r = reference.as_ref().ok_or_else(|| null("reference"))?;
        let d = Path::new(str_arg(dir, "dir")?);
        std::fs::create_dir_all(d).map_err(|e| Fail(SwimcalStatus::Io, format!("{}: {e}", d.display())))?;
        r.0.write_dir(d).map_err(HarnessError::from)?;
        Ok(())
    })
}

/// Number of frequencies in the reference.
///
/// # Safety
/// `reference` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_frequency_count(reference: *const SwimcalReference) -> usize {
    reference.as_ref().map_or(0, |r| r.0.frequencies.len())
}

/// Copies the hidden parameters of a synthetic reference into `out`.
/// Fails with `INVALID_ARGUMENT` for ingested data.
///
/// # Safety
/// `reference` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_theta_star(
    reference: *const SwimcalReference,
    out: *mut f64,
    len: usize,
) -> SwimcalStatus {
    guard(|| {
        let r = reference.as_ref().ok_or_else(|| null("reference"))?;
        let t = r.0.theta_star().ok_or_else(|| invalid("reference has no known parameters"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != t.len() {
            return Err(invalid(format!("expected length {}, got {len}", t.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&t.0);
        Ok(())
    })
}

/// # Safety
/// `reference` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swimcal_reference_free(reference: *mut SwimcalReference) {
    if !reference.is_null() {
        drop(Box::from_raw(reference));
    }
}

/// # Safety
/// `reference` must be a live handle; `out` a valid handle slot. The
/// objective keeps its own reference to the data.
#[no_mangle]
pub unsafe extern "C" fn swimcal_objective_new(
    reference: *const SwimcalReference,
    out: *mut *mut SwimcalObjective,
) -> SwimcalStatus {
    guard(|| {
        let r = reference.as_ref().ok_or_else(|| null("reference"))?;
        write_out(out, SwimcalObjective(SwimObjective::new(r.0.clone(), SwimmerModel::default())))
    })
}

/// Evaluates the loss (meters) at `theta`. Divergence yields `+inf`.
///
/// # Safety
/// `objective` must be a live handle; `theta` must hold `len` doubles and
/// `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn swimcal_objective_evaluate(
    objective: *const SwimcalObjective,
    theta: *const f64,
    len: usize,
    loss: *mut f64,
) -> SwimcalStatus {
    guard(|| {
        let o = objective.as_ref().ok_or_else(|| null("objective"))?;
        let t = ParamVector(slice_arg(theta, len, "theta")?.to_vec());
        if loss.is_null() {
            return Err(null("loss"));
        }
        let r = o.0.evaluate(&t).map_err(|e| invalid(e.to_string()))?;
        *loss = r.loss;
        Ok(())
    })
}

/// # Safety
/// `objective` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swimcal_objective_free(objective: *mut SwimcalObjective) {
    if !objective.is_null() {
        drop(Box::from_raw(objective));
    }
}

/// Runs one method for `budget` evaluations.
///
/// `method_json` is a method entry as in experiment configs, e.g.
/// `{"method": "cmaes"}`; `proposer_json` is a proposer entry such as
/// `{"kind": "oracle"}` and may be null for methods without one.
///
/// Returns `ABORTED` (with the record still written) when the proposer
/// failed too often.
///
/// # Safety
/// `objective` must be a live handle, the strings NUL-terminated or null as
/// described, and `out` a valid handle slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_run(
    objective: *const SwimcalObjective,
    method_json: *const c_char,
    proposer_json: *const c_char,
    budget: usize,
    seed: u64,
    out: *mut *mut SwimcalRecord,
) -> SwimcalStatus {
    let mut aborted = None;
    let status = guard(|| {
        let o = objective.as_ref().ok_or_else(|| null("objective"))?;
        let spec: MethodSpec = serde_json::from_str(str_arg(method_json, "method_json")?)
            .map_err(|e| Fail(SwimcalStatus::Config, format!("method_json: {e}")))?;
        let proposer: Option<ProposerSpec> = if proposer_json.is_null() {
            None
        } else {
            Some(
                serde_json::from_str(str_arg(proposer_json, "proposer_json")?)
                    .map_err(|e| Fail(SwimcalStatus::Config, format!("proposer_json: {e}")))?,
            )
        };
        let mut cfg = ExperimentConfig::new(
            ReferenceSpec::Directory {
                path: Default::default(),
            },
            vec![spec.clone()],
        );
        cfg.budget = budget;
        cfg.seeds = vec![seed];
        cfg.frequencies = o.0.reference().frequencies.clone();
        cfg.proposer = proposer;
        cfg.validate()?;
        let record = run_method(&cfg, &spec, &o.0, seed)?;
        aborted = record.aborted.clone();
        write_out(out, SwimcalRecord(record))
    });
    match (status, aborted) {
        (SwimcalStatus::Ok, Some(reason)) => {
            set_error(reason);
            SwimcalStatus::Aborted
        }
        (s, _) => s,
    }
}

/// # Safety
/// `record` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_loss_best(record: *const SwimcalRecord) -> f64 {
    record.as_ref().map_or(f64::NAN, |r| r.0.loss_best)
}

/// Number of evaluations charged to the run.
///
/// # Safety
/// `record` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_evaluations(record: *const SwimcalRecord) -> usize {
    record.as_ref().map_or(0, |r| r.0.evaluations.len())
}

/// # Safety
/// `record` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_theta_best(record: *const SwimcalRecord, out: *mut f64, len: usize) -> SwimcalStatus {
    guard(|| {
        let r = record.as_ref().ok_or_else(|| null("record"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != r.0.theta_best.len() {
            return Err(invalid(format!("expected length {}, got {len}", r.0.theta_best.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r.0.theta_best.0);
        Ok(())
    })
}

/// Copies the best-so-far curve into `out`, which holds `len` doubles;
/// `len` must equal [`swimcal_record_evaluations`].
///
/// # Safety
/// `record` must be a live handle; `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_curve(record: *const SwimcalRecord, out: *mut f64, len: usize) -> SwimcalStatus {
    guard(|| {
        let r = record.as_ref().ok_or_else(|| null("record"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != r.0.best_curve.len() {
            return Err(invalid(format!("expected length {}, got {len}", r.0.best_curve.len())));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&r.0.best_curve);
        Ok(())
    })
}

/// Serializes the record (timing excluded) as JSON.
///
/// # Safety
/// `record` must be a live handle; `out` a valid string slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_to_json(record: *const SwimcalRecord, out: *mut *mut c_char) -> SwimcalStatus {
    guard(|| {
        let r = record.as_ref().ok_or_else(|| null("record"))?;
        let s = serde_json::to_string(&r.0.without_timing()).map_err(|e| Fail(SwimcalStatus::Runtime, e.to_string()))?;
        write_string(out, s)
    })
}

/// # Safety
/// `record` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn swimcal_record_free(record: *mut SwimcalRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// Runs a whole experiment from a config JSON string and returns the
/// summary as JSON. Returns `ABORTED` with the summary written when some
/// runs aborted.
///
/// # Safety
/// `config_json` must be NUL-terminated; `summary_out` a valid string slot.
#[no_mangle]
pub unsafe extern "C" fn swimcal_run_experiment(config_json: *const c_char, summary_out: *mut *mut c_char) -> SwimcalStatus {
    let mut aborted = false;
    let status = guard(|| {
        let cfg = ExperimentConfig::from_json(str_arg(config_json, "config_json")?)?;
        let outcome = swimcal::harness::run_experiment(&cfg)?;
        aborted = !outcome.aborted().is_empty();
        let s = serde_json::to_string(&outcome.summary).map_err(|e| Fail(SwimcalStatus::Runtime, e.to_string()))?;
        write_string(summary_out, s)
    });
    if status == SwimcalStatus::Ok && aborted {
        set_error("some runs aborted");
        return SwimcalStatus::Aborted;
    }
    status
}
