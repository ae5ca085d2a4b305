//! C ABI over the risk-estimation engine.
//!
//! Two surfaces, both safe to drive from any language with a C FFI:
//!
//! * **Direct weight evaluation** — one function per closed-form weight
//!   family, stateless, thread-safe.
//! * **Experiment handles** — an opaque pointer wrapping a validated
//!   experiment configuration; runs produce a JSON summary string.
//!
//! Every fallible function returns a status code and reports details
//! through a thread-local message retrievable with
//! [`nestedmc_last_error_message`]. Strings returned by this library are
//! owned by the caller and must be released with [`nestedmc_string_free`];
//! the pointer from [`nestedmc_version`] is static and must not be freed.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use libc::{c_char, c_double, c_int};

use nestedmc::error::Error;
use nestedmc::harness::{method_name, run_experiment, ExperimentConfig};
use nestedmc::models::{GbmParams, GmwbParams, OuterScenario, Rsln2Params, VasicekParams};
use nestedmc::weights::{PairWeight, WeightInput};

/// Success.
pub const NESTEDMC_OK: c_int = 0;
/// A required pointer argument was null.
pub const NESTEDMC_ERR_NULL_POINTER: c_int = 1;
/// A string argument was not valid UTF-8.
pub const NESTEDMC_ERR_INVALID_UTF8: c_int = 2;
/// The experiment configuration failed to parse or validate.
pub const NESTEDMC_ERR_INVALID_CONFIG: c_int = 3;
/// The computation itself failed; see the last error message.
pub const NESTEDMC_ERR_RUN_FAILED: c_int = 4;
/// A numeric argument lay outside its domain.
pub const NESTEDMC_ERR_INVALID_PARAMETER: c_int = 5;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).ok();
    });
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn code_for(error: &Error) -> c_int {
    match error {
        Error::Config(_) => NESTEDMC_ERR_INVALID_CONFIG,
        Error::InvalidParameter(_) => NESTEDMC_ERR_INVALID_PARAMETER,
        _ => NESTEDMC_ERR_RUN_FAILED,
    }
}

/// Run a fallible body behind a panic guard, storing the error message
/// and mapping everything to a status code.
fn guarded(body: impl FnOnce() -> Result<(), (c_int, String)>) -> c_int {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_last_error();
            NESTEDMC_OK
        }
        Ok(Err((code, message))) => {
            set_last_error(message);
            code
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal panic".to_string());
            set_last_error(format!("internal panic: {message}"));
            NESTEDMC_ERR_RUN_FAILED
        }
    }
}

fn write_weight(
    out: *mut c_double,
    result: nestedmc::error::Result<f64>,
) -> Result<(), (c_int, String)> {
    if out.is_null() {
        return Err((NESTEDMC_ERR_NULL_POINTER, "out pointer is null".into()));
    }
    match result {
        Ok(w) => {
            unsafe { *out = w };
            Ok(())
        }
        Err(e) => Err((code_for(&e), e.to_string())),
    }
}

/// Static library version string; do not free.
#[no_mangle]
pub extern "C" fn nestedmc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Copy of the calling thread's last error message, or null when the
/// last call on this thread succeeded. Free with
/// [`nestedmc_string_free`].
#[no_mangle]
pub extern "C" fn nestedmc_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Release a string returned by this library. Null is a no-op.
#[no_mangle]
pub extern "C" fn nestedmc_string_free(s: *mut c_char) {
    if !s.is_null() {
        unsafe { drop(CString::from_raw(s)) };
    }
}

/// Lognormal one-step weight: the likelihood ratio at first-step level
/// `y` of a path regrown from `x_reference` onto scenario `x_target`,
/// for a risk-neutral step of length `dt` under rate `r` and volatility
/// `sigma`.
#[no_mangle]
pub extern "C" fn nestedmc_weight_gbm(
    r: c_double,
    sigma: c_double,
    dt: c_double,
    x_reference: c_double,
    x_target: c_double,
    y: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let params = GbmParams { f0: 1.0, mu: 0.0, r, sigma };
        let result = PairWeight::gbm(&params, dt, x_reference, x_target)
            .and_then(|w| w.evaluate(&WeightInput::FirstStep(y)));
        write_weight(out, result)
    })
}

/// Mean-reverting (Ornstein-Uhlenbeck) one-step weight at first-step
/// level `y`.
#[no_mangle]
pub extern "C" fn nestedmc_weight_vasicek(
    kappa: c_double,
    theta: c_double,
    sigma: c_double,
    dt: c_double,
    x_reference: c_double,
    x_target: c_double,
    y: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let params = VasicekParams { kappa, theta, sigma, f0: theta };
        let result = PairWeight::vasicek(&params, dt, x_reference, x_target)
            .and_then(|w| w.evaluate(&WeightInput::FirstStep(y)));
        write_weight(out, result)
    })
}

/// Two-regime switching lognormal one-step weight at first-step level
/// `y` observed in regime `regime_y`. Regimes are 1 or 2.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub extern "C" fn nestedmc_weight_rsln2(
    mu1: c_double,
    sigma1: c_double,
    mu2: c_double,
    sigma2: c_double,
    p12: c_double,
    p21: c_double,
    dt: c_double,
    x_reference: c_double,
    regime_reference: c_int,
    x_target: c_double,
    regime_target: c_int,
    y: c_double,
    regime_y: c_int,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let regime = |r: c_int, name: &str| -> Result<u8, (c_int, String)> {
            if r == 1 || r == 2 {
                Ok(r as u8)
            } else {
                Err((
                    NESTEDMC_ERR_INVALID_PARAMETER,
                    format!("{name} must be regime 1 or 2, got {r}"),
                ))
            }
        };
        let params = Rsln2Params { mu1, sigma1, mu2, sigma2, p12, p21, f0: 1.0, s0: 1 };
        let reference = OuterScenario::with_regime(x_reference, regime(regime_reference, "regime_reference")?);
        let target = OuterScenario::with_regime(x_target, regime(regime_target, "regime_target")?);
        let input =
            WeightInput::FirstStepRegime { value: y, regime: regime(regime_y, "regime_y")? };
        let result = PairWeight::rsln2(&params, dt, &reference, &target)
            .and_then(|w| w.evaluate(&input));
        write_weight(out, result)
    })
}

/// Withdrawal-account one-step weight at raw first-step level `y` (the
/// account level before the floor at zero), under withdrawal rate `w`,
/// fee rate `m_f`, rate `r`, and volatility `sigma`.
#[no_mangle]
pub extern "C" fn nestedmc_weight_gmwb(
    w: c_double,
    m_f: c_double,
    r: c_double,
    sigma: c_double,
    dt: c_double,
    x_reference: c_double,
    x_target: c_double,
    y: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let params = GmwbParams { g: 1.0, w, m_f, r, mu: 0.0, sigma };
        let result = PairWeight::gmwb(&params, dt, x_reference, x_target)
            .and_then(|wt| wt.evaluate(&WeightInput::FirstStep(y)));
        write_weight(out, result)
    })
}

/// Joint weight of a lognormal path's (running minimum, final value)
/// pair over a horizon, for regrowing barrier-style payoffs: evaluated
/// at observed minimum `z_min` and final level `z_final`.
#[no_mangle]
pub extern "C" fn nestedmc_weight_barrier(
    r: c_double,
    sigma: c_double,
    horizon: c_double,
    x_reference: c_double,
    x_target: c_double,
    z_min: c_double,
    z_final: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let params = GbmParams { f0: 1.0, mu: 0.0, r, sigma };
        let result = PairWeight::barrier_joint(&params, horizon, x_reference, x_target)
            .and_then(|w| w.evaluate(&WeightInput::MinFinal { min: z_min, final_value: z_final }));
        write_weight(out, result)
    })
}

/// Synthetic-example weight: unit-variance normal densities centered at
/// the negated scenarios, evaluated at draw `z`.
#[no_mangle]
pub extern "C" fn nestedmc_weight_toy(
    x_reference: c_double,
    x_target: c_double,
    z: c_double,
    out: *mut c_double,
) -> c_int {
    guarded(|| {
        let result =
            PairWeight::toy(x_reference, x_target).evaluate(&WeightInput::FirstStep(z));
        write_weight(out, result)
    })
}

/// An opaque, validated experiment configuration.
pub struct NestedmcExperiment {
    config: ExperimentConfig,
}

/// Parse and validate a JSON experiment configuration, returning an
/// opaque handle through `out`. Free with [`nestedmc_experiment_free`].
///
/// # Safety
/// `config_json` must point to a NUL-terminated string, and `out` to a
/// writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn nestedmc_experiment_new(
    config_json: *const c_char,
    out: *mut *mut NestedmcExperiment,
) -> c_int {
    guarded(|| {
        if config_json.is_null() || out.is_null() {
            return Err((NESTEDMC_ERR_NULL_POINTER, "config_json and out must be non-null".into()));
        }
        let text = unsafe { CStr::from_ptr(config_json) }
            .to_str()
            .map_err(|e| (NESTEDMC_ERR_INVALID_UTF8, format!("config is not UTF-8: {e}")))?;
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| (NESTEDMC_ERR_INVALID_CONFIG, format!("config does not parse: {e}")))?;
        config.validate().map_err(|e| (code_for(&e), e.to_string()))?;
        unsafe { *out = Box::into_raw(Box::new(NestedmcExperiment { config })) };
        Ok(())
    })
}

/// Run the experiment behind a handle and return its summary as a JSON
/// string through `out_json` (free with [`nestedmc_string_free`]).
/// Report files are written to the configured output directory as a side
/// effect.
///
/// # Safety
/// `handle` must come from [`nestedmc_experiment_new`] and not have been
/// freed; `out_json` must point to a writable pointer slot.
#[no_mangle]
pub unsafe extern "C" fn nestedmc_experiment_run(
    handle: *const NestedmcExperiment,
    out_json: *mut *mut c_char,
) -> c_int {
    guarded(|| {
        if handle.is_null() || out_json.is_null() {
            return Err((NESTEDMC_ERR_NULL_POINTER, "handle and out_json must be non-null".into()));
        }
        let experiment = unsafe { &*handle };
        let report =
            run_experiment(&experiment.config).map_err(|e| (code_for(&e), e.to_string()))?;
        let methods: Vec<serde_json::Value> = report
            .methods
            .iter()
            .map(|r| {
                serde_json::json!({
                    "method": method_name(r.method),
                    "trials": r.trials,
                    "n_units": r.n_units,
                    "m": r.m,
                    "b_units": r.b_units,
                    "mean_estimate": r.mean_estimate,
                    "sd_estimate": r.sd_estimate,
                    "mse": r.mse,
                    "ce": {
                        "inner_paths": r.ce_total.inner_paths,
                        "weight_evals": r.ce_total.weight_evals,
                        "target_first_steps": r.ce_total.target_first_steps,
                    },
                    "mean_wall_seconds": r.mean_wall_seconds,
                })
            })
            .collect();
        let invariants: Vec<serde_json::Value> = report
            .invariants
            .iter()
            .map(|c| serde_json::json!({ "name": c.name, "passed": c.passed, "note": c.note }))
            .collect();
        let summary = serde_json::json!({
            "example": report.example.as_str(),
            "oracle_value": report.oracle_value,
            "oracle_note": report.oracle_note,
            "methods": methods,
            "effort": report.effort.map(|e| serde_json::json!({
                "gamma_ns": e.gamma_ns,
                "delta_ns": e.delta_ns,
            })),
            "invariants": invariants,
            "all_invariants_pass": report.all_invariants_pass(),
            "report_path": report.report_path.display().to_string(),
            "timing_path": report.timing_path.display().to_string(),
            "checks_path": report.checks_path.display().to_string(),
        });
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| (NESTEDMC_ERR_RUN_FAILED, format!("summary serialization: {e}")))?;
        let c_text = CString::new(text)
            .map_err(|e| (NESTEDMC_ERR_RUN_FAILED, format!("summary contains NUL: {e}")))?;
        unsafe { *out_json = c_text.into_raw() };
        Ok(())
    })
}

/// Release an experiment handle. Null is a no-op.
///
/// # Safety
/// `handle` must come from [`nestedmc_experiment_new`] and not have been
/// freed already.
#[no_mangle]
pub unsafe extern "C" fn nestedmc_experiment_free(handle: *mut NestedmcExperiment) {
    if !handle.is_null() {
        unsafe { drop(Box::from_raw(handle)) };
    }
}
