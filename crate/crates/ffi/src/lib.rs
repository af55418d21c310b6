//! C interface to `factive`.
//!
//! Scenarios and datasets are opaque handles owned by the caller and released
//! with their `_free` function. Functions return a [`FactiveStatus`]; on
//! failure [`factive_last_error_message`] describes the error for the calling
//! thread. Strings written through `char **out` parameters are owned by the
//! caller and must be released with [`factive_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use factive::dataset;
use factive::gate;
use factive::montecarlo::{simulate, Execution};
use factive::{
    estimate_dataset, generate_outcomes, randomize_cohort, true_estimands, AnalysisConfig, Error, ScenarioConfig,
    TrialDataset,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactiveStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Parse = 4,
    Data = 5,
    Identifiability = 6,
    Estimation = 7,
    State = 8,
    Io = 9,
    Panic = 10,
}

/// A parsed and validated scenario.
pub struct FactiveScenario {
    config: ScenarioConfig,
}

/// A trial dataset, with or without outcomes.
pub struct FactiveDataset {
    data: TrialDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> FactiveStatus {
    match e {
        Error::Config { .. } => FactiveStatus::Config,
        Error::Parse(_) => FactiveStatus::Parse,
        Error::Data { .. } => FactiveStatus::Data,
        Error::Identifiability(_) => FactiveStatus::Identifiability,
        Error::Estimation(_) => FactiveStatus::Estimation,
        Error::State(_) => FactiveStatus::State,
        Error::Io(_) => FactiveStatus::Io,
    }
}

struct Fail(FactiveStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(FactiveStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FactiveStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FactiveStatus::Ok,
        Ok(Err(Fail(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FactiveStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(FactiveStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(FactiveStatus::InvalidUtf8, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn scenario_ref<'a>(p: *const FactiveScenario) -> Result<&'a FactiveScenario, Fail> {
    p.as_ref().ok_or_else(|| null("scenario"))
}

unsafe fn dataset_ref<'a>(p: *const FactiveDataset) -> Result<&'a FactiveDataset, Fail> {
    p.as_ref().ok_or_else(|| null("dataset"))
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("report serializes")
}

/// Parse and validate a TOML scenario. Warnings are accepted; any error-level
/// diagnostic fails with `FACTIVE_STATUS_CONFIG`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_scenario_from_toml(toml: *const c_char, out: *mut *mut FactiveScenario) -> FactiveStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = ScenarioConfig::from_toml_str(read_str(toml, "toml")?)?;
        let errors: Vec<String> = config
            .validate()
            .into_iter()
            .filter(|d| d.severity == factive::design::Severity::Error)
            .map(|d| match d.field {
                Some(f) => format!("{f}: {}", d.message),
                None => d.message,
            })
            .collect();
        if !errors.is_empty() {
            return Err(Fail(FactiveStatus::Config, errors.join("; ")));
        }
        *out = Box::into_raw(Box::new(FactiveScenario { config }));
        Ok(())
    })
}

/// # Safety
/// `scenario` must be null or a handle from [`factive_scenario_from_toml`]
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn factive_scenario_free(scenario: *mut FactiveScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// True estimand values as JSON.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_truth_json(scenario: *const FactiveScenario, out: *mut *mut c_char) -> FactiveStatus {
    guard(|| {
        let s = scenario_ref(scenario)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = &s.config;
        let truth = true_estimands(&c.model, &c.analysis.weights, Some(&c.design.expected_cell_counts()))?;
        write_string(out, json(&truth))
    })
}

/// Run a Monte Carlo study and return its summary as JSON. `n_reps = 0`
/// uses the scenario's replicate count; `use_seed = false` uses its seed.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_simulate_json(
    scenario: *const FactiveScenario,
    n_reps: u64,
    use_seed: bool,
    seed: u64,
    out: *mut *mut c_char,
) -> FactiveStatus {
    guard(|| {
        let s = scenario_ref(scenario)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let reps = if n_reps == 0 { s.config.simulation.n_reps } else { n_reps };
        let seed = if use_seed { seed } else { s.config.simulation.seed };
        let run = simulate(&s.config.scenario(), reps, seed, Execution::Parallel)?;
        write_string(out, json(&run.summary))
    })
}

/// Randomize a cohort and generate outcomes with the given seed.
///
/// # Safety
/// `scenario` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_generate_dataset(
    scenario: *const FactiveScenario,
    seed: u64,
    out: *mut *mut FactiveDataset,
) -> FactiveStatus {
    guard(|| {
        let s = scenario_ref(scenario)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let mut design = s.config.design.clone();
        design.seed = seed;
        let allocated = randomize_cohort(&design)?;
        let data = generate_outcomes(&allocated, &s.config.model, seed)?;
        *out = Box::into_raw(Box::new(FactiveDataset { data }));
        Ok(())
    })
}

/// Parse a dataset from CSV text.
///
/// # Safety
/// `csv` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_dataset_from_csv(csv: *const c_char, out: *mut *mut FactiveDataset) -> FactiveStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let data = dataset::read_csv(read_str(csv, "csv")?.as_bytes())?;
        *out = Box::into_raw(Box::new(FactiveDataset { data }));
        Ok(())
    })
}

/// # Safety
/// `data` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_dataset_to_csv(data: *const FactiveDataset, out: *mut *mut c_char) -> FactiveStatus {
    guard(|| {
        let d = dataset_ref(data)?;
        if out.is_null() {
            return Err(null("out"));
        }
        write_string(out, dataset::to_csv_string(&d.data)?)
    })
}

/// Number of patients, or 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn factive_dataset_len(data: *const FactiveDataset) -> usize {
    data.as_ref().map_or(0, |d| d.data.len())
}

/// # Safety
/// `data` must be null or a live handle that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn factive_dataset_free(data: *mut FactiveDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Estimate all estimands and return the report as JSON. The analysis
/// settings come from `scenario`, or the defaults when it is null.
///
/// # Safety
/// `data` must be a live handle, `scenario` null or a live handle, and `out`
/// a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_estimate_json(
    data: *const FactiveDataset,
    scenario: *const FactiveScenario,
    out: *mut *mut c_char,
) -> FactiveStatus {
    guard(|| {
        let d = dataset_ref(data)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let analysis = scenario
            .as_ref()
            .map_or_else(AnalysisConfig::default, |s| s.config.analysis.clone());
        let report = estimate_dataset(&d.data, &analysis)?;
        write_string(out, json(&report))
    })
}

/// Posterior probability that the treatment effect is positive under a
/// normal prior and normal likelihood.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn factive_posterior_probability(
    prior_mean: f64,
    prior_sd: f64,
    estimate: f64,
    se: f64,
    out: *mut f64,
) -> FactiveStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = gate::posterior(prior_mean, prior_sd, estimate, se)?.prob_positive;
        Ok(())
    })
}

/// Message for the most recent failure on this thread, or null. The pointer
/// stays valid until the next `factive_*` call on the same thread.
#[no_mangle]
pub extern "C" fn factive_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must be null or a string returned through an `out` parameter of this
/// library that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn factive_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn factive_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
