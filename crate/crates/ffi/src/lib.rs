//! C ABI for `rdperm`.
//!
//! Objects cross the boundary as opaque handles created by `rdp_*_new` or
//! `rdp_*_load_*` and released by the matching `rdp_*_free`. Every fallible
//! function returns an `RDP_*` status code; on failure a message is available
//! from [`rdp_last_error_message`] on the calling thread. Panics never unwind
//! into C: they are caught and reported as `RDP_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rdperm::data::{
    load_frame, ColumnSchema, Covariate, CovariateKind, DataError, Direction, Exclusion, UnitFrame, WindowSpec,
};
use rdperm::inference::{hl_closed_form, invert_ci, test_effect, ConfidenceSet, EffectHypothesis, EffectInference};
use rdperm::models::{ModelFamily, ModelSpec};
use rdperm::permute::{PermError, PermutationPlan, Sidedness, StatKind, Statistic};
use rdperm::spectests::{balance_test, default_covariate_models, BalanceError, McCraryError, McCraryOptions};
use rdperm::windowing::mccrary_in_window;

pub const RDP_OK: i32 = 0;
pub const RDP_NULL_POINTER: i32 = 1;
pub const RDP_INVALID_ARGUMENT: i32 = 2;
pub const RDP_DATA_ERROR: i32 = 3;
pub const RDP_DEGENERATE_WINDOW: i32 = 4;
pub const RDP_COMPUTATION_ERROR: i32 = 5;
pub const RDP_PANIC: i32 = 6;

pub const RDP_MODEL_CONSTANT: i32 = 0;
pub const RDP_MODEL_LINEAR: i32 = 1;
pub const RDP_MODEL_QUADRATIC: i32 = 2;

pub const RDP_STAT_DIFF_MEANS: i32 = 0;
pub const RDP_STAT_ABS_DIFF_MEANS: i32 = 1;
pub const RDP_STAT_SUM_CROSS: i32 = 2;
pub const RDP_STAT_RANK_STUDENTIZED: i32 = 3;

pub const RDP_COVARIATE_INFER: i32 = -1;
pub const RDP_COVARIATE_CONTINUOUS: i32 = 0;
pub const RDP_COVARIATE_BINARY: i32 = 1;

/// Unit-level data: running variable, optional outcome, covariates.
pub struct RdpFrame {
    frame: UnitFrame,
}

/// Result of a confidence-interval inversion.
pub struct RdpInference {
    inner: EffectInference,
}

/// Analysis window around the cutoff. Pass a null pointer for all units.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RdpWindow {
    /// Bandwidth below the cutoff; infinity for no limit.
    pub left: f64,
    /// Bandwidth above the cutoff; infinity for no limit.
    pub right: f64,
    /// Running-variable values to leave out; may be null when `n_exclude` is 0.
    pub exclude: *const f64,
    pub n_exclude: usize,
}

/// Permutation settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RdpPlan {
    pub seed: u64,
    /// Monte Carlo draws when enumeration is too large.
    pub draws: u64,
    /// Enumerate when there are at most this many assignments.
    pub max_exact: u64,
    /// One of the `RDP_STAT_*` constants.
    pub statistic: i32,
    /// Nonzero for an upper-tail test, zero for two-sided.
    pub upper_tail: i32,
}

/// Headline numbers of an [`RdpInference`]. Unbounded limits are infinite;
/// both limits are NaN when the confidence set is empty.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RdpSummary {
    pub p_null: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub hl: f64,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub ci_empty: i32,
}

/// Density test output; undefined values are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RdpDensityTest {
    pub theta: f64,
    pub se: f64,
    pub p_value: f64,
    pub bin_width: f64,
    pub bandwidth: f64,
    pub n: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::DegenerateWindow { .. } => RDP_DEGENERATE_WINDOW,
            DataError::InvalidWindow(_) => RDP_INVALID_ARGUMENT,
            _ => RDP_DATA_ERROR,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<PermError> for Failure {
    fn from(e: PermError) -> Self {
        let code = match e {
            PermError::AllTreatedOrAllControl { .. } | PermError::TooFewForRanks => RDP_DEGENERATE_WINDOW,
            PermError::NoDraws => RDP_INVALID_ARGUMENT,
            _ => RDP_COMPUTATION_ERROR,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<rdperm::inference::InferenceError> for Failure {
    fn from(e: rdperm::inference::InferenceError) -> Self {
        use rdperm::inference::InferenceError as E;
        match e {
            E::Data(d) => d.into(),
            E::Perm(p) => p.into(),
            E::InvalidGrid(_) | E::InvalidAlpha(_) => Failure::new(RDP_INVALID_ARGUMENT, e.to_string()),
            _ => Failure::new(RDP_COMPUTATION_ERROR, e.to_string()),
        }
    }
}

impl From<BalanceError> for Failure {
    fn from(e: BalanceError) -> Self {
        match e {
            BalanceError::Data(d) => d.into(),
            BalanceError::Perm(p) => p.into(),
            BalanceError::NoCovariates => Failure::new(RDP_INVALID_ARGUMENT, e.to_string()),
            _ => Failure::new(RDP_COMPUTATION_ERROR, e.to_string()),
        }
    }
}

impl From<McCraryError> for Failure {
    fn from(e: McCraryError) -> Self {
        let code = match e {
            McCraryError::EmptySide(_) | McCraryError::InsufficientBins { .. } => RDP_DEGENERATE_WINDOW,
            McCraryError::InvalidOption(_) => RDP_INVALID_ARGUMENT,
            McCraryError::Fit(_) => RDP_COMPUTATION_ERROR,
        };
        Failure::new(code, e.to_string())
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RDP_OK,
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            RDP_PANIC
        }
    }
}

fn null(what: &str) -> Failure {
    Failure::new(RDP_NULL_POINTER, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or point to `n` readable values.
unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Failure::new(RDP_INVALID_ARGUMENT, format!("{what} is not valid UTF-8")))
}

fn direction(treated_above: i32) -> Direction {
    if treated_above != 0 {
        Direction::TreatedAbove
    } else {
        Direction::TreatedAtOrBelow
    }
}

fn model(code: i32) -> Result<ModelSpec, Failure> {
    let family = match code {
        RDP_MODEL_CONSTANT => ModelFamily::Constant,
        RDP_MODEL_LINEAR => ModelFamily::Linear,
        RDP_MODEL_QUADRATIC => ModelFamily::Quadratic,
        _ => return Err(Failure::new(RDP_INVALID_ARGUMENT, format!("unknown model code {code}"))),
    };
    Ok(ModelSpec::new(family))
}

fn plan(p: &RdpPlan) -> Result<PermutationPlan, Failure> {
    let kind = match p.statistic {
        RDP_STAT_DIFF_MEANS => StatKind::DiffMeans,
        RDP_STAT_ABS_DIFF_MEANS => StatKind::AbsDiffMeans,
        RDP_STAT_SUM_CROSS => StatKind::SumCross,
        RDP_STAT_RANK_STUDENTIZED => StatKind::RankSumStudentized,
        s => {
            return Err(Failure::new(
                RDP_INVALID_ARGUMENT,
                format!("unknown statistic code {s}"),
            ))
        }
    };
    let sidedness = if p.upper_tail != 0 {
        Sidedness::UpperTail
    } else {
        Sidedness::TwoSided
    };
    Ok(PermutationPlan::new(p.seed)
        .with_draws(p.draws)
        .with_max_exact(p.max_exact)
        .with_statistic(Statistic::new(kind, sidedness)))
}

/// # Safety
/// `w` must be null or point to a valid [`RdpWindow`].
unsafe fn window(w: *const RdpWindow) -> Result<WindowSpec, Failure> {
    let Some(w) = w.as_ref() else {
        return Ok(WindowSpec::unbounded());
    };
    let values = slice(w.exclude, w.n_exclude, "window exclusions")?;
    let spec = WindowSpec::new(w.left, w.right).with_exclusions(values.iter().map(|&value| Exclusion::Value { value }));
    spec.validate()?;
    Ok(spec)
}

/// # Safety
/// `frame` must be null or a handle from this library.
unsafe fn frame_ref<'a>(frame: *const RdpFrame) -> Result<&'a UnitFrame, Failure> {
    frame.as_ref().map(|f| &f.frame).ok_or_else(|| null("frame"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn rdp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a frame from arrays of length `n`. `y` may be null.
///
/// # Safety
/// `r` (and `y` when non-null) must point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_frame_new(
    r: *const f64,
    y: *const f64,
    n: usize,
    cutoff: f64,
    treated_above: i32,
    out: *mut *mut RdpFrame,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let r = slice(r, n, "r")?.to_vec();
        let y = if y.is_null() {
            None
        } else {
            Some(slice(y, n, "y")?.to_vec())
        };
        let frame = UnitFrame::new(r, y, Vec::new(), cutoff, direction(treated_above))?;
        *out = Box::into_raw(Box::new(RdpFrame { frame }));
        Ok(())
    })
}

/// Reads a headed CSV file. `outcome` and `covariates` may be null; the
/// latter is a comma-separated list of column names.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_frame_load_csv(
    path: *const c_char,
    running: *const c_char,
    outcome: *const c_char,
    covariates: *const c_char,
    cutoff: f64,
    treated_above: i32,
    out: *mut *mut RdpFrame,
) -> i32 {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = string(path, "path")?;
        let running = string(running, "running")?;
        let outcome = if outcome.is_null() {
            None
        } else {
            Some(string(outcome, "outcome")?)
        };
        let covariates = if covariates.is_null() {
            Vec::new()
        } else {
            string(covariates, "covariates")?
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|name| rdperm::data::CovariateColumn {
                    name: name.to_string(),
                    kind: None,
                })
                .collect()
        };
        let schema = ColumnSchema {
            running,
            outcome,
            covariates,
        };
        let loaded = load_frame(&path, &schema, cutoff, direction(treated_above), false)?;
        *out = Box::into_raw(Box::new(RdpFrame { frame: loaded.frame }));
        Ok(())
    })
}

/// Adds a covariate column of length equal to the frame. `kind` is one of
/// the `RDP_COVARIATE_*` constants.
///
/// # Safety
/// `frame` must be a live handle, `name` NUL-terminated, `values` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn rdp_frame_add_covariate(
    frame: *mut RdpFrame,
    name: *const c_char,
    values: *const f64,
    n: usize,
    kind: i32,
) -> i32 {
    guard(|| {
        let handle = frame.as_mut().ok_or_else(|| null("frame"))?;
        let name = string(name, "name")?;
        let values = slice(values, n, "values")?.to_vec();
        let kind = match kind {
            RDP_COVARIATE_INFER => None,
            RDP_COVARIATE_CONTINUOUS => Some(CovariateKind::Continuous),
            RDP_COVARIATE_BINARY => Some(CovariateKind::Binary),
            k => {
                return Err(Failure::new(
                    RDP_INVALID_ARGUMENT,
                    format!("unknown covariate kind {k}"),
                ))
            }
        };
        let f = &handle.frame;
        let mut covariates = f.covariates().to_vec();
        covariates.push(Covariate::new(name, values, kind));
        let y = f.y().ok().map(<[f64]>::to_vec);
        handle.frame = UnitFrame::new(f.r().to_vec(), y, covariates, f.cutoff(), f.direction())?;
        Ok(())
    })
}

/// Number of units in the frame, or 0 for a null handle.
///
/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rdp_frame_len(frame: *const RdpFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.frame.len())
}

/// # Safety
/// `frame` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdp_frame_free(frame: *mut RdpFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Permutation p-value of the constant-effect hypothesis `tau0`.
///
/// # Safety
/// Pointers must be valid as documented on the types; `p_out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_test_effect(
    frame: *const RdpFrame,
    window: *const RdpWindow,
    model_code: i32,
    plan_in: *const RdpPlan,
    tau0: f64,
    p_out: *mut f64,
) -> i32 {
    guard(|| {
        let f = frame_ref(frame)?;
        let w = self::window(window)?;
        let m = model(model_code)?;
        let p = plan(plan_in.as_ref().ok_or_else(|| null("plan"))?)?;
        if p_out.is_null() {
            return Err(null("p_out"));
        }
        let result = test_effect(f, &w, m, EffectHypothesis::new(tau0), &p)?;
        *p_out = result.p_value;
        Ok(())
    })
}

/// Confidence interval by test inversion on the default grid, with the
/// Hodges–Lehmann estimate and the test of no effect.
///
/// # Safety
/// Pointers must be valid as documented on the types; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_invert_ci(
    frame: *const RdpFrame,
    window: *const RdpWindow,
    model_code: i32,
    plan_in: *const RdpPlan,
    alpha: f64,
    out: *mut *mut RdpInference,
) -> i32 {
    guard(|| {
        let f = frame_ref(frame)?;
        let w = self::window(window)?;
        let m = model(model_code)?;
        let p = plan(plan_in.as_ref().ok_or_else(|| null("plan"))?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = invert_ci(f, &w, m, &p, alpha, None)?;
        *out = Box::into_raw(Box::new(RdpInference { inner }));
        Ok(())
    })
}

/// # Safety
/// `inference` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_inference_summary(inference: *const RdpInference, out: *mut RdpSummary) -> i32 {
    guard(|| {
        let inf = &inference.as_ref().ok_or_else(|| null("inference"))?.inner;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let (lo, hi, empty) = match inf.ci {
            ConfidenceSet::Interval { lower, upper } => {
                (lower.unwrap_or(f64::NEG_INFINITY), upper.unwrap_or(f64::INFINITY), 0)
            }
            ConfidenceSet::Empty => (f64::NAN, f64::NAN, 1),
        };
        *out = RdpSummary {
            p_null: inf.p_null,
            ci_lower: lo,
            ci_upper: hi,
            hl: inf.hl.estimate,
            n: inf.diagnostics.n,
            n_treated: inf.diagnostics.n_treated,
            n_control: inf.diagnostics.n_control,
            ci_empty: empty,
        };
        Ok(())
    })
}

/// Full result as JSON. Release the string with [`rdp_string_free`].
///
/// # Safety
/// `inference` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_inference_json(inference: *const RdpInference, out: *mut *mut c_char) -> i32 {
    guard(|| {
        let inf = &inference.as_ref().ok_or_else(|| null("inference"))?.inner;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = serde_json::to_string(inf).map_err(|e| Failure::new(RDP_COMPUTATION_ERROR, e.to_string()))?;
        let c = CString::new(text).map_err(|e| Failure::new(RDP_COMPUTATION_ERROR, e.to_string()))?;
        *out = c.into_raw();
        Ok(())
    })
}

/// # Safety
/// `inference` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdp_inference_free(inference: *mut RdpInference) {
    if !inference.is_null() {
        drop(Box::from_raw(inference));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// `z'(I-H)y / z'(I-H)z` for the given least-squares model; `z` holds 0/1.
///
/// # Safety
/// `r`, `y` and `z` must point to `n` values; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_hl_closed_form(
    r: *const f64,
    y: *const f64,
    z: *const u8,
    n: usize,
    model_code: i32,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let r = slice(r, n, "r")?;
        let y = slice(y, n, "y")?;
        let z: Vec<bool> = slice(z, n, "z")?.iter().map(|&t| t != 0).collect();
        let m = model(model_code)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = hl_closed_form(m.family, r, y, &z)?;
        Ok(())
    })
}

/// Combined χ² p-value of the covariate balance test, with linear models
/// for continuous covariates and logistic models for binary ones.
///
/// # Safety
/// Pointers must be valid as documented on the types; `p_out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_balance_p(frame: *const RdpFrame, window: *const RdpWindow, p_out: *mut f64) -> i32 {
    guard(|| {
        let f = frame_ref(frame)?;
        let w = self::window(window)?;
        if p_out.is_null() {
            return Err(null("p_out"));
        }
        let models = default_covariate_models(f);
        let result = balance_test(f, &w, &models, None)?;
        *p_out = result.p_combined_chi2;
        Ok(())
    })
}

/// Density test at the cutoff. Nonpositive `bin_width` or `bandwidth`
/// selects the automatic choice.
///
/// # Safety
/// Pointers must be valid as documented on the types; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rdp_density_test(
    frame: *const RdpFrame,
    window: *const RdpWindow,
    bin_width: f64,
    bandwidth: f64,
    out: *mut RdpDensityTest,
) -> i32 {
    guard(|| {
        let f = frame_ref(frame)?;
        let w = self::window(window)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let options = McCraryOptions {
            bin_width: (bin_width > 0.0).then_some(bin_width),
            bandwidth: (bandwidth > 0.0).then_some(bandwidth),
            ..McCraryOptions::default()
        };
        let m = mccrary_in_window(f, &w, &options)?;
        *out = RdpDensityTest {
            theta: m.theta.unwrap_or(f64::NAN),
            se: m.se.unwrap_or(f64::NAN),
            p_value: m.p_value.unwrap_or(f64::NAN),
            bin_width: m.bin_width,
            bandwidth: m.bandwidth,
            n: m.n,
        };
        Ok(())
    })
}
