//! Choice of the analysis window: bandwidth selection by testing in order
//! against covariate balance, exclusion of likely sorters around the cutoff
//! guided by the density test, and asymmetric windows that balance the arms.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{lattice_unit, realize_window, DataError, Exclusion, UnitFrame, WindowSpec};
use crate::permute::PermutationPlan;
use crate::spectests::{balance_test, mccrary_test, BalanceError, CovariateModel, McCraryOptions, McCraryResult};

pub const DEFAULT_ALPHA_F: f64 = 0.1;
pub const DEFAULT_ALPHA_G: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WindowingError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Balance(#[from] BalanceError),
    #[error("invalid candidates: {0}")]
    InvalidCandidates(String),
    #[error("invalid step {0}; must be positive")]
    InvalidStep(f64),
    #[error("no exclusion step reached p > alpha_G after {} tests", steps.len())]
    ExhaustedWithoutPass { steps: Vec<ExclusionStep> },
}

/// Outcome of the balance test at one candidate bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub bandwidth: f64,
    /// p-value used for the decision; `None` when the candidate was skipped
    /// or not evaluated.
    pub balance_p: Option<f64>,
    pub balance_p_chi2: Option<f64>,
    pub balance_p_mc: Option<f64>,
    pub mccrary_p: Option<f64>,
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSweep {
    /// Candidates in strictly decreasing order.
    pub candidates: Vec<f64>,
    pub alpha_f: f64,
    pub alpha_g: f64,
    pub results: Vec<BandwidthResult>,
    /// Largest candidate whose hypothesis is sustained; `None` if every
    /// evaluated candidate was rejected.
    pub b_star: Option<f64>,
    /// Candidates no larger than `b_star`.
    pub plausible_set: Vec<f64>,
    /// Overall size of the specification tests, `alpha_F + alpha_G`.
    pub error_budget: f64,
}

impl BandwidthSweep {
    pub fn all_rejected(&self) -> bool {
        self.b_star.is_none()
    }

    /// CSV with columns `b,balance_p,mccrary_p,n,n_T,n_C`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("b,balance_p,mccrary_p,n,n_T,n_C\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.bandwidth,
                fmt_opt(r.balance_p),
                fmt_opt(r.mccrary_p),
                r.n,
                r.n_treated,
                r.n_control
            ));
        }
        out
    }
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub alpha_f: f64,
    pub alpha_g: f64,
    /// Evaluate every candidate rather than stopping at the first sustained one.
    pub exhaustive: bool,
    /// Decide with the permutation p-value of the combined statistic instead
    /// of the χ² approximation; requires a plan.
    pub use_permutation_p: bool,
    /// Exclusions applied inside every candidate window.
    pub exclusions: Vec<Exclusion>,
    /// Also report the density test at each candidate.
    pub mccrary: Option<McCraryOptions>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            alpha_f: DEFAULT_ALPHA_F,
            alpha_g: DEFAULT_ALPHA_G,
            exhaustive: false,
            use_permutation_p: false,
            exclusions: Vec::new(),
            mccrary: None,
        }
    }
}

/// Decreasing arithmetic grid from `b_max` in steps of the lattice unit of
/// `r`, or a hundredth of the largest symmetric bandwidth otherwise.
pub fn default_candidates(frame: &UnitFrame, b_max: Option<f64>) -> Vec<f64> {
    let c = frame.cutoff();
    let (lo, hi) = frame
        .r()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let b_max = b_max.unwrap_or((c - lo).min(hi - c));
    if !(b_max > 0.0) {
        return Vec::new();
    }
    let step = lattice_unit(frame.r()).unwrap_or(b_max / 100.0);
    let count = (b_max / step + 1e-9).floor() as usize;
    (0..count)
        .map(|k| b_max - k as f64 * step)
        .filter(|&b| b > 0.0)
        .collect()
}

fn check_candidates(candidates: &[f64]) -> Result<(), WindowingError> {
    if candidates.is_empty() {
        return Err(WindowingError::InvalidCandidates("empty list".into()));
    }
    if candidates.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(WindowingError::InvalidCandidates(
            "bandwidths must be positive and finite".into(),
        ));
    }
    if candidates.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(WindowingError::InvalidCandidates("must be strictly decreasing".into()));
    }
    Ok(())
}

/// Density test on the units of `window`, leaving out the bins its
/// exclusions touch rather than the units alone.
pub fn mccrary_in_window(
    frame: &UnitFrame,
    window: &WindowSpec,
    options: &McCraryOptions,
) -> Result<McCraryResult, crate::spectests::McCraryError> {
    let c = frame.cutoff();
    let r: Vec<f64> = frame
        .r()
        .iter()
        .copied()
        .filter(|&x| x >= c - window.left && x <= c + window.right)
        .collect();
    let mut opts = options.clone();
    opts.exclusions.extend(window.exclusions.iter().copied());
    opts.tolerance = opts.tolerance.max(window.tolerance);
    mccrary_test(&r, c, &opts)
}

fn evaluate_candidate(
    frame: &UnitFrame,
    b: f64,
    models: &[CovariateModel],
    plan: Option<&PermutationPlan>,
    options: &SweepOptions,
) -> Result<BandwidthResult, WindowingError> {
    let window = WindowSpec::symmetric(b).with_exclusions(options.exclusions.iter().copied());
    let realized = realize_window(frame, &window)?;
    let mut result = BandwidthResult {
        bandwidth: b,
        balance_p: None,
        balance_p_chi2: None,
        balance_p_mc: None,
        mccrary_p: None,
        n: realized.n,
        n_treated: realized.n_treated,
        n_control: realized.n_control,
        note: None,
    };
    if let Some(mc) = &options.mccrary {
        match mccrary_in_window(frame, &window, mc) {
            Ok(m) => result.mccrary_p = m.p_value,
            Err(e) => result.note = Some(format!("density test: {e}")),
        }
    }
    let plan = if options.use_permutation_p { plan } else { None };
    match balance_test(frame, &window, models, plan) {
        Ok(bal) => {
            result.balance_p_chi2 = Some(bal.p_combined_chi2);
            result.balance_p_mc = bal.p_combined_mc;
            result.balance_p = if options.use_permutation_p {
                bal.p_combined_mc
            } else {
                Some(bal.p_combined_chi2)
            };
        }
        Err(BalanceError::Data(DataError::DegenerateWindow { .. })) => {
            result.note = Some("skipped: fewer than 2 units in an arm".into());
        }
        Err(BalanceError::Model { name, source }) => {
            result.note = Some(format!("skipped: covariate `{name}` could not be fit ({source})"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(result)
}

/// Testing-in-order bandwidth selection.
///
/// Candidates are tested from the largest down; a hypothesis counts as
/// rejected only when every larger candidate was rejected too, so the first
/// candidate with `p > alpha_F` is `b_star` and every smaller candidate is
/// plausible. Unless `exhaustive`, testing stops there.
pub fn select_bandwidth(
    frame: &UnitFrame,
    candidates: &[f64],
    models: &[CovariateModel],
    plan: Option<&PermutationPlan>,
    options: &SweepOptions,
) -> Result<BandwidthSweep, WindowingError> {
    check_candidates(candidates)?;
    if models.is_empty() {
        return Err(BalanceError::NoCovariates.into());
    }
    let results: Vec<BandwidthResult> = if options.exhaustive {
        candidates
            .par_iter()
            .map(|&b| evaluate_candidate(frame, b, models, plan, options))
            .collect::<Result<_, _>>()?
    } else {
        let mut out = Vec::new();
        for &b in candidates {
            let r = evaluate_candidate(frame, b, models, plan, options)?;
            let sustained = r.balance_p.is_some_and(|p| p > options.alpha_f);
            out.push(r);
            if sustained {
                break;
            }
        }
        out
    };
    let b_star = results
        .iter()
        .find(|r| r.balance_p.is_some_and(|p| p > options.alpha_f))
        .map(|r| r.bandwidth);
    let plausible_set = match b_star {
        Some(b) => candidates.iter().copied().filter(|&c| c <= b).collect(),
        None => Vec::new(),
    };
    Ok(BandwidthSweep {
        candidates: candidates.to_vec(),
        alpha_f: options.alpha_f,
        alpha_g: options.alpha_g,
        results,
        b_star,
        plausible_set,
        error_budget: options.alpha_f + options.alpha_g,
    })
}

/// One density test in an exclusion sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionStep {
    pub label: String,
    pub exclusions: Vec<Exclusion>,
    pub p_value: Option<f64>,
    pub n: usize,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionSearch {
    pub window: WindowSpec,
    /// Tests in the order run; the last one passed.
    pub steps: Vec<ExclusionStep>,
    pub alpha_g: f64,
}

fn run_step(
    frame: &UnitFrame,
    base: &WindowSpec,
    extra: Vec<Exclusion>,
    label: String,
    options: &McCraryOptions,
) -> (WindowSpec, ExclusionStep) {
    let window = base.clone().with_exclusions(extra.iter().copied());
    let (p_value, n, note) = match mccrary_in_window(frame, &window, options) {
        Ok(m) => (m.p_value, m.n, m.diagnostics.first().cloned()),
        Err(e) => (None, 0, Some(e.to_string())),
    };
    let step = ExclusionStep {
        label,
        exclusions: extra,
        p_value,
        n,
        note,
    };
    (window, step)
}

/// Donut strategy: removes `[c - k, c + k]` for `k = 0, step, 2 step, ...`
/// and keeps the first window whose density test has `p > alpha_G`.
///
/// With `include_empty_first` the unmodified window is tested before `k = 0`;
/// `None` chooses it for continuous running variables and not for lattices.
/// The tests form a fixed sequence stopped at the first pass, so the chance
/// of excluding anything when no sorting occurred is at most `alpha_G`.
pub fn donut_exclusion(
    frame: &UnitFrame,
    base: &WindowSpec,
    alpha_g: f64,
    step: f64,
    options: &McCraryOptions,
    include_empty_first: Option<bool>,
) -> Result<ExclusionSearch, WindowingError> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(WindowingError::InvalidStep(step));
    }
    base.validate()?;
    let c = frame.cutoff();
    let include_empty = include_empty_first.unwrap_or_else(|| lattice_unit(frame.r()).is_none());
    let mut steps = Vec::new();
    if include_empty {
        let (window, s) = run_step(frame, base, Vec::new(), "none".into(), options);
        let pass = s.p_value.is_some_and(|p| p > alpha_g);
        steps.push(s);
        if pass {
            return Ok(ExclusionSearch { window, steps, alpha_g });
        }
    }
    let limit = base.left.min(base.right);
    let mut k_index = 0usize;
    loop {
        let k = k_index as f64 * step;
        if k > limit + 1e-12 * limit.max(1.0) {
            return Err(WindowingError::ExhaustedWithoutPass { steps });
        }
        let exclusion = if k_index == 0 {
            Exclusion::Value { value: c }
        } else {
            Exclusion::Interval { lo: c - k, hi: c + k }
        };
        let (window, s) = run_step(frame, base, vec![exclusion], format!("k={k}"), options);
        let pass = s.p_value.is_some_and(|p| p > alpha_g);
        steps.push(s);
        if pass {
            let label = format!("donut k*={k}");
            return Ok(ExclusionSearch {
                window: window.with_label(label),
                steps,
                alpha_g,
            });
        }
        k_index += 1;
    }
}

/// Surgical strategy: tests the base window, then applies the hypothesized
/// sets of running-variable values cumulatively, keeping the first window
/// whose density test has `p > alpha_G`.
pub fn surgical_exclusion(
    frame: &UnitFrame,
    base: &WindowSpec,
    hypotheses: &[Vec<f64>],
    alpha_g: f64,
    options: &McCraryOptions,
) -> Result<ExclusionSearch, WindowingError> {
    base.validate()?;
    let mut steps = Vec::new();
    let (window, s) = run_step(frame, base, Vec::new(), "none".into(), options);
    let pass = s.p_value.is_some_and(|p| p > alpha_g);
    steps.push(s);
    if pass {
        return Ok(ExclusionSearch { window, steps, alpha_g });
    }
    let mut values: Vec<f64> = Vec::new();
    for set in hypotheses {
        for &v in set {
            if !values.contains(&v) {
                values.push(v);
            }
        }
        let exclusions: Vec<Exclusion> = values.iter().map(|&value| Exclusion::Value { value }).collect();
        let label = format!(
            "exclude {{{}}}",
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
        );
        let (window, s) = run_step(frame, base, exclusions, label.clone(), options);
        let pass = s.p_value.is_some_and(|p| p > alpha_g);
        steps.push(s);
        if pass {
            return Ok(ExclusionSearch {
                window: window.with_label(format!("surgical {label}")),
                steps,
                alpha_g,
            });
        }
    }
    Err(WindowingError::ExhaustedWithoutPass { steps })
}

/// Window `[c - left, c + right]` with `right` chosen over the support above
/// the cutoff to minimize `|n_T - n_C|`; ties go to the smaller `right`.
pub fn balanced_asymmetric_window(
    frame: &UnitFrame,
    left: f64,
    exclusions: &[Exclusion],
) -> Result<WindowSpec, WindowingError> {
    if !(left >= 0.0) {
        return Err(DataError::InvalidWindow(format!("left bandwidth must be nonnegative, got {left}")).into());
    }
    let c = frame.cutoff();
    let probe = WindowSpec::new(left, 0.0).with_exclusions(exclusions.iter().copied());
    let n_below = frame.r().iter().filter(|&&x| x <= c && probe.contains(x, c)).count();
    let mut above: Vec<f64> = frame
        .r()
        .iter()
        .copied()
        .filter(|&x| x > c && !exclusions.iter().any(|e| e.matches(x, 0.0)))
        .collect();
    above.sort_by(f64::total_cmp);
    let mut best: Option<(usize, f64)> = None;
    let mut i = 0;
    while i < above.len() {
        let v = above[i];
        let mut j = i + 1;
        while j < above.len() && above[j] == v {
            j += 1;
        }
        let gap = n_below.abs_diff(j);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, v - c));
        }
        i = j;
    }
    let right = match best {
        Some((_, right)) => right,
        None => {
            return Err(DataError::DegenerateWindow {
                n_treated: n_below,
                n_control: 0,
            }
            .into())
        }
    };
    let window = WindowSpec::new(left, right).with_exclusions(exclusions.iter().copied());
    realize_window(frame, &window)?.ensure_testable()?;
    Ok(window)
}
