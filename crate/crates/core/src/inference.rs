//! Effect inference: tests of constant-effect hypotheses, confidence
//! intervals by test inversion, and Hodges–Lehmann point estimates.
//!
//! Every hypothesis `τ ≡ c` is tested by reconstructing the control outcomes
//! `y - c z`, refitting the outcome model to them, and permuting treatment
//! against the resulting residuals.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{testable_window, DataError, RealizedWindow, UnitFrame, WindowSpec};
use crate::models::{self, ModelError, ModelFamily, ModelSpec, ResidualMaker, ResponseTransform};
use crate::permute::{
    self, map_assignments, null_expectation, p_from_tail_values, PermError, PermutationPlan, Prepared, Reference,
    StatKind, Statistic, TestResult,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid level alpha = {0}")]
    InvalidAlpha(f64),
    #[error("estimating equation has no sign change on [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },
    #[error("treatment indicator lies in the span of the outcome model; effect not identified")]
    NotIdentified,
}

/// A constant additive effect hypothesis `τ_i ≡ tau0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectHypothesis {
    pub tau0: f64,
}

impl EffectHypothesis {
    pub fn new(tau0: f64) -> Self {
        EffectHypothesis { tau0 }
    }

    /// Control outcomes implied by the hypothesis.
    pub fn reconstruct(&self, y: &[f64], z: &[bool]) -> Vec<f64> {
        reconstruct_with(y, z, |_| self.tau0, None)
    }
}

/// Reconstructs `y_i - z_i g(r_i)` for a deterministic effect function `g`.
/// `r` may be omitted when `g` ignores it.
pub fn reconstruct_with(y: &[f64], z: &[bool], g: impl Fn(f64) -> f64, r: Option<&[f64]>) -> Vec<f64> {
    y.iter()
        .zip(z)
        .enumerate()
        .map(|(i, (&yi, &zi))| if zi { yi - g(r.map_or(0.0, |r| r[i])) } else { yi })
        .collect()
}

/// Units of one analysis window, extracted from a frame.
#[derive(Debug, Clone)]
pub struct WindowSample {
    pub r: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<bool>,
    pub realized: RealizedWindow,
}

impl WindowSample {
    pub fn new(frame: &UnitFrame, window: &WindowSpec) -> Result<Self, InferenceError> {
        let realized = testable_window(frame, window)?;
        let y = frame.y()?;
        let idx = &realized.indices;
        Ok(WindowSample {
            r: idx.iter().map(|&i| frame.r()[i]).collect(),
            y: idx.iter().map(|&i| y[i]).collect(),
            z: idx.iter().map(|&i| frame.z()[i]).collect(),
            realized,
        })
    }

    pub fn from_vectors(r: Vec<f64>, y: Vec<f64>, z: Vec<bool>) -> Result<Self, InferenceError> {
        if r.len() != y.len() || r.len() != z.len() {
            return Err(DataError::LengthMismatch {
                column: "outcome/assignment".into(),
                expected: r.len(),
                found: y.len().min(z.len()),
            }
            .into());
        }
        let n_treated = z.iter().filter(|&&t| t).count();
        let realized = RealizedWindow {
            indices: (0..r.len()).collect(),
            n: r.len(),
            n_treated,
            n_control: r.len() - n_treated,
        };
        realized.ensure_testable()?;
        Ok(WindowSample { r, y, z, realized })
    }

    pub fn n_treated(&self) -> usize {
        self.realized.n_treated
    }

    pub fn n_control(&self) -> usize {
        self.realized.n_control
    }

    fn z_f64(&self) -> Vec<f64> {
        self.z.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect()
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Residuals at rounding level relative to the response are exact zeros.
fn snap_residuals(residuals: &mut [f64], response: &[f64]) {
    if max_abs(residuals) <= 1e-10 * max_abs(response) {
        residuals.iter_mut().for_each(|e| *e = 0.0);
    }
}

/// Residuals of the freshly refit outcome model under hypothesis `tau0`.
pub fn hypothesis_residuals(sample: &WindowSample, model: ModelSpec, tau0: f64) -> Result<Vec<f64>, InferenceError> {
    let ytilde = EffectHypothesis::new(tau0).reconstruct(&sample.y, &sample.z);
    residualize_reconstructed(&sample.r, &ytilde, model)
}

/// Fits `model` to reconstructed control outcomes and returns the residuals.
pub fn residualize_reconstructed(r: &[f64], ytilde: &[f64], model: ModelSpec) -> Result<Vec<f64>, InferenceError> {
    let fitted = models::fit(model, r, ytilde, None)?;
    let mut e = fitted.residuals;
    let scale_ref = models::transform_response(&model, ytilde)?;
    snap_residuals(&mut e, &scale_ref);
    Ok(e)
}

/// Tests `H: τ ≡ tau0` on a window sample.
pub fn test_effect_on(
    sample: &WindowSample,
    model: ModelSpec,
    tau0: f64,
    plan: &PermutationPlan,
) -> Result<TestResult, InferenceError> {
    let e = hypothesis_residuals(sample, model, tau0)?;
    Ok(permute::permutation_test(&e, &sample.z, plan)?)
}

/// Tests `H: τ ≡ hyp.tau0` inside `window`: reconstruct, refit, residualize,
/// permute. `tau0 = 0` is the test of no effect on the observed outcomes.
pub fn test_effect(
    frame: &UnitFrame,
    window: &WindowSpec,
    model: ModelSpec,
    hyp: EffectHypothesis,
    plan: &PermutationPlan,
) -> Result<TestResult, InferenceError> {
    let sample = WindowSample::new(frame, window)?;
    test_effect_on(&sample, model, hyp.tau0, plan)
}

/// Evenly spaced hypotheses `lo, lo + step, ...` up to `hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl GridSpec {
    pub fn validate(&self) -> Result<(), InferenceError> {
        if !(self.step > 0.0) || !self.lo.is_finite() || !self.hi.is_finite() || self.hi < self.lo {
            return Err(InferenceError::InvalidGrid(format!(
                "need finite lo <= hi and step > 0 (lo={}, hi={}, step={})",
                self.lo, self.hi, self.step
            )));
        }
        if (self.hi - self.lo) / self.step > 1e7 {
            return Err(InferenceError::InvalidGrid("more than 10^7 grid points".into()));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1;
        (0..count).map(|k| self.lo + k as f64 * self.step).collect()
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Points per side of the default grid center.
const DEFAULT_HALF_POINTS: usize = 100;
/// Default grid half-width in units of the rough standard error.
const DEFAULT_HALF_WIDTH_SE: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub tau: f64,
    pub p_value: f64,
}

/// Confidence set obtained by inverting the grid of tests. `None` endpoints
/// are unbounded: the grid edge itself was not rejected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConfidenceSet {
    Interval { lower: Option<f64>, upper: Option<f64> },
    Empty,
}

impl ConfidenceSet {
    pub fn covers(&self, tau: f64) -> bool {
        match *self {
            ConfidenceSet::Interval { lower, upper } => {
                lower.is_none_or(|l| l <= tau) && upper.is_none_or(|u| tau <= u)
            }
            ConfidenceSet::Empty => false,
        }
    }

    pub fn bounds(&self) -> Option<(Option<f64>, Option<f64>)> {
        match *self {
            ConfidenceSet::Interval { lower, upper } => Some((lower, upper)),
            ConfidenceSet::Empty => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, ConfidenceSet::Empty)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum HlMethod {
    /// Root of the linear estimating equation `z'(I-H)(y - τz) = 0`.
    ClosedForm,
    /// Midpoint of the bracket `[sup{c: t > E}, inf{c: t < E}]`.
    Bisection { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HlEstimate {
    pub estimate: f64,
    #[serde(flatten)]
    pub method: HlMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n: usize,
    pub n_treated: usize,
    pub n_control: usize,
    pub model: ModelSpec,
    pub statistic: Statistic,
    pub plan: PermutationPlan,
    pub reference: Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectInference {
    pub p_null: f64,
    pub null_test: TestResult,
    pub ci: ConfidenceSet,
    pub hl: HlEstimate,
    pub alpha: f64,
    pub grid_spec: GridSpec,
    pub grid: Vec<GridPoint>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
}

fn hl_closed_form_applies(model: ModelSpec, stat: Statistic) -> bool {
    model.family.is_least_squares()
        && model.transform == ResponseTransform::Identity
        && matches!(stat.signed().kind, StatKind::DiffMeans | StatKind::SumCross)
}

/// `z'(I-H)y / z'(I-H)z` for a least-squares outcome model.
pub fn hl_closed_form(family: ModelFamily, r: &[f64], y: &[f64], z: &[bool]) -> Result<f64, InferenceError> {
    let n_t = z.iter().filter(|&&t| t).count();
    if n_t == 0 || n_t == z.len() {
        return Err(PermError::AllTreatedOrAllControl {
            n: z.len(),
            n_treated: n_t,
        }
        .into());
    }
    let maker = ResidualMaker::new(family, r, None)?;
    let zf: Vec<f64> = z.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let ey = maker.apply(y)?;
    let ez = maker.apply(&zf)?;
    let num: f64 = zf.iter().zip(&ey).map(|(a, b)| a * b).sum();
    let den: f64 = zf.iter().zip(&ez).map(|(a, b)| a * b).sum();
    if den <= 1e-12 * n_t as f64 {
        return Err(InferenceError::NotIdentified);
    }
    Ok(num / den)
}

/// Estimating function `c ↦ t(e(c)) - E T(e(c))` for the signed statistic.
fn estimating_function(
    sample: &WindowSample,
    model: ModelSpec,
    plan: &PermutationPlan,
    c: f64,
) -> Result<(f64, f64), InferenceError> {
    let stat = plan.statistic.signed();
    let e = hypothesis_residuals(sample, model, c)?;
    let prepared = Prepared::new(stat, &e, sample.n_treated());
    let t = prepared.raw_from_mask(&sample.z);
    let expected = null_expectation(&e, sample.n_treated(), stat, plan)?;
    Ok((t - expected, prepared.tie_tolerance()))
}

/// Rough standard error of a difference in means of the residuals at `tau`:
/// scaled MAD times `sqrt(1/n_T + 1/n_C)`.
fn rough_scale(sample: &WindowSample, model: ModelSpec, tau: f64) -> Result<f64, InferenceError> {
    let e = hypothesis_residuals(sample, model, tau)?;
    let mut abs_dev: Vec<f64> = {
        let mut sorted = e.clone();
        sorted.sort_by(f64::total_cmp);
        let med = median_sorted(&sorted);
        e.iter().map(|x| (x - med).abs()).collect()
    };
    abs_dev.sort_by(f64::total_cmp);
    let mad = 1.4826 * median_sorted(&abs_dev);
    let harmonic = (1.0 / sample.n_treated() as f64 + 1.0 / sample.n_control() as f64).sqrt();
    let s = mad * harmonic / effect_slope(sample, model);
    if s > 0.0 && s.is_finite() {
        Ok(s)
    } else {
        // noise-free data: any positive scale works, the set collapses
        Ok(1e-3 * tau.abs().max(1.0))
    }
}

/// Change in the residual mean difference per unit of `τ`: the treated minus
/// control mean of the residualized treatment indicator. It is 1 for the
/// constant model and shrinks as the outcome model absorbs the assignment.
fn effect_slope(sample: &WindowSample, model: ModelSpec) -> f64 {
    if model.family.degree().is_none() {
        return 1.0;
    }
    let zf: Vec<f64> = sample.z.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
    let spec = ModelSpec::new(model.family);
    let Ok(b) = residualize_reconstructed(&sample.r, &zf, spec) else {
        return 1.0;
    };
    let (mut st, mut sc) = (0.0, 0.0);
    for (bi, &t) in b.iter().zip(&sample.z) {
        if t {
            st += bi;
        } else {
            sc += bi;
        }
    }
    let d = st / sample.n_treated() as f64 - sc / sample.n_control() as f64;
    if d.is_finite() && d > 1e-6 {
        d
    } else {
        1.0
    }
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Bracket used to start the HL search when no grid is given.
fn initial_bracket(sample: &WindowSample, model: ModelSpec) -> Result<(f64, f64), InferenceError> {
    let center = match model.family.degree() {
        Some(_) => hl_closed_form(model.family, &sample.r, &sample.y, &sample.z).unwrap_or(0.0),
        None => 0.0,
    };
    let s = rough_scale(sample, model, center)?;
    Ok((center - DEFAULT_HALF_WIDTH_SE * s, center + DEFAULT_HALF_WIDTH_SE * s))
}

/// Hodges–Lehmann estimate on a window sample.
pub fn hl_estimate_on(
    sample: &WindowSample,
    model: ModelSpec,
    plan: &PermutationPlan,
    bracket: Option<(f64, f64)>,
) -> Result<HlEstimate, InferenceError> {
    if hl_closed_form_applies(model, plan.statistic) {
        let estimate = hl_closed_form(model.family, &sample.r, &sample.y, &sample.z)?;
        return Ok(HlEstimate {
            estimate,
            method: HlMethod::ClosedForm,
        });
    }
    let (lo0, hi0) = match bracket {
        Some(b) => b,
        None => initial_bracket(sample, model)?,
    };
    let g = |c: f64| estimating_function(sample, model, plan, c);
    let positive = |c: f64| -> Result<bool, InferenceError> {
        let (v, tol) = g(c)?;
        Ok(v > tol)
    };
    let negative = |c: f64| -> Result<bool, InferenceError> {
        let (v, tol) = g(c)?;
        Ok(v < -tol)
    };
    let center = 0.5 * (lo0 + hi0);
    let base = (hi0 - lo0).max(1e-9);
    let mut half = 0.5 * base;
    let (mut lo, mut hi);
    loop {
        lo = center - half;
        hi = center + half;
        if positive(lo)? && negative(hi)? {
            break;
        }
        if 2.0 * half >= 64.0 * base {
            return Err(InferenceError::NoSignChange { lo, hi });
        }
        half *= 2.0;
    }
    const TOL: f64 = 1e-6;
    // sup{c: g(c) > 0}
    let (mut a, mut b) = (lo, hi);
    while b - a > TOL {
        let m = 0.5 * (a + b);
        if positive(m)? {
            a = m;
        } else {
            b = m;
        }
    }
    let lower = 0.5 * (a + b);
    // inf{c: g(c) < 0}
    let (mut a, mut b) = (lo, hi);
    while b - a > TOL {
        let m = 0.5 * (a + b);
        if negative(m)? {
            b = m;
        } else {
            a = m;
        }
    }
    let upper = 0.5 * (a + b);
    Ok(HlEstimate {
        estimate: 0.5 * (lower + upper),
        method: HlMethod::Bisection { lower, upper },
    })
}

/// Hodges–Lehmann estimate of a constant effect inside `window`.
pub fn hl_estimate(
    frame: &UnitFrame,
    window: &WindowSpec,
    model: ModelSpec,
    plan: &PermutationPlan,
) -> Result<HlEstimate, InferenceError> {
    let sample = WindowSample::new(frame, window)?;
    hl_estimate_on(&sample, model, plan, None)
}

/// Per-draw treated sums of `(I-H)y` and `(I-H)z`; with a linear statistic
/// these determine the permutation distribution at every hypothesis.
struct DrawBank {
    a: Vec<f64>,
    b: Vec<f64>,
    sums: Vec<(f64, f64)>,
    reference: Reference,
}

impl DrawBank {
    fn new(sample: &WindowSample, family: ModelFamily, plan: &PermutationPlan) -> Result<Self, InferenceError> {
        let maker = ResidualMaker::new(family, &sample.r, None)?;
        let a = maker.apply(&sample.y)?;
        let b = maker.apply(&sample.z_f64())?;
        let n = a.len();
        let n_t = sample.n_treated();
        let reference = plan.reference(n, n_t);
        if reference.size() == 0 {
            return Err(PermError::NoDraws.into());
        }
        let sums = map_assignments(n, n_t, reference, plan.seed, (), |idx, _| {
            idx.iter().fold((0.0, 0.0), |(sa, sb), &i| (sa + a[i], sb + b[i]))
        });
        Ok(DrawBank { a, b, sums, reference })
    }

    /// p-value of `H: τ ≡ tau` from the bank; agrees with `test_effect_on`.
    fn p_value(&self, sample: &WindowSample, stat: Statistic, tau: f64) -> f64 {
        let mut e: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a - tau * b).collect();
        let ytilde = EffectHypothesis::new(tau).reconstruct(&sample.y, &sample.z);
        snap_residuals(&mut e, &ytilde);
        if permute::is_constant(&e) {
            return 1.0;
        }
        let n_t = sample.n_treated();
        let prepared = Prepared::new(stat, &e, n_t);
        let observed = prepared.tail(prepared.raw_from_mask(&sample.z));
        let n = e.len() as f64;
        let total: f64 = e.iter().sum();
        let signed = |s_t: f64| match stat.kind {
            StatKind::SumCross => s_t,
            _ => s_t / n_t as f64 - (total - s_t) / (n - n_t as f64),
        };
        let tails = self.sums.iter().map(|&(sa, sb)| prepared.tail(signed(sa - tau * sb)));
        p_from_tail_values(tails, observed, prepared.tie_tolerance(), self.reference).0
    }
}

fn grid_p_values(
    sample: &WindowSample,
    model: ModelSpec,
    plan: &PermutationPlan,
    taus: &[f64],
) -> Result<Vec<f64>, InferenceError> {
    let fast =
        model.family.is_least_squares() && model.transform == ResponseTransform::Identity && plan.statistic.is_linear();
    if fast {
        let bank = DrawBank::new(sample, model.family, plan)?;
        Ok(taus
            .par_iter()
            .map(|&t| bank.p_value(sample, plan.statistic, t))
            .collect())
    } else {
        taus.par_iter()
            .map(|&t| test_effect_on(sample, model, t, plan).map(|r| r.p_value))
            .collect()
    }
}

/// Confidence set for a constant effect by inverting tests over a grid, with
/// the Hodges–Lehmann estimate and the test of no effect.
///
/// The same permutation seed is used at every grid point. Without a grid, one
/// is centered at the HL estimate with half-width six rough standard errors
/// and 201 points.
pub fn invert_ci(
    frame: &UnitFrame,
    window: &WindowSpec,
    model: ModelSpec,
    plan: &PermutationPlan,
    alpha: f64,
    grid: Option<GridSpec>,
) -> Result<EffectInference, InferenceError> {
    let sample = WindowSample::new(frame, window)?;
    invert_ci_on(&sample, model, plan, alpha, grid)
}

pub fn invert_ci_on(
    sample: &WindowSample,
    model: ModelSpec,
    plan: &PermutationPlan,
    alpha: f64,
    grid: Option<GridSpec>,
) -> Result<EffectInference, InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidAlpha(alpha));
    }
    if let Some(g) = &grid {
        g.validate()?;
    }
    let mut warnings = Vec::new();
    let null_test = test_effect_on(sample, model, 0.0, plan)?;
    let hl = hl_estimate_on(sample, model, plan, grid.map(|g| (g.lo, g.hi)))?;
    let grid_spec = match grid {
        Some(g) => g,
        None => {
            let s = rough_scale(sample, model, hl.estimate)?;
            let step = DEFAULT_HALF_WIDTH_SE * s / DEFAULT_HALF_POINTS as f64;
            GridSpec {
                lo: hl.estimate - DEFAULT_HALF_POINTS as f64 * step,
                hi: hl.estimate + DEFAULT_HALF_POINTS as f64 * step,
                step,
            }
        }
    };
    let taus = grid_spec.points();
    let ps = grid_p_values(sample, model, plan, &taus)?;
    let grid_points: Vec<GridPoint> = taus
        .iter()
        .zip(&ps)
        .map(|(&tau, &p_value)| GridPoint { tau, p_value })
        .collect();

    let kept: Vec<usize> = (0..ps.len()).filter(|&k| ps[k] >= alpha).collect();
    let ci = match (kept.first(), kept.last()) {
        (Some(&first), Some(&last)) => {
            let half = 0.5 * grid_spec.step;
            let lower = if first == 0 {
                warnings.push(format!(
                    "lower grid edge {} not rejected; lower limit unbounded, widen the grid below",
                    taus[0]
                ));
                None
            } else {
                Some(taus[first] - half)
            };
            let upper = if last == taus.len() - 1 {
                warnings.push(format!(
                    "upper grid edge {} not rejected; upper limit unbounded, widen the grid above",
                    taus[last]
                ));
                None
            } else {
                Some(taus[last] + half)
            };
            ConfidenceSet::Interval { lower, upper }
        }
        _ => {
            warnings.push("EmptyConfidenceSet: every grid hypothesis was rejected".into());
            ConfidenceSet::Empty
        }
    };
    if let Some(msg) = unimodality_warning(&grid_points, null_test.mc_stderr) {
        warnings.push(msg);
    }
    if let ConfidenceSet::Interval {
        lower: Some(l),
        upper: Some(u),
    } = ci
    {
        if hl.estimate < l || hl.estimate > u {
            warnings.push(format!(
                "HL estimate {} lies outside the confidence interval",
                hl.estimate
            ));
        }
    }
    let reference = plan.reference(sample.realized.n, sample.n_treated());
    Ok(EffectInference {
        p_null: null_test.p_value,
        null_test,
        ci,
        hl,
        alpha,
        grid_spec,
        grid: grid_points,
        diagnostics: Diagnostics {
            n: sample.realized.n,
            n_treated: sample.n_treated(),
            n_control: sample.n_control(),
            model,
            statistic: plan.statistic,
            plan: *plan,
            reference,
        },
        warnings,
    })
}

fn unimodality_warning(grid: &[GridPoint], mc_stderr: Option<f64>) -> Option<String> {
    let slack = mc_stderr.map_or(1e-12, |_| {
        grid.iter()
            .map(|g| 4.0 * (g.p_value * (1.0 - g.p_value)).sqrt())
            .fold(0.0, f64::max)
            * 0.01
            + 0.01
    });
    let peak = grid
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.p_value.total_cmp(&b.1.p_value))?
        .0;
    let rising = grid[..=peak].windows(2).all(|w| w[1].p_value + slack >= w[0].p_value);
    let falling = grid[peak..].windows(2).all(|w| w[1].p_value <= w[0].p_value + slack);
    (!(rising && falling))
        .then(|| "p-values along the grid are not unimodal; the confidence set may not be an interval".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Direction;
    use crate::permute::Sidedness;

    fn linear_frame(n: usize, effect: f64, noise: impl Fn(usize) -> f64) -> UnitFrame {
        let r: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let y: Vec<f64> = r
            .iter()
            .enumerate()
            .map(|(i, &x)| 2.0 + 3.0 * x + if x <= 0.0 { effect } else { 0.0 } + noise(i))
            .collect();
        UnitFrame::new(r, Some(y), vec![], 0.0, Direction::TreatedAtOrBelow).unwrap()
    }

    fn plan() -> PermutationPlan {
        PermutationPlan::new(11).with_draws(2000)
    }

    #[test]
    fn noise_free_no_effect_gives_p_one() {
        let f = linear_frame(30, 0.0, |_| 0.0);
        let r = test_effect(
            &f,
            &WindowSpec::unbounded(),
            ModelSpec::new(ModelFamily::Linear),
            EffectHypothesis::new(0.0),
            &plan(),
        )
        .unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn true_effect_reconstruction_gives_p_one() {
        let f = linear_frame(30, 0.5, |_| 0.0);
        let r = test_effect(
            &f,
            &WindowSpec::unbounded(),
            ModelSpec::new(ModelFamily::Linear),
            EffectHypothesis::new(0.5),
            &plan(),
        )
        .unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn noise_free_ci_collapses_to_one_step() {
        let f = linear_frame(40, 0.5, |_| 0.0);
        let grid = GridSpec {
            lo: 0.0,
            hi: 1.0,
            step: 0.01,
        };
        let inf = invert_ci(
            &f,
            &WindowSpec::unbounded(),
            ModelSpec::new(ModelFamily::Linear),
            &plan(),
            0.05,
            Some(grid),
        )
        .unwrap();
        let (lo, hi) = inf.ci.bounds().unwrap();
        assert!((lo.unwrap() - 0.495).abs() < 1e-9, "{:?}", inf.ci);
        assert!((hi.unwrap() - 0.505).abs() < 1e-9);
        assert!((inf.hl.estimate - 0.5).abs() < 1e-9);
    }

    #[test]
    fn closed_form_recovers_noise_free_effect() {
        let r: Vec<f64> = (0..25).map(|i| -0.6 + i as f64 * 0.05).collect();
        let z: Vec<bool> = r.iter().map(|&x| x <= 0.0).collect();
        let y: Vec<f64> = r
            .iter()
            .zip(&z)
            .map(|(&x, &t)| 1.0 + 2.0 * x + if t { 0.7 } else { 0.0 })
            .collect();
        let tau = hl_closed_form(ModelFamily::Linear, &r, &y, &z).unwrap();
        assert!((tau - 0.7).abs() < 1e-9);
    }

    #[test]
    fn constant_model_diff_means_is_mean_difference() {
        let f = linear_frame(24, 0.3, |i| ((i * 37) % 11) as f64 / 7.0);
        let sample = WindowSample::new(&f, &WindowSpec::unbounded()).unwrap();
        let est = hl_estimate_on(&sample, ModelSpec::new(ModelFamily::Constant), &plan(), None).unwrap();
        let (mut st, mut nt, mut sc, mut nc) = (0.0, 0.0, 0.0, 0.0);
        for (y, &t) in sample.y.iter().zip(&sample.z) {
            if t {
                st += y;
                nt += 1.0;
            } else {
                sc += y;
                nc += 1.0;
            }
        }
        assert!((est.estimate - (st / nt - sc / nc)).abs() < 1e-10);
    }

    #[test]
    fn rank_statistic_hl_by_bisection() {
        let f = linear_frame(40, 0.8, |i| ((i * 53) % 17) as f64 / 17.0 - 0.5);
        let p = plan()
            .with_draws(400)
            .with_statistic(Statistic::new(StatKind::RankSumStudentized, Sidedness::TwoSided));
        let est = hl_estimate(&f, &WindowSpec::unbounded(), ModelSpec::new(ModelFamily::Linear), &p).unwrap();
        assert!(matches!(est.method, HlMethod::Bisection { .. }));
        if let HlMethod::Bisection { lower, upper } = est.method {
            assert!(lower <= upper + 1e-6);
        }
        assert!((est.estimate - 0.8).abs() < 0.5, "{est:?}");
    }

    #[test]
    fn invalid_grid_and_alpha() {
        let f = linear_frame(20, 0.0, |i| i as f64 % 3.0);
        let w = WindowSpec::unbounded();
        let m = ModelSpec::new(ModelFamily::Linear);
        assert!(matches!(
            invert_ci(
                &f,
                &w,
                m,
                &plan(),
                0.05,
                Some(GridSpec {
                    lo: 0.0,
                    hi: 1.0,
                    step: 0.0
                })
            ),
            Err(InferenceError::InvalidGrid(_))
        ));
        assert!(matches!(
            invert_ci(&f, &w, m, &plan(), 1.5, None),
            Err(InferenceError::InvalidAlpha(_))
        ));
    }

    #[test]
    fn empty_confidence_set_is_reported() {
        let f = linear_frame(60, 2.0, |i| ((i * 29) % 13) as f64 / 26.0);
        let grid = GridSpec {
            lo: -3.0,
            hi: -2.0,
            step: 0.5,
        };
        let inf = invert_ci(
            &f,
            &WindowSpec::unbounded(),
            ModelSpec::new(ModelFamily::Linear),
            &plan(),
            0.05,
            Some(grid),
        )
        .unwrap();
        assert!(inf.ci.is_empty());
        assert!(inf.warnings.iter().any(|w| w.contains("EmptyConfidenceSet")));
    }
}
