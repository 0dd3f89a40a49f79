//! Permutation tests: statistics, their reference distributions over uniform
//! re-assignments of treatment with `n_T` held fixed, and p-values.

pub mod assign;
mod statistic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use assign::{choose_reference, map_assignments, Reference};
pub(crate) use statistic::Prepared;
pub use statistic::{Sidedness, StatKind, Statistic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PermError {
    #[error("length mismatch: {values} values, {assignment} assignment entries")]
    LengthMismatch { values: usize, assignment: usize },
    #[error("assignment has {n_treated} treated of {n}; both arms must be non-empty")]
    AllTreatedOrAllControl { n: usize, n_treated: usize },
    #[error("rank statistic needs at least 2 units per arm")]
    TooFewForRanks,
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("Monte Carlo plan needs at least one draw")]
    NoDraws,
}

/// How a permutation reference distribution is realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationPlan {
    /// Enumerate all assignments when C(n, n_T) is at most this.
    pub max_exact: u64,
    /// Monte Carlo draws otherwise.
    pub draws: u64,
    pub seed: u64,
    pub statistic: Statistic,
}

impl PermutationPlan {
    pub const DEFAULT_MAX_EXACT: u64 = 200_000;
    pub const DEFAULT_DRAWS: u64 = 100_000;

    pub fn new(seed: u64) -> Self {
        PermutationPlan {
            max_exact: Self::DEFAULT_MAX_EXACT,
            draws: Self::DEFAULT_DRAWS,
            seed,
            statistic: Statistic::default(),
        }
    }

    pub fn with_statistic(mut self, statistic: Statistic) -> Self {
        self.statistic = statistic;
        self
    }

    pub fn with_draws(mut self, draws: u64) -> Self {
        self.draws = draws;
        self
    }

    pub fn with_max_exact(mut self, max_exact: u64) -> Self {
        self.max_exact = max_exact;
        self
    }

    pub fn reference(&self, n: usize, n_treated: usize) -> Reference {
        choose_reference(n, n_treated, self.max_exact, self.draws)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Observed value on the tested (upper-tail) scale.
    pub observed: f64,
    /// Observed signed statistic.
    pub observed_signed: f64,
    pub p_value: f64,
    pub method: Reference,
    /// Null expectation of the signed statistic.
    pub null_mean: f64,
    pub mc_stderr: Option<f64>,
    pub n: usize,
    pub n_treated: usize,
}

fn check_inputs(v: &[f64], z: &[bool], stat: &Statistic) -> Result<usize, PermError> {
    if v.len() != z.len() {
        return Err(PermError::LengthMismatch {
            values: v.len(),
            assignment: z.len(),
        });
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(PermError::NonFinite(i));
    }
    let n_t = z.iter().filter(|&&t| t).count();
    if n_t == 0 || n_t == z.len() {
        return Err(PermError::AllTreatedOrAllControl {
            n: z.len(),
            n_treated: n_t,
        });
    }
    if stat.kind == StatKind::RankSumStudentized && (n_t < 2 || z.len() - n_t < 2) {
        return Err(PermError::TooFewForRanks);
    }
    Ok(n_t)
}

/// True when `v` has no spread relative to its magnitude.
pub fn is_constant(v: &[f64]) -> bool {
    let (lo, hi, mag) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY, 0.0f64), |(a, b, m), &x| {
            (a.min(x), b.max(x), m.max(x.abs()))
        });
    hi - lo <= 1e-14 * mag
}

/// Monte Carlo p-value with the add-one convention and its standard error.
pub fn mc_p_value(count_ge: u64, draws: u64) -> (f64, f64) {
    let p = (1 + count_ge) as f64 / (1 + draws) as f64;
    let phat = count_ge as f64 / draws as f64;
    (p, (phat * (1.0 - phat) / draws as f64).sqrt())
}

/// Tail p-value from a reference distribution already evaluated.
pub(crate) fn p_from_tail_values(
    tails: impl Iterator<Item = f64>,
    observed: f64,
    tol: f64,
    reference: Reference,
) -> (f64, Option<f64>) {
    let count = tails.filter(|&t| t >= observed - tol).count() as u64;
    match reference {
        Reference::Exact { assignments } => (count as f64 / assignments as f64, None),
        Reference::MonteCarlo { draws } => {
            let (p, se) = mc_p_value(count, draws);
            (p, Some(se))
        }
    }
}

/// Permutation test of the statistic in `plan` on values `v` and observed
/// assignment `z`.
///
/// A constant value vector has a degenerate reference distribution and gets
/// `p = 1`.
pub fn permutation_test(v: &[f64], z: &[bool], plan: &PermutationPlan) -> Result<TestResult, PermError> {
    let stat = plan.statistic;
    let n_t = check_inputs(v, z, &stat)?;
    let n = v.len();
    let reference = plan.reference(n, n_t);
    if let Reference::MonteCarlo { draws: 0 } = reference {
        return Err(PermError::NoDraws);
    }
    let prepared = Prepared::new(stat, v, n_t);
    let observed_signed = prepared.raw_from_mask(z);
    let observed = prepared.tail(observed_signed);

    if is_constant(v) {
        return Ok(TestResult {
            observed,
            observed_signed,
            p_value: 1.0,
            method: reference,
            null_mean: prepared.analytic_null_mean().unwrap_or(observed_signed),
            mc_stderr: matches!(reference, Reference::MonteCarlo { .. }).then_some(0.0),
            n,
            n_treated: n_t,
        });
    }

    let raws = map_assignments(n, n_t, reference, plan.seed, vec![false; n], |idx, mask| {
        prepared.raw_from_treated(idx, mask)
    });
    let null_mean = prepared
        .analytic_null_mean()
        .unwrap_or_else(|| raws.iter().sum::<f64>() / raws.len() as f64);
    let (p_value, mc_stderr) = p_from_tail_values(
        raws.iter().map(|&r| prepared.tail(r)),
        observed,
        prepared.tie_tolerance(),
        reference,
    );
    Ok(TestResult {
        observed,
        observed_signed,
        p_value,
        method: reference,
        null_mean,
        mc_stderr,
        n,
        n_treated: n_t,
    })
}

/// Expectation of the signed statistic under uniform assignment of `n_treated`
/// of `v.len()` units: analytic for the linear statistics, otherwise by
/// enumeration or seeded Monte Carlo per `plan`.
pub fn null_expectation(
    v: &[f64],
    n_treated: usize,
    statistic: Statistic,
    plan: &PermutationPlan,
) -> Result<f64, PermError> {
    let n = v.len();
    if n_treated == 0 || n_treated >= n {
        return Err(PermError::AllTreatedOrAllControl { n, n_treated });
    }
    if statistic.kind == StatKind::RankSumStudentized && (n_treated < 2 || n - n_treated < 2) {
        return Err(PermError::TooFewForRanks);
    }
    let prepared = Prepared::new(statistic, v, n_treated);
    if let Some(m) = prepared.analytic_null_mean() {
        return Ok(m);
    }
    let reference = plan.reference(n, n_treated);
    if reference.size() == 0 {
        return Err(PermError::NoDraws);
    }
    let raws = map_assignments(n, n_treated, reference, plan.seed, vec![false; n], |idx, mask| {
        prepared.raw_from_treated(idx, mask)
    });
    Ok(raws.iter().sum::<f64>() / raws.len() as f64)
}
