//! Covariate balance on residualized covariates, combined across covariates
//! in a single quadratic form.
//!
//! Each covariate is residualized on the running variable with its own
//! model. The vector `d` of treated-minus-control mean residuals has
//! randomization covariance `n / (n_T n_C) S` under uniform assignment, where
//! `S` is the sample covariance of the residuals; `d' Σ⁺ d` is referred to a
//! χ² distribution and, optionally, to its permutation distribution.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::data::{testable_window, CovariateKind, DataError, UnitFrame, WindowSpec};
use crate::models::{self, ModelError, ModelFamily, ModelSpec};
use crate::permute::{self, map_assignments, p_from_tail_values, PermError, PermutationPlan, Reference};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const PINV_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("no covariates to test")]
    NoCovariates,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("covariate `{name}`: {source}")]
    Model { name: String, source: ModelError },
    #[error(transparent)]
    Perm(#[from] PermError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateModel {
    pub name: String,
    pub spec: ModelSpec,
}

impl CovariateModel {
    pub fn new(name: impl Into<String>, spec: ModelSpec) -> Self {
        CovariateModel {
            name: name.into(),
            spec,
        }
    }
}

/// Linear models for continuous covariates, logistic for binary ones.
pub fn default_covariate_models(frame: &UnitFrame) -> Vec<CovariateModel> {
    frame
        .covariates()
        .iter()
        .map(|c| {
            let family = match c.kind {
                CovariateKind::Continuous => ModelFamily::Linear,
                CovariateKind::Binary => ModelFamily::LogisticLinear,
            };
            CovariateModel::new(c.name.clone(), ModelSpec::new(family))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub name: String,
    pub model: ModelSpec,
    /// Mean residual difference over the residual standard deviation.
    pub std_diff: f64,
    /// Two-sided Normal p-value of the residual mean difference.
    pub p_value: f64,
    /// Set when the covariate had no variation and was left out.
    pub dropped: bool,
    pub fallback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub per_covariate: Vec<CovariateBalance>,
    pub combined_stat: f64,
    pub df: usize,
    pub p_combined_chi2: f64,
    pub p_combined_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    pub warnings: Vec<String>,
}

/// Balance test of `models` inside `window`. A Monte Carlo or exact
/// permutation p-value of the combined statistic is added when `plan` is
/// given.
pub fn balance_test(
    frame: &UnitFrame,
    window: &WindowSpec,
    models: &[CovariateModel],
    plan: Option<&PermutationPlan>,
) -> Result<BalanceResult, BalanceError> {
    if models.is_empty() {
        return Err(BalanceError::NoCovariates);
    }
    let realized = testable_window(frame, window)?;
    let idx = &realized.indices;
    let r: Vec<f64> = idx.iter().map(|&i| frame.r()[i]).collect();
    let z: Vec<bool> = idx.iter().map(|&i| frame.z()[i]).collect();
    let mut columns = Vec::with_capacity(models.len());
    for m in models {
        let cov = frame.covariate(&m.name)?;
        columns.push(idx.iter().map(|&i| cov.values[i]).collect::<Vec<f64>>());
    }
    balance_on(&r, &z, models, &columns, plan)
}

/// Balance test on window-level vectors; `columns[j]` holds covariate `j`.
pub fn balance_on(
    r: &[f64],
    z: &[bool],
    models: &[CovariateModel],
    columns: &[Vec<f64>],
    plan: Option<&PermutationPlan>,
) -> Result<BalanceResult, BalanceError> {
    if models.is_empty() {
        return Err(BalanceError::NoCovariates);
    }
    let n = z.len();
    let n_t = z.iter().filter(|&&t| t).count();
    let n_c = n - n_t;
    if n_t < 2 || n_c < 2 {
        return Err(DataError::DegenerateWindow {
            n_treated: n_t,
            n_control: n_c,
        }
        .into());
    }
    let mut warnings = Vec::new();
    let mut per_covariate = Vec::with_capacity(models.len());
    let mut residuals: Vec<Vec<f64>> = Vec::new();
    let scale = n as f64 / (n_t as f64 * n_c as f64);
    let normal = Normal::standard();

    for (m, x) in models.iter().zip(columns) {
        if permute::is_constant(x) {
            warnings.push(format!(
                "covariate `{}` is constant in the window and was dropped",
                m.name
            ));
            per_covariate.push(CovariateBalance {
                name: m.name.clone(),
                model: m.spec,
                std_diff: 0.0,
                p_value: 1.0,
                dropped: true,
                fallback: None,
            });
            continue;
        }
        let fitted = models::fit_with_fallback(m.spec, r, x, None).map_err(|source| BalanceError::Model {
            name: m.name.clone(),
            source,
        })?;
        if let Some(msg) = &fitted.fallback {
            warnings.push(format!("covariate `{}`: {msg}", m.name));
        }
        let e = fitted.residuals;
        let d = mean_difference(&e, z, n_t);
        let var = sample_variance(&e);
        let (std_diff, p_value) = if var > 0.0 {
            let zstat = d / (scale * var).sqrt();
            (d / var.sqrt(), (2.0 * normal.sf(zstat.abs())).min(1.0))
        } else {
            (0.0, 1.0)
        };
        per_covariate.push(CovariateBalance {
            name: m.name.clone(),
            model: m.spec,
            std_diff,
            p_value,
            dropped: false,
            fallback: fitted.fallback,
        });
        residuals.push(e);
    }

    let k = residuals.len();
    if k == 0 {
        return Ok(BalanceResult {
            per_covariate,
            combined_stat: 0.0,
            df: 0,
            p_combined_chi2: 1.0,
            p_combined_mc: plan.map(|_| 1.0),
            mc_stderr: None,
            n_treated: n_t,
            n_control: n_c,
            warnings,
        });
    }

    // whitened residuals: u_i = Λ^(-1/2) U' (e_i - ē) over the kept eigenpairs
    let cov = covariance(&residuals);
    let eig = SymmetricEigen::new(cov * scale);
    let max_eig = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let kept: Vec<usize> = (0..k)
        .filter(|&j| eig.eigenvalues[j] > PINV_TOLERANCE * max_eig)
        .collect();
    let df = kept.len();
    if df < k {
        warnings.push(format!(
            "residual covariance has rank {df} < {k}; combined statistic uses its pseudo-inverse"
        ));
    }
    let whitened: Vec<Vec<f64>> = kept
        .iter()
        .map(|&j| {
            let vec = eig.eigenvectors.column(j);
            let inv_sqrt = 1.0 / eig.eigenvalues[j].sqrt();
            (0..n)
                .map(|i| inv_sqrt * (0..k).map(|c| vec[c] * residuals[c][i]).sum::<f64>())
                .collect()
        })
        .collect();
    let totals: Vec<f64> = whitened.iter().map(|u| u.iter().sum()).collect();
    let quad_form = |treated_sums: &[f64]| -> f64 {
        treated_sums
            .iter()
            .zip(&totals)
            .map(|(&st, &tot)| {
                let d = st / n_t as f64 - (tot - st) / n_c as f64;
                d * d
            })
            .sum()
    };
    let observed_sums: Vec<f64> = whitened
        .iter()
        .map(|u| u.iter().zip(z).filter(|(_, &t)| t).map(|(x, _)| x).sum())
        .collect();
    let combined_stat = if df == 0 { 0.0 } else { quad_form(&observed_sums) };
    let p_combined_chi2 = if df == 0 {
        1.0
    } else {
        ChiSquared::new(df as f64)
            .map(|c| c.sf(combined_stat))
            .unwrap_or(f64::NAN)
    };

    let (p_combined_mc, mc_stderr) = match plan {
        Some(plan) if df > 0 => {
            let reference = plan.reference(n, n_t);
            if reference.size() == 0 {
                return Err(PermError::NoDraws.into());
            }
            let stats = map_assignments(n, n_t, reference, plan.seed, vec![0.0; df], |treated, sums| {
                for (s, u) in sums.iter_mut().zip(&whitened) {
                    *s = treated.iter().map(|&i| u[i]).sum();
                }
                quad_form(sums)
            });
            let tol = 1e-9 * combined_stat.max(df as f64);
            let (p, se) = p_from_tail_values(stats.into_iter(), combined_stat, tol, reference);
            (
                Some(p),
                se.or(matches!(reference, Reference::Exact { .. }).then_some(0.0)),
            )
        }
        Some(_) => (Some(1.0), None),
        None => (None, None),
    };

    Ok(BalanceResult {
        per_covariate,
        combined_stat,
        df,
        p_combined_chi2,
        p_combined_mc,
        mc_stderr,
        n_treated: n_t,
        n_control: n_c,
        warnings,
    })
}

fn mean_difference(e: &[f64], z: &[bool], n_t: usize) -> f64 {
    let n_c = e.len() - n_t;
    let (st, sc) = e
        .iter()
        .zip(z)
        .fold((0.0, 0.0), |(a, b), (&x, &t)| if t { (a + x, b) } else { (a, b + x) });
    st / n_t as f64 - sc / n_c as f64
}

fn sample_variance(e: &[f64]) -> f64 {
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Sample covariance (divisor `n - 1`) of the columns.
fn covariance(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let k = cols.len();
    let n = cols[0].len();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    DMatrix::from_fn(k, k, |a, b| {
        cols[a]
            .iter()
            .zip(&cols[b])
            .map(|(x, y)| (x - means[a]) * (y - means[b]))
            .sum::<f64>()
            / (n as f64 - 1.0)
    })
}
