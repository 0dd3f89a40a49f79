//! De-trending models `f(r; θ)` and their residuals.
//!
//! Polynomial families are fit by least squares on a Householder QR
//! factorization of the design, with the running variable centered and scaled
//! before powers are formed. Coefficients are always reported on the original
//! scale of `r`. The binary-response family is a logistic regression on `r`
//! fit by iteratively reweighted least squares.

use std::fmt;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("length mismatch: r has {r} values, response has {v}")]
    LengthMismatch { r: usize, v: usize },
    #[error("rank-deficient design for {family}: {reason}")]
    RankDeficientDesign { family: ModelFamily, reason: String },
    #[error("logistic fit did not converge in {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("separation detected: fitted probabilities pinned at 0 or 1")]
    SeparationDetected,
    #[error("logistic response needs both classes present")]
    SingleClass,
    #[error("invalid response: {0}")]
    InvalidResponse(String),
    #[error("{0} has no residual-maker matrix")]
    NotLeastSquares(ModelFamily),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Constant,
    #[default]
    Linear,
    Quadratic,
    LogisticLinear,
}

impl ModelFamily {
    /// Polynomial degree of the least-squares families.
    pub fn degree(self) -> Option<usize> {
        match self {
            ModelFamily::Constant => Some(0),
            ModelFamily::Linear => Some(1),
            ModelFamily::Quadratic => Some(2),
            ModelFamily::LogisticLinear => None,
        }
    }

    pub fn is_least_squares(self) -> bool {
        self.degree().is_some()
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelFamily::Constant => "constant",
            ModelFamily::Linear => "linear",
            ModelFamily::Quadratic => "quadratic",
            ModelFamily::LogisticLinear => "logistic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResponseTransform {
    #[default]
    Identity,
    /// `log(p / (1 - p))` after clamping to `[LOGIT_CLAMP, 1 - LOGIT_CLAMP]`.
    Logit,
}

/// Clamp applied to bounded responses before the logit transform.
pub const LOGIT_CLAMP: f64 = 1e-4;

const IRLS_MAX_ITER: usize = 100;
const IRLS_GRAD_TOL: f64 = 1e-10;
const PINNED_PROB: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct ModelSpec {
    pub family: ModelFamily,
    #[serde(default)]
    pub transform: ResponseTransform,
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        ModelSpec {
            family,
            transform: ResponseTransform::Identity,
        }
    }

    pub fn with_transform(mut self, transform: ResponseTransform) -> Self {
        self.transform = transform;
        self
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.transform {
            ResponseTransform::Identity => write!(f, "{}", self.family),
            ResponseTransform::Logit => write!(f, "{} (logit response)", self.family),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    /// Coefficients on the original `r` scale, constant term first.
    pub theta: Vec<f64>,
    /// Response minus fitted value, on the (transformed) response scale.
    pub residuals: Vec<f64>,
    pub design_info: Vec<String>,
    pub hat_available: bool,
    /// Set when a logistic fit failed and the linear-probability fit was used.
    pub fallback: Option<String>,
}

/// Centering and scaling of `r` used to condition polynomial designs.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Standardizer {
    center: f64,
    scale: f64,
}

impl Standardizer {
    fn fit(r: &[f64], weights: Option<&[f64]>) -> Self {
        let (sw, swr) = match weights {
            Some(w) => r
                .iter()
                .zip(w)
                .fold((0.0, 0.0), |(a, b), (&ri, &wi)| (a + wi, b + wi * ri)),
            None => (r.len() as f64, r.iter().sum()),
        };
        let center = if sw > 0.0 { swr / sw } else { 0.0 };
        let ss = match weights {
            Some(w) => r
                .iter()
                .zip(w)
                .map(|(&ri, &wi)| wi * (ri - center).powi(2))
                .sum::<f64>(),
            None => r.iter().map(|&ri| (ri - center).powi(2)).sum::<f64>(),
        };
        let scale = if sw > 0.0 { (ss / sw).sqrt() } else { 0.0 };
        Standardizer {
            center,
            scale: if scale > 0.0 { scale } else { 1.0 },
        }
    }

    #[inline]
    fn apply(&self, r: f64) -> f64 {
        (r - self.center) / self.scale
    }

    /// Converts coefficients of a polynomial in the standardized variable to
    /// coefficients of the same polynomial in `r`.
    fn unstandardize(&self, coef: &[f64]) -> Vec<f64> {
        let p = coef.len();
        let mut out = vec![0.0; p];
        let (m, s) = (self.center, self.scale);
        for (k, &ck) in coef.iter().enumerate() {
            // ck * ((r - m) / s)^k = ck / s^k * sum_j C(k,j) r^j (-m)^(k-j)
            let sk = s.powi(k as i32);
            for (j, slot) in out.iter_mut().enumerate().take(k + 1) {
                *slot += ck / sk * binom(k, j) * (-m).powi((k - j) as i32);
            }
        }
        out
    }
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn distinct_count(r: &[f64], weights: Option<&[f64]>) -> usize {
    let mut vals: Vec<f64> = match weights {
        Some(w) => r.iter().zip(w).filter(|(_, &wi)| wi > 0.0).map(|(&ri, _)| ri).collect(),
        None => r.to_vec(),
    };
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    vals.len()
}

/// QR-factored least-squares design for a polynomial family on fixed `r`.
///
/// `apply` computes `(I - H) v` for any response `v`, where `H` is the
/// (weighted) hat matrix of the design. Factorization happens once, so a
/// residual maker can be reused across many responses on the same `r`.
#[derive(Debug, Clone)]
pub struct ResidualMaker {
    family: ModelFamily,
    standardizer: Standardizer,
    design: DMatrix<f64>,
    q: DMatrix<f64>,
    r_factor: DMatrix<f64>,
    sqrt_w: Option<Vec<f64>>,
}

impl ResidualMaker {
    pub fn new(family: ModelFamily, r: &[f64], weights: Option<&[f64]>) -> Result<Self, ModelError> {
        let degree = family.degree().ok_or(ModelError::NotLeastSquares(family))?;
        let p = degree + 1;
        let n = r.len();
        if let Some(w) = weights {
            if w.len() != n {
                return Err(ModelError::LengthMismatch { r: n, v: w.len() });
            }
            if w.iter().any(|&wi| !(wi >= 0.0) || !wi.is_finite()) {
                return Err(ModelError::InvalidResponse(
                    "weights must be finite and nonnegative".into(),
                ));
            }
        }
        let distinct = distinct_count(r, weights);
        if distinct < p {
            return Err(ModelError::RankDeficientDesign {
                family,
                reason: format!("{distinct} distinct running-variable values for {p} coefficients"),
            });
        }
        let standardizer = Standardizer::fit(r, weights);
        let design = DMatrix::from_fn(n, p, |i, j| standardizer.apply(r[i]).powi(j as i32));
        let sqrt_w: Option<Vec<f64>> = weights.map(|w| w.iter().map(|wi| wi.sqrt()).collect());
        let weighted = match &sqrt_w {
            Some(sw) => DMatrix::from_fn(n, p, |i, j| design[(i, j)] * sw[i]),
            None => design.clone(),
        };
        let qr = weighted.qr();
        let r_factor = qr.r();
        let q = qr.q();
        let diag_max = (0..p).map(|j| r_factor[(j, j)].abs()).fold(0.0, f64::max);
        if let Some(j) = (0..p).find(|&j| r_factor[(j, j)].abs() <= 1e-10 * diag_max.max(f64::MIN_POSITIVE)) {
            return Err(ModelError::RankDeficientDesign {
                family,
                reason: format!("column {j} is collinear with earlier columns"),
            });
        }
        Ok(ResidualMaker {
            family,
            standardizer,
            design,
            q,
            r_factor,
            sqrt_w,
        })
    }

    pub fn len(&self) -> usize {
        self.design.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.design.nrows() == 0
    }

    pub fn family(&self) -> ModelFamily {
        self.family
    }

    /// Coefficients in the standardized variable.
    fn solve(&self, v: &[f64]) -> DVector<f64> {
        let rhs = match &self.sqrt_w {
            Some(sw) => DVector::from_iterator(v.len(), v.iter().zip(sw).map(|(vi, wi)| vi * wi)),
            None => DVector::from_column_slice(v),
        };
        let qtv = self.q.tr_mul(&rhs);
        self.r_factor
            .solve_upper_triangular(&qtv)
            .expect("triangular factor checked nonsingular")
    }

    /// `(I - H) v`.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, ModelError> {
        if v.len() != self.len() {
            return Err(ModelError::LengthMismatch {
                r: self.len(),
                v: v.len(),
            });
        }
        match &self.sqrt_w {
            None => {
                let vv = DVector::from_column_slice(v);
                let proj = &self.q * self.q.tr_mul(&vv);
                Ok(v.iter().zip(proj.iter()).map(|(a, b)| a - b).collect())
            }
            Some(_) => {
                let fitted = &self.design * self.solve(v);
                Ok(v.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect())
            }
        }
    }

    /// Fits `v` and returns coefficients on the original scale with residuals.
    pub fn fit(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        if v.len() != self.len() {
            return Err(ModelError::LengthMismatch {
                r: self.len(),
                v: v.len(),
            });
        }
        let coef = self.solve(v);
        let theta = self.standardizer.unstandardize(coef.as_slice());
        let residuals = self.apply(v)?;
        Ok((theta, residuals))
    }
}

/// `(I - H) v` with the design of `family` built from `r`.
pub fn hat_apply(family: ModelFamily, r: &[f64], v: &[f64]) -> Result<Vec<f64>, ModelError> {
    ResidualMaker::new(family, r, None)?.apply(v)
}

fn design_info(family: ModelFamily) -> Vec<String> {
    match family {
        ModelFamily::Constant => vec!["1".into()],
        ModelFamily::Linear => vec!["1".into(), "r".into()],
        ModelFamily::Quadratic => vec!["1".into(), "r".into(), "r^2".into()],
        ModelFamily::LogisticLinear => vec!["logit: 1".into(), "logit: r".into()],
    }
}

/// Applies the response transform of `spec` to `v`.
pub fn transform_response(spec: &ModelSpec, v: &[f64]) -> Result<Vec<f64>, ModelError> {
    match spec.transform {
        ResponseTransform::Identity => Ok(v.to_vec()),
        ResponseTransform::Logit => {
            if spec.family == ModelFamily::LogisticLinear {
                return Err(ModelError::InvalidResponse(
                    "logit transform cannot be combined with the logistic family".into(),
                ));
            }
            v.iter()
                .map(|&x| {
                    if !(0.0..=1.0).contains(&x) {
                        return Err(ModelError::InvalidResponse(format!(
                            "logit transform needs values in [0, 1], found {x}"
                        )));
                    }
                    let p = x.clamp(LOGIT_CLAMP, 1.0 - LOGIT_CLAMP);
                    Ok((p / (1.0 - p)).ln())
                })
                .collect()
        }
    }
}

/// Fits `spec` to `(r, v)`, optionally with observation weights.
pub fn fit(spec: ModelSpec, r: &[f64], v: &[f64], weights: Option<&[f64]>) -> Result<FittedModel, ModelError> {
    if r.len() != v.len() {
        return Err(ModelError::LengthMismatch { r: r.len(), v: v.len() });
    }
    let response = transform_response(&spec, v)?;
    match spec.family {
        ModelFamily::LogisticLinear => fit_logistic(spec, r, &response, weights),
        family => {
            let maker = ResidualMaker::new(family, r, weights)?;
            let (theta, residuals) = maker.fit(&response)?;
            Ok(FittedModel {
                spec,
                theta,
                residuals,
                design_info: design_info(family),
                hat_available: true,
                fallback: None,
            })
        }
    }
}

/// Like [`fit`], but a logistic fit that fails (separation, non-convergence,
/// a single class) falls back to the linear-probability least-squares fit.
pub fn fit_with_fallback(
    spec: ModelSpec,
    r: &[f64],
    v: &[f64],
    weights: Option<&[f64]>,
) -> Result<FittedModel, ModelError> {
    match fit(spec, r, v, weights) {
        Err(err @ (ModelError::SeparationDetected | ModelError::NonConvergence { .. } | ModelError::SingleClass))
            if spec.family == ModelFamily::LogisticLinear =>
        {
            log::warn!("logistic fit failed ({err}); using linear-probability fit");
            let mut fitted = fit(ModelSpec::new(ModelFamily::Linear), r, v, weights)?;
            fitted.fallback = Some(format!("linear-probability fallback: {err}"));
            Ok(fitted)
        }
        other => other,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn fit_logistic(spec: ModelSpec, r: &[f64], v: &[f64], weights: Option<&[f64]>) -> Result<FittedModel, ModelError> {
    let n = r.len();
    if let Some(x) = v.iter().find(|&&x| x != 0.0 && x != 1.0) {
        return Err(ModelError::InvalidResponse(format!(
            "logistic family needs a 0/1 response, found {x}"
        )));
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(w) => return Err(ModelError::LengthMismatch { r: n, v: w.len() }),
        None => vec![1.0; n],
    };
    let pos: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
    let ones = pos.iter().filter(|&&i| v[i] == 1.0).count();
    if ones == 0 || ones == pos.len() {
        return Err(ModelError::SingleClass);
    }
    if distinct_count(r, Some(&w)) < 2 {
        return Err(ModelError::RankDeficientDesign {
            family: ModelFamily::LogisticLinear,
            reason: "running variable is constant".into(),
        });
    }
    // With a single regressor the MLE fails to exist exactly when the classes
    // are (quasi-)separated by a threshold on r.
    let (min1, max1, min0, max0) = pos.iter().fold(
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY),
        |(a, b, c, d), &i| {
            if v[i] == 1.0 {
                (a.min(r[i]), b.max(r[i]), c, d)
            } else {
                (a, b, c.min(r[i]), d.max(r[i]))
            }
        },
    );
    if max0 <= min1 || max1 <= min0 {
        return Err(ModelError::SeparationDetected);
    }

    let st = Standardizer::fit(r, Some(&w));
    let u: Vec<f64> = r.iter().map(|&ri| st.apply(ri)).collect();
    let sw: f64 = pos.iter().map(|&i| w[i]).sum();
    let mean = pos.iter().map(|&i| w[i] * v[i]).sum::<f64>() / sw;
    let mut beta = Vector2::new((mean / (1.0 - mean)).ln(), 0.0);
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut probs = vec![0.0; n];
    for _ in 0..IRLS_MAX_ITER {
        let mut grad = Vector2::zeros();
        let mut info = Matrix2::zeros();
        for i in 0..n {
            let x = Vector2::new(1.0, u[i]);
            let p = sigmoid(beta.dot(&x));
            probs[i] = p;
            grad += x * (w[i] * (v[i] - p));
            info += x * x.transpose() * (w[i] * p * (1.0 - p));
        }
        // gradient of the mean log-likelihood
        grad_norm = grad.norm() / sw;
        if grad_norm <= IRLS_GRAD_TOL {
            converged = true;
            break;
        }
        let step = info
            .cholesky()
            .map(|c| c.solve(&grad))
            .ok_or(ModelError::SeparationDetected)?;
        beta += step;
    }
    for i in 0..n {
        probs[i] = sigmoid(beta[0] + beta[1] * u[i]);
    }
    if pos
        .iter()
        .any(|&i| probs[i] < PINNED_PROB || probs[i] > 1.0 - PINNED_PROB)
    {
        return Err(ModelError::SeparationDetected);
    }
    if !converged {
        return Err(ModelError::NonConvergence {
            iterations: IRLS_MAX_ITER,
            gradient_norm: grad_norm,
        });
    }
    let theta = st.unstandardize(beta.as_slice());
    let residuals = v.iter().zip(&probs).map(|(vi, pi)| vi - pi).collect();
    Ok(FittedModel {
        spec,
        theta,
        residuals,
        design_info: design_info(ModelFamily::LogisticLinear),
        hat_available: false,
        fallback: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lin() -> ModelSpec {
        ModelSpec::new(ModelFamily::Linear)
    }

    #[test]
    fn constant_family_centers() {
        let m = fit(
            ModelSpec::new(ModelFamily::Constant),
            &[0.0, 1.0, 2.0],
            &[1.0, 2.0, 3.0],
            None,
        )
        .unwrap();
        assert!((m.theta[0] - 2.0).abs() < 1e-12);
        for (e, want) in m.residuals.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((e - want).abs() < 1e-12);
        }
        assert!(m.residuals.iter().sum::<f64>().abs() < 1e-12);
    }

    #[test]
    fn exact_linear_response_has_zero_residuals() {
        let r: Vec<f64> = (0..25).map(|i| -1.0 + i as f64 * 0.08).collect();
        let v: Vec<f64> = r.iter().map(|x| 2.0 + 3.0 * x).collect();
        let m = fit(lin(), &r, &v, None).unwrap();
        assert!(m.residuals.iter().all(|e| e.abs() < 1e-10));
        assert!((m.theta[0] - 2.0).abs() < 1e-10 && (m.theta[1] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn linear_fit_matches_normal_equations() {
        // Normal equations solved by hand:
        // [4 6; 6 14] θ = [9, 18]  =>  θ = (0.9, 0.9)
        let r = [0.0, 1.0, 2.0, 3.0];
        let v = [1.0, 2.0, 2.0, 4.0];
        let m = fit(lin(), &r, &v, None).unwrap();
        assert!((m.theta[0] - 0.9).abs() < 1e-12);
        assert!((m.theta[1] - 0.9).abs() < 1e-12);
        let expected = [0.1, 0.2, -0.7, 0.4];
        for (e, want) in m.residuals.iter().zip(expected) {
            assert!((e - want).abs() < 1e-12, "{e} vs {want}");
        }
    }

    #[test]
    fn quadratic_coefficients_on_original_scale() {
        let r: Vec<f64> = (0..30).map(|i| 1.5 + i as f64 * 0.01).collect();
        let v: Vec<f64> = r.iter().map(|x| 0.5 - 2.0 * x + 0.75 * x * x).collect();
        let m = fit(ModelSpec::new(ModelFamily::Quadratic), &r, &v, None).unwrap();
        assert!((m.theta[0] - 0.5).abs() < 1e-7);
        assert!((m.theta[1] + 2.0).abs() < 1e-7);
        assert!((m.theta[2] - 0.75).abs() < 1e-7);
    }

    #[test]
    fn constant_r_is_rank_deficient() {
        let err = fit(lin(), &[0.3; 5], &[1.0, 2.0, 3.0, 4.0, 5.0], None).unwrap_err();
        assert!(matches!(err, ModelError::RankDeficientDesign { .. }));
        let err = fit(
            ModelSpec::new(ModelFamily::Quadratic),
            &[0.0, 1.0, 0.0, 1.0],
            &[1.0; 4],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::RankDeficientDesign { .. }));
    }

    #[test]
    fn hat_apply_annihilates_span() {
        let r = [0.0, 1.0, 2.0, 3.0, 5.0];
        let v: Vec<f64> = r.iter().map(|x| 1.5 - 0.25 * x).collect();
        let e = hat_apply(ModelFamily::Linear, &r, &v).unwrap();
        assert!(e.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn hat_apply_matches_dense_hat_matrix() {
        // Dense oracle: H = X (X'X)^-1 X' with X = [1, r], r = 0..3.
        // X'X = [4 6; 6 14], inverse = [14 -6; -6 4] / 20.
        let r = [0.0, 1.0, 2.0, 3.0];
        let mut h = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                let (ri, rj) = (r[i], r[j]);
                h[i][j] = (14.0 - 6.0 * rj - 6.0 * ri + 4.0 * ri * rj) / 20.0;
            }
        }
        let v = [1.0, 0.0, 0.0, 0.0];
        let expected: Vec<f64> = (0..4)
            .map(|i| v[i] - (0..4).map(|j| h[i][j] * v[j]).sum::<f64>())
            .collect();
        let got = hat_apply(ModelFamily::Linear, &r, &v).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12);
        }
        // (0.3, -0.4, -0.1, 0.2)
        assert!((expected[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn weighted_residuals_orthogonal_to_design() {
        let r: Vec<f64> = (0..40).map(|i| i as f64 * 0.05).collect();
        let v: Vec<f64> = r.iter().map(|x| (3.0 * x).sin()).collect();
        let w: Vec<f64> = r.iter().map(|x| (1.0 - x / 2.0).max(0.0)).collect();
        let m = fit(lin(), &r, &v, Some(&w)).unwrap();
        let dot0: f64 = m.residuals.iter().zip(&w).map(|(e, wi)| e * wi).sum();
        let dot1: f64 = m
            .residuals
            .iter()
            .zip(&w)
            .zip(&r)
            .map(|((e, wi), ri)| e * wi * ri)
            .sum();
        assert!(dot0.abs() < 1e-10 && dot1.abs() < 1e-10);
    }

    #[test]
    fn logistic_converges_with_centered_residuals() {
        let r: Vec<f64> = (0..60).map(|i| -1.0 + i as f64 / 30.0).collect();
        let v: Vec<f64> = (0..60)
            .map(|i| if (i * 7) % 10 < 3 + i / 10 { 1.0 } else { 0.0 })
            .collect();
        let m = fit(ModelSpec::new(ModelFamily::LogisticLinear), &r, &v, None).unwrap();
        let mean: f64 = m.residuals.iter().sum::<f64>() / 60.0;
        assert!(mean.abs() < 1e-6);
        assert!(!m.hat_available);
    }

    #[test]
    fn logistic_separation_falls_back() {
        let r = [-0.3, -0.2, -0.1, 0.1, 0.2, 0.3];
        let v = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let spec = ModelSpec::new(ModelFamily::LogisticLinear);
        assert_eq!(fit(spec, &r, &v, None).unwrap_err(), ModelError::SeparationDetected);
        let m = fit_with_fallback(spec, &r, &v, None).unwrap();
        assert!(m.fallback.is_some());
        assert_eq!(m.spec.family, ModelFamily::Linear);
    }

    #[test]
    fn logistic_rejects_non_binary_and_single_class() {
        let spec = ModelSpec::new(ModelFamily::LogisticLinear);
        assert!(matches!(
            fit(spec, &[0.0, 1.0], &[0.5, 1.0], None),
            Err(ModelError::InvalidResponse(_))
        ));
        assert_eq!(
            fit(spec, &[0.0, 1.0, 2.0], &[1.0; 3], None).unwrap_err(),
            ModelError::SingleClass
        );
    }

    #[test]
    fn logit_transform_clamps() {
        let spec = ModelSpec::new(ModelFamily::Linear).with_transform(ResponseTransform::Logit);
        let t = transform_response(&spec, &[0.0, 0.5, 1.0]).unwrap();
        assert!((t[0] - (LOGIT_CLAMP / (1.0 - LOGIT_CLAMP)).ln()).abs() < 1e-12);
        assert_eq!(t[1], 0.0);
        assert!((t[0] + t[2]).abs() < 1e-12);
        assert!(transform_response(&spec, &[1.5]).is_err());
    }
}
