//! Density discontinuity test at the cutoff.
//!
//! Counts of the running variable are binned on each side of the cutoff and
//! normalized to density heights; a triangular-kernel local linear fit on
//! each side estimates the density at the boundary, and the log difference
//! is compared with its asymptotic standard error.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use super::binning::{BinGrid, Side};
use crate::data::Exclusion;
use crate::models::{self, ModelFamily, ModelSpec};

/// Bins required on each side after exclusions.
pub const MIN_BINS_PER_SIDE: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum McCraryError {
    #[error("no units on the {0:?} side of the cutoff")]
    EmptySide(Side),
    #[error("only {found} usable bins on the {side:?} side; at least {required} are needed")]
    InsufficientBins { side: Side, found: usize, required: usize },
    #[error("invalid option: {0}")]
    InvalidOption(String),
    #[error("boundary fit failed: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct McCraryOptions {
    /// `None` selects `2 sd(r) n^(-1/2)`, or the lattice unit for discrete r.
    pub bin_width: Option<f64>,
    /// `None` selects the plug-in bandwidth.
    pub bandwidth: Option<f64>,
    /// Bins overlapping any of these are left out of the fits.
    #[serde(default)]
    pub exclusions: Vec<Exclusion>,
    #[serde(default)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityBin {
    pub side: Side,
    pub midpoint: f64,
    pub count: usize,
    /// `count / (n b)` with `n` the units in non-excluded bins.
    pub height: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCraryResult {
    pub bin_width: f64,
    pub bandwidth: f64,
    pub boundary: f64,
    pub discrete: bool,
    /// Units in non-excluded bins.
    pub n: usize,
    pub f_below: f64,
    pub f_above: f64,
    /// `ln f_above - ln f_below`; `None` when a boundary estimate is not positive.
    pub theta: Option<f64>,
    pub se: Option<f64>,
    pub p_value: Option<f64>,
    pub bin_table: Vec<DensityBin>,
    pub diagnostics: Vec<String>,
}

impl McCraryResult {
    /// `p > alpha`; an undefined p-value never passes.
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value.is_some_and(|p| p > alpha)
    }

    /// Bin table as CSV with header `side,midpoint,count,height,excluded`.
    pub fn bin_table_csv(&self) -> String {
        let mut out = String::from("side,midpoint,count,height,excluded\n");
        for b in &self.bin_table {
            let side = match b.side {
                Side::Below => "below",
                Side::Above => "above",
            };
            out.push_str(&format!(
                "{side},{},{},{},{}\n",
                b.midpoint, b.count, b.height, b.excluded
            ));
        }
        out
    }
}

/// Per-side usable bins: (midpoint offset from the boundary, height).
struct SideBins {
    x: Vec<f64>,
    h: Vec<f64>,
}

/// Runs the density test on running-variable values `r`.
pub fn mccrary_test(r: &[f64], cutoff: f64, options: &McCraryOptions) -> Result<McCraryResult, McCraryError> {
    if let Some(b) = options.bin_width {
        if !(b > 0.0 && b.is_finite()) {
            return Err(McCraryError::InvalidOption(format!(
                "bin width must be positive, got {b}"
            )));
        }
    }
    if let Some(h) = options.bandwidth {
        if !(h > 0.0 && h.is_finite()) {
            return Err(McCraryError::InvalidOption(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
    }
    if r.iter().any(|x| !x.is_finite()) {
        return Err(McCraryError::InvalidOption(
            "running variable has non-finite values".into(),
        ));
    }
    let grid = BinGrid::new(r, cutoff, options.bin_width);
    let b = grid.width;
    if !(b > 0.0) {
        return Err(McCraryError::InvalidOption("running variable has no spread".into()));
    }
    let (below, above) = grid.counts(r);
    if below.iter().sum::<usize>() == 0 {
        return Err(McCraryError::EmptySide(Side::Below));
    }
    if above.iter().sum::<usize>() == 0 {
        return Err(McCraryError::EmptySide(Side::Above));
    }

    let mut bin_table = Vec::with_capacity(below.len() + above.len());
    for (side, counts) in [(Side::Below, &below), (Side::Above, &above)] {
        for (k, &count) in counts.iter().enumerate() {
            bin_table.push(DensityBin {
                side,
                midpoint: grid.midpoint(side, k),
                count,
                height: 0.0,
                excluded: grid.excluded_by(side, k, &options.exclusions, options.tolerance),
            });
        }
    }
    let n: usize = bin_table.iter().filter(|b| !b.excluded).map(|b| b.count).sum();
    for bin in &mut bin_table {
        bin.height = bin.count as f64 / (n.max(1) as f64 * b);
    }
    // below-side rows back into ascending midpoint order for the table
    bin_table[..below.len()].reverse();

    let side_bins = |side: Side| -> Result<SideBins, McCraryError> {
        let (x, h): (Vec<f64>, Vec<f64>) = bin_table
            .iter()
            .filter(|bin| bin.side == side && !bin.excluded)
            .map(|bin| (bin.midpoint - grid.boundary, bin.height))
            .unzip();
        if x.len() < MIN_BINS_PER_SIDE {
            return Err(McCraryError::InsufficientBins {
                side,
                found: x.len(),
                required: MIN_BINS_PER_SIDE,
            });
        }
        Ok(SideBins { x, h })
    };
    let lo_bins = side_bins(Side::Below)?;
    let hi_bins = side_bins(Side::Above)?;

    let mut diagnostics = Vec::new();
    let bandwidth = match options.bandwidth {
        Some(h) => h,
        None => plug_in_bandwidth(&lo_bins, &hi_bins, &mut diagnostics),
    };
    let f_below = boundary_fit(&lo_bins, bandwidth, Side::Below)?;
    let f_above = boundary_fit(&hi_bins, bandwidth, Side::Above)?;

    let (theta, se, p_value) = if f_below > 0.0 && f_above > 0.0 {
        let theta = f_above.ln() - f_below.ln();
        let se = ((24.0 / 5.0) * (1.0 / f_above + 1.0 / f_below) / (n as f64 * bandwidth)).sqrt();
        let normal = Normal::standard();
        let p = (2.0 * normal.sf(theta.abs() / se)).min(1.0);
        (Some(theta), Some(se), Some(p))
    } else {
        diagnostics.push(format!(
            "ZeroDensityAtBoundary: boundary density estimates below={f_below}, above={f_above}; theta undefined"
        ));
        (None, None, None)
    };

    Ok(McCraryResult {
        bin_width: b,
        bandwidth,
        boundary: grid.boundary,
        discrete: grid.lattice.is_some() && options.bin_width.is_none(),
        n,
        f_below,
        f_above,
        theta,
        se,
        p_value,
        bin_table,
        diagnostics,
    })
}

/// Intercept of the triangular-kernel weighted linear fit of height on offset.
fn boundary_fit(bins: &SideBins, h: f64, side: Side) -> Result<f64, McCraryError> {
    let w: Vec<f64> = bins.x.iter().map(|x| (1.0 - x.abs() / h).max(0.0)).collect();
    let support = w.iter().filter(|&&wi| wi > 0.0).count();
    if support < 2 {
        return Err(McCraryError::InsufficientBins {
            side,
            found: support,
            required: 2,
        });
    }
    let fitted = models::fit(ModelSpec::new(ModelFamily::Linear), &bins.x, &bins.h, Some(&w))
        .map_err(|e| McCraryError::Fit(e.to_string()))?;
    Ok(fitted.theta[0])
}

/// Rule-of-thumb bandwidth: a global quartic per side gives the curvature
/// and residual variance, `h = 3.348 (σ² L / Σ f''²)^(1/5)` with `L` the
/// side's extent; the two sides are averaged and capped at the wider extent.
fn plug_in_bandwidth(lo: &SideBins, hi: &SideBins, diagnostics: &mut Vec<String>) -> f64 {
    let extent = |s: &SideBins| s.x.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cap = extent(lo).max(extent(hi));
    let per_side = |s: &SideBins| -> Option<f64> {
        let (sigma2, curvature) = quartic_curvature(s)?;
        (curvature > 0.0).then(|| 3.348 * (sigma2 * extent(s) / curvature).powf(0.2))
    };
    let hs: Vec<f64> = [per_side(lo), per_side(hi)].into_iter().flatten().collect();
    if hs.is_empty() {
        diagnostics.push("plug-in bandwidth undefined (no curvature); using the full range".into());
        return cap;
    }
    let h = hs.iter().sum::<f64>() / hs.len() as f64;
    if h > cap {
        cap
    } else {
        h
    }
}

/// Residual variance and `Σ f''(x_j)²` of a quartic least-squares fit.
fn quartic_curvature(s: &SideBins) -> Option<(f64, f64)> {
    let m = s.x.len();
    if m < 6 {
        return None;
    }
    let scale = s.x.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if scale <= 0.0 {
        return None;
    }
    let design = DMatrix::from_fn(m, 5, |i, j| (s.x[i] / scale).powi(j as i32));
    let y = DVector::from_column_slice(&s.h);
    let svd = design.clone().svd(true, true);
    let beta = svd.solve(&y, 1e-12).ok()?;
    let resid = &y - &design * &beta;
    let sigma2 = resid.norm_squared() / (m - 5) as f64;
    let curvature: f64 =
        s.x.iter()
            .map(|&x| {
                let t = x / scale;
                let f2 = (2.0 * beta[2] + 6.0 * beta[3] * t + 12.0 * beta[4] * t * t) / (scale * scale);
                f2 * f2
            })
            .sum();
    Some((sigma2, curvature))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Evenly spread values: `per_bin` units inside each of `bins` bins per side.
    fn flat(bins: usize, per_bin: usize, width: f64) -> Vec<f64> {
        let mut r = Vec::new();
        for k in 0..bins {
            for j in 0..per_bin {
                let off = (k as f64 + (j as f64 + 0.5) / per_bin as f64) * width;
                r.push(-off);
                r.push(off);
            }
        }
        r
    }

    #[test]
    fn equal_counts_give_zero_theta() {
        let r = flat(20, 7, 0.1);
        let opts = McCraryOptions {
            bin_width: Some(0.1),
            bandwidth: Some(1.0),
            ..Default::default()
        };
        let res = mccrary_test(&r, 0.0, &opts).unwrap();
        assert!(res.theta.unwrap().abs() < 1e-9);
        assert!((res.p_value.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(res.bin_table.iter().map(|b| b.count).sum::<usize>(), r.len());
    }

    #[test]
    fn duplication_keeps_theta_and_shrinks_se() {
        let mut r: Vec<f64> = (0..400)
            .map(|i| -1.0 + 2.0 * ((i * 7919) % 400) as f64 / 400.0 + 0.001)
            .collect();
        r.extend((0..40).map(|i| -0.01 * (i % 5) as f64));
        let opts = McCraryOptions {
            bin_width: Some(0.05),
            bandwidth: Some(0.6),
            ..Default::default()
        };
        let a = mccrary_test(&r, 0.0, &opts).unwrap();
        let doubled: Vec<f64> = r.iter().chain(&r).copied().collect();
        let b = mccrary_test(&doubled, 0.0, &opts).unwrap();
        assert!((a.theta.unwrap() - b.theta.unwrap()).abs() < 1e-10);
        assert!((a.se.unwrap() / b.se.unwrap() - 2f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn empty_side_is_an_error() {
        let r: Vec<f64> = (0..50).map(|i| -(i as f64) * 0.01).collect();
        assert!(matches!(
            mccrary_test(&r, 0.0, &McCraryOptions::default()),
            Err(McCraryError::EmptySide(Side::Above))
        ));
    }

    #[test]
    fn too_few_bins() {
        let r = flat(5, 4, 0.1);
        let opts = McCraryOptions {
            bin_width: Some(0.1),
            ..Default::default()
        };
        assert!(matches!(
            mccrary_test(&r, 0.0, &opts),
            Err(McCraryError::InsufficientBins { .. })
        ));
    }

    #[test]
    fn heap_at_cutoff_is_detected_and_excluding_it_helps() {
        // lattice in hundredths with a heap at 0
        let mut r: Vec<f64> = Vec::new();
        for k in -50..=50 {
            let reps = if k == 0 { 60 } else { 10 };
            r.extend(std::iter::repeat_n(k as f64 * 0.01, reps));
        }
        let heaped = mccrary_test(&r, 0.0, &McCraryOptions::default()).unwrap();
        assert!(heaped.discrete);
        assert!(heaped.p_value.unwrap() < 1e-4, "{:?}", heaped.p_value);
        let opts = McCraryOptions {
            exclusions: vec![Exclusion::Value { value: 0.0 }],
            ..Default::default()
        };
        let fixed = mccrary_test(&r, 0.0, &opts).unwrap();
        assert!(fixed.p_value.unwrap() > 0.5, "{:?}", fixed.p_value);
    }

    #[test]
    fn csv_has_one_row_per_bin() {
        let r = flat(12, 3, 0.1);
        let opts = McCraryOptions {
            bin_width: Some(0.1),
            ..Default::default()
        };
        let res = mccrary_test(&r, 0.0, &opts).unwrap();
        assert_eq!(res.bin_table_csv().lines().count(), 1 + res.bin_table.len());
    }
}
