//! Histogram bins anchored at the cutoff so that no bin straddles it.
//!
//! Below-side bin `k` is `(β - (k+1)b, β - kb]`, above-side bin `k` is
//! `(β + kb, β + (k+1)b]`, where `β` is the boundary point. For continuous
//! data `β` is the cutoff itself, so a unit at the cutoff always lands below.
//! For a running variable on a lattice with unit `u`, `β` sits half a unit
//! above the last lattice point at or below the cutoff and `b = u` puts each
//! support point in its own bin.

use serde::{Deserialize, Serialize};

use crate::data::{lattice_unit, Exclusion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Below,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    /// Boundary point between the two sides.
    pub boundary: f64,
    pub width: f64,
    /// Lattice unit when the running variable is discrete.
    pub lattice: Option<f64>,
}

impl BinGrid {
    /// Grid for `r` around `cutoff`. `width = None` means one bin per support
    /// point on a lattice, or `2 sd(r) n^(-1/2)` otherwise.
    pub fn new(r: &[f64], cutoff: f64, width: Option<f64>) -> Self {
        let lattice = lattice_unit(r);
        let boundary = match lattice {
            Some(u) => {
                let anchor = r.iter().copied().fold(f64::INFINITY, f64::min);
                let steps = ((cutoff - anchor) / u + 1e-6).floor();
                anchor + steps * u + 0.5 * u
            }
            None => cutoff,
        };
        let width = width.unwrap_or_else(|| match lattice {
            Some(u) => u,
            None => default_bin_width(r),
        });
        BinGrid {
            boundary,
            width,
            lattice,
        }
    }

    /// Side and within-side index of the bin holding `x`.
    pub fn locate(&self, x: f64) -> (Side, usize) {
        let d = x - self.boundary;
        if d <= 0.0 {
            let k = ((-d) / self.width).ceil() as usize;
            (Side::Below, k.saturating_sub(1))
        } else {
            let k = (d / self.width).ceil() as usize;
            (Side::Above, k.saturating_sub(1))
        }
    }

    /// Half-open bin interval `(lo, hi]`.
    pub fn interval(&self, side: Side, k: usize) -> (f64, f64) {
        let k = k as f64;
        match side {
            Side::Below => (self.boundary - (k + 1.0) * self.width, self.boundary - k * self.width),
            Side::Above => (self.boundary + k * self.width, self.boundary + (k + 1.0) * self.width),
        }
    }

    pub fn midpoint(&self, side: Side, k: usize) -> f64 {
        let (lo, hi) = self.interval(side, k);
        0.5 * (lo + hi)
    }

    /// Counts per bin, closest-to-boundary first on each side.
    pub fn counts(&self, r: &[f64]) -> (Vec<usize>, Vec<usize>) {
        let mut below = Vec::new();
        let mut above = Vec::new();
        for &x in r {
            let (side, k) = self.locate(x);
            let v = match side {
                Side::Below => &mut below,
                Side::Above => &mut above,
            };
            if v.len() <= k {
                v.resize(k + 1, 0);
            }
            v[k] += 1;
        }
        (below, above)
    }

    /// Whether an exclusion removes any part of bin `(side, k)`.
    pub fn excluded_by(&self, side: Side, k: usize, exclusions: &[Exclusion], tolerance: f64) -> bool {
        let (lo, hi) = self.interval(side, k);
        exclusions.iter().any(|e| match *e {
            Exclusion::Value { value } => value + tolerance > lo && value - tolerance <= hi,
            Exclusion::Interval { lo: a, hi: b } => a - tolerance <= hi && b + tolerance > lo,
        })
    }
}

pub fn default_bin_width(r: &[f64]) -> f64 {
    // summed in sorted order so the width does not depend on row order
    let mut sorted = r.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    2.0 * var.sqrt() / n.sqrt()
}
