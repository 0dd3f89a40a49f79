//! Two-sample test statistics on a residual vector and a treatment split.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatKind {
    /// Treated mean minus control mean.
    DiffMeans,
    /// Absolute difference in means (always upper tail).
    AbsDiffMeans,
    /// Sum of the treated values, `z'v`.
    SumCross,
    /// Brunner–Munzel studentized rank-sum statistic with mid-ranks.
    RankSumStudentized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    UpperTail,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Statistic {
    pub kind: StatKind,
    pub sidedness: Sidedness,
}

impl Statistic {
    pub fn new(kind: StatKind, sidedness: Sidedness) -> Self {
        Statistic { kind, sidedness }
    }

    pub fn diff_means() -> Self {
        Statistic::new(StatKind::DiffMeans, Sidedness::TwoSided)
    }

    /// Sidedness after normalization: the absolute difference in means is
    /// always an upper-tail test of `|d|`.
    pub fn effective_sidedness(&self) -> Sidedness {
        match self.kind {
            StatKind::AbsDiffMeans => Sidedness::UpperTail,
            _ => self.sidedness,
        }
    }

    /// The signed statistic whose null expectation defines the
    /// Hodges–Lehmann estimating equation.
    pub fn signed(&self) -> Statistic {
        match self.kind {
            StatKind::AbsDiffMeans => Statistic::new(StatKind::DiffMeans, Sidedness::UpperTail),
            kind => Statistic::new(kind, Sidedness::UpperTail),
        }
    }

    /// True when the signed statistic is a linear functional of the values.
    pub fn is_linear(&self) -> bool {
        matches!(
            self.kind,
            StatKind::DiffMeans | StatKind::AbsDiffMeans | StatKind::SumCross
        )
    }
}

impl Default for Statistic {
    fn default() -> Self {
        Statistic::diff_means()
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            StatKind::DiffMeans => "diff-means",
            StatKind::AbsDiffMeans => "abs-diff-means",
            StatKind::SumCross => "sum-cross",
            StatKind::RankSumStudentized => "rank-studentized",
        };
        match self.effective_sidedness() {
            Sidedness::UpperTail => write!(f, "{kind} (upper tail)"),
            Sidedness::TwoSided => write!(f, "{kind} (two-sided)"),
        }
    }
}

/// Mid-rank bookkeeping shared by every assignment of a fixed vector.
#[derive(Debug, Clone)]
struct RankData {
    /// Overall mid-rank of each unit (1-based).
    midrank: Vec<f64>,
    /// Unit indices in ascending order of value.
    order: Vec<usize>,
    /// Tie groups as `[start, end)` ranges into `order`.
    groups: Vec<(usize, usize)>,
}

impl RankData {
    fn new(v: &[f64]) -> Self {
        let n = v.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut midrank = vec![0.0; n];
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let mut end = start + 1;
            while end < n && v[order[end]] == v[order[start]] {
                end += 1;
            }
            let mid = (start + 1 + end) as f64 / 2.0;
            for &i in &order[start..end] {
                midrank[i] = mid;
            }
            groups.push((start, end));
            start = end;
        }
        RankData { midrank, order, groups }
    }

    /// Brunner–Munzel statistic with treated as the second sample; positive
    /// when treated values tend to be larger.
    fn statistic(&self, z: &[bool], n_t: usize) -> f64 {
        let n = z.len();
        let n_c = n - n_t;
        let (mut sum_t, mut sum_c) = (0.0, 0.0);
        for (i, &zi) in z.iter().enumerate() {
            if zi {
                sum_t += self.midrank[i];
            } else {
                sum_c += self.midrank[i];
            }
        }
        let mean_t = sum_t / n_t as f64;
        let mean_c = sum_c / n_c as f64;
        let shift_t = mean_t - (n_t as f64 + 1.0) / 2.0;
        let shift_c = mean_c - (n_c as f64 + 1.0) / 2.0;
        // internal (within-sample) mid-ranks, tie group by tie group
        let (mut seen_t, mut seen_c) = (0usize, 0usize);
        let (mut ss_t, mut ss_c) = (0.0, 0.0);
        for &(s, e) in &self.groups {
            let members = &self.order[s..e];
            let a = members.iter().filter(|&&i| z[i]).count();
            let b = members.len() - a;
            let internal_t = seen_t as f64 + (a as f64 + 1.0) / 2.0;
            let internal_c = seen_c as f64 + (b as f64 + 1.0) / 2.0;
            for &i in members {
                if z[i] {
                    ss_t += (self.midrank[i] - internal_t - shift_t).powi(2);
                } else {
                    ss_c += (self.midrank[i] - internal_c - shift_c).powi(2);
                }
            }
            seen_t += a;
            seen_c += b;
        }
        let var_t = ss_t / (n_t as f64 - 1.0);
        let var_c = ss_c / (n_c as f64 - 1.0);
        let mut pooled = n_c as f64 * var_c + n_t as f64 * var_t;
        if pooled <= 0.0 {
            // completely separated samples without ties: floor at the
            // variance contributed by half a discordant placement
            pooled = 0.5;
        }
        n_c as f64 * n_t as f64 * (mean_t - mean_c) / (n as f64 * pooled.sqrt())
    }
}

/// A statistic bound to a fixed value vector and treated count.
#[derive(Debug, Clone)]
pub(crate) struct Prepared<'a> {
    stat: Statistic,
    v: &'a [f64],
    n_t: usize,
    total: f64,
    ranks: Option<RankData>,
    tol: f64,
}

impl<'a> Prepared<'a> {
    pub fn new(stat: Statistic, v: &'a [f64], n_t: usize) -> Self {
        let total: f64 = v.iter().sum();
        let ranks = (stat.kind == StatKind::RankSumStudentized).then(|| RankData::new(v));
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let spread = hi - lo;
        let scale = match stat.kind {
            StatKind::DiffMeans | StatKind::AbsDiffMeans => spread,
            StatKind::SumCross => spread * n_t as f64,
            StatKind::RankSumStudentized => 1.0,
        };
        Prepared {
            stat,
            v,
            n_t,
            total,
            ranks,
            tol: 1e-9 * scale,
        }
    }

    pub fn n(&self) -> usize {
        self.v.len()
    }

    /// Absolute tolerance below which two statistic values count as tied.
    pub fn tie_tolerance(&self) -> f64 {
        self.tol
    }

    /// Signed statistic for the treated index set; `mask` is scratch space of
    /// length `n` that must be all-false on entry and is restored on exit.
    pub fn raw_from_treated(&self, treated: &[usize], mask: &mut [bool]) -> f64 {
        match self.stat.kind {
            StatKind::DiffMeans | StatKind::AbsDiffMeans => {
                let st: f64 = treated.iter().map(|&i| self.v[i]).sum();
                let n_c = (self.n() - self.n_t) as f64;
                st / self.n_t as f64 - (self.total - st) / n_c
            }
            StatKind::SumCross => treated.iter().map(|&i| self.v[i]).sum(),
            StatKind::RankSumStudentized => {
                for &i in treated {
                    mask[i] = true;
                }
                let w = self.ranks.as_ref().expect("rank data").statistic(mask, self.n_t);
                for &i in treated {
                    mask[i] = false;
                }
                w
            }
        }
    }

    pub fn raw_from_mask(&self, z: &[bool]) -> f64 {
        let treated: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
        let mut mask = vec![false; z.len()];
        self.raw_from_treated(&treated, &mut mask)
    }

    /// Analytic null expectation of the signed statistic, when known.
    pub fn analytic_null_mean(&self) -> Option<f64> {
        match self.stat.kind {
            StatKind::DiffMeans | StatKind::AbsDiffMeans => Some(0.0),
            StatKind::SumCross => Some(self.n_t as f64 / self.n() as f64 * self.total),
            StatKind::RankSumStudentized => None,
        }
    }

    /// Maps the signed statistic onto the scale whose upper tail is tested.
    pub fn tail(&self, raw: f64) -> f64 {
        match (self.stat.kind, self.stat.effective_sidedness()) {
            (StatKind::AbsDiffMeans, _) => raw.abs(),
            (_, Sidedness::UpperTail) => raw,
            (StatKind::SumCross, Sidedness::TwoSided) => (raw - self.n_t as f64 / self.n() as f64 * self.total).abs(),
            (_, Sidedness::TwoSided) => raw.abs(),
        }
    }
}
