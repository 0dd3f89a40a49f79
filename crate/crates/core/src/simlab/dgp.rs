//! Data-generating processes for simulation.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::data::{Covariate, CovariateKind, Direction, UnitFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RunningDist {
    Uniform {
        a: f64,
        b: f64,
    },
    /// Support `min, min + step, ..., max`, uniform unless weighted.
    DiscreteGrid {
        min: f64,
        max: f64,
        step: f64,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EffectSpec {
    Constant {
        tau: f64,
    },
    /// `τ_i = tau + η_i` with `η_i ~ N(0, eta_sd²)` drawn independently of `r`.
    RandomAroundMean {
        tau: f64,
        eta_sd: f64,
    },
}

impl EffectSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            EffectSpec::Constant { tau } | EffectSpec::RandomAroundMean { tau, .. } => tau,
        }
    }
}

/// `slope * max(0, r - knot)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hinge {
    pub knot: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateDgp {
    pub name: String,
    /// Polynomial coefficients of the mean in `r`, constant first.
    #[serde(default)]
    pub poly: Vec<f64>,
    #[serde(default)]
    pub hinges: Vec<Hinge>,
    #[serde(default)]
    pub noise_sd: f64,
    /// Binary covariates are Bernoulli with success probability equal to the
    /// logistic function of the mean.
    #[serde(default)]
    pub binary: bool,
}

impl CovariateDgp {
    pub fn mean_at(&self, r: f64) -> f64 {
        poly_eval(&self.poly, r) + self.hinges.iter().map(|h| h.slope * (r - h.knot).max(0.0)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Manipulation {
    /// Moves `round(fraction * n)` units whose running variable is closest to
    /// `source_value` to exactly `value`; their potential outcomes and
    /// covariates are unchanged.
    HeapAt {
        value: f64,
        fraction: f64,
        source_value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n: usize,
    pub running: RunningDist,
    #[serde(default)]
    pub cutoff: f64,
    #[serde(default)]
    pub direction: Direction,
    /// Polynomial coefficients of `E(Y_C | R)`, constant first.
    pub yc_poly: Vec<f64>,
    pub noise_sd: f64,
    pub effect: EffectSpec,
    #[serde(default)]
    pub covariates: Vec<CovariateDgp>,
    #[serde(default)]
    pub manipulation: Option<Manipulation>,
}

impl DgpSpec {
    /// Uniform(-1, 1) running variable, cutoff 0, `y_C = 2 + 3r + N(0, noise_sd²)`.
    pub fn linear(n: usize, noise_sd: f64, effect: EffectSpec) -> Self {
        DgpSpec {
            n,
            running: RunningDist::Uniform { a: -1.0, b: 1.0 },
            cutoff: 0.0,
            direction: Direction::TreatedAtOrBelow,
            yc_poly: vec![2.0, 3.0],
            noise_sd,
            effect,
            covariates: Vec::new(),
            manipulation: None,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidSpec(msg));
        if self.n < 4 {
            return bad(format!("n must be at least 4, got {}", self.n));
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be nonnegative".into());
        }
        if let EffectSpec::RandomAroundMean { eta_sd, .. } = self.effect {
            if !(eta_sd >= 0.0) {
                return bad("eta_sd must be nonnegative".into());
            }
        }
        match &self.running {
            RunningDist::Uniform { a, b } => {
                if !(a < b) {
                    return bad(format!("uniform bounds need a < b, got ({a}, {b})"));
                }
            }
            RunningDist::DiscreteGrid {
                min,
                max,
                step,
                weights,
            } => {
                if !(step > &0.0) || !(min <= max) {
                    return bad("discrete grid needs step > 0 and min <= max".into());
                }
                if let Some(w) = weights {
                    if w.len() != grid_points(*min, *max, *step).len() {
                        return bad("grid weights must match the number of support points".into());
                    }
                    if w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                        return bad("grid weights must be nonnegative with a positive sum".into());
                    }
                }
            }
        }
        for c in &self.covariates {
            if !(c.noise_sd >= 0.0) {
                return bad(format!("covariate `{}` has negative noise_sd", c.name));
            }
        }
        if let Some(Manipulation::HeapAt { fraction, .. }) = self.manipulation {
            if !(0.0..=1.0).contains(&fraction) {
                return bad(format!("heap fraction must lie in [0, 1], got {fraction}"));
            }
        }
        Ok(())
    }
}

pub(crate) fn poly_eval(coefs: &[f64], x: f64) -> f64 {
    coefs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Support points of a grid, computed as `k / m` when the step is `1 / m` so
/// that decimal values such as -0.3 are represented exactly.
pub fn grid_points(min: f64, max: f64, step: f64) -> Vec<f64> {
    let inv = 1.0 / step;
    let m = inv.round();
    let count = ((max - min) / step + 1e-9).floor() as usize + 1;
    if (inv - m).abs() < 1e-9 * m.max(1.0) {
        let k0 = (min * m).round() as i64;
        (0..count as i64).map(|k| (k0 + k) as f64 / m).collect()
    } else {
        (0..count).map(|k| min + k as f64 * step).collect()
    }
}

/// Draws a frame from `spec`; equal seeds give identical frames.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<UnitFrame, SimError> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r: Vec<f64> = match &spec.running {
        RunningDist::Uniform { a, b } => (0..n).map(|_| rng.gen_range(*a..*b)).collect(),
        RunningDist::DiscreteGrid {
            min,
            max,
            step,
            weights,
        } => {
            let points = grid_points(*min, *max, *step);
            match weights {
                Some(w) => {
                    let dist = WeightedIndex::new(w).map_err(|e| SimError::InvalidSpec(e.to_string()))?;
                    (0..n).map(|_| points[dist.sample(&mut rng)]).collect()
                }
                None => (0..n).map(|_| points[rng.gen_range(0..points.len())]).collect(),
            }
        }
    };
    let normal = |sd: f64, rng: &mut ChaCha8Rng| -> f64 {
        let e: f64 = StandardNormal.sample(rng);
        sd * e
    };
    let yc: Vec<f64> = r
        .iter()
        .map(|&x| poly_eval(&spec.yc_poly, x) + normal(spec.noise_sd, &mut rng))
        .collect();
    let tau: Vec<f64> = match spec.effect {
        EffectSpec::Constant { tau } => vec![tau; n],
        EffectSpec::RandomAroundMean { tau, eta_sd } => (0..n).map(|_| tau + normal(eta_sd, &mut rng)).collect(),
    };
    let covariates: Vec<Covariate> = spec
        .covariates
        .iter()
        .map(|c| {
            let values: Vec<f64> = r
                .iter()
                .map(|&x| {
                    let m = c.mean_at(x);
                    if c.binary {
                        let p = 1.0 / (1.0 + (-m).exp());
                        if rng.gen::<f64>() < p {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        m + normal(c.noise_sd, &mut rng)
                    }
                })
                .collect();
            let kind = if c.binary {
                CovariateKind::Binary
            } else {
                CovariateKind::Continuous
            };
            Covariate::new(c.name.clone(), values, Some(kind))
        })
        .collect();

    if let Some(Manipulation::HeapAt {
        value,
        fraction,
        source_value,
    }) = spec.manipulation
    {
        let movers = (fraction * n as f64).round() as usize;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            (r[a] - source_value)
                .abs()
                .total_cmp(&(r[b] - source_value).abs())
                .then(a.cmp(&b))
        });
        for &i in order.iter().take(movers) {
            r[i] = value;
        }
    }

    let y: Vec<f64> = r
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if spec.direction.assign(x, spec.cutoff) {
                yc[i] + tau[i]
            } else {
                yc[i]
            }
        })
        .collect();
    Ok(UnitFrame::new(r, Some(y), covariates, spec.cutoff, spec.direction)?)
}
