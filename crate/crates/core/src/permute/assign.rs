//! Reference distributions over treatment assignments with a fixed number of
//! treated units: full enumeration, or seeded Monte Carlo.
//!
//! Monte Carlo draws are split into fixed-size blocks. Block `b` draws from a
//! ChaCha8 stream keyed by `(seed, b)`, so the sequence of assignments does
//! not depend on how blocks are scheduled across worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Draws per Monte Carlo block.
pub const BLOCK_SIZE: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Reference {
    /// Every one of `assignments` = C(n, n_T) assignments.
    Exact {
        assignments: u64,
    },
    MonteCarlo {
        draws: u64,
    },
}

impl Reference {
    pub fn size(&self) -> u64 {
        match *self {
            Reference::Exact { assignments } => assignments,
            Reference::MonteCarlo { draws } => draws,
        }
    }
}

/// `C(n, k)` if it does not exceed `cap`, otherwise `None`.
pub fn binomial_capped(n: usize, k: usize, cap: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return None;
        }
    }
    Some(acc as u64)
}

pub fn choose_reference(n: usize, n_treated: usize, max_exact: u64, draws: u64) -> Reference {
    match binomial_capped(n, n_treated, max_exact) {
        Some(assignments) => Reference::Exact { assignments },
        None => Reference::MonteCarlo { draws },
    }
}

/// Evaluates `f` on every assignment of the chosen reference distribution and
/// returns the values in a deterministic order (lexicographic for
/// enumeration, draw index for Monte Carlo).
///
/// `f` receives the treated indices (unordered for Monte Carlo) and a
/// per-worker scratch value cloned from `scratch`.
pub fn map_assignments<T, S, F>(n: usize, n_treated: usize, reference: Reference, seed: u64, scratch: S, f: F) -> Vec<T>
where
    T: Send,
    S: Clone + Send + Sync,
    F: Fn(&[usize], &mut S) -> T + Sync,
{
    match reference {
        Reference::Exact { assignments } => {
            let mut out = Vec::with_capacity(assignments as usize);
            let mut scratch = scratch;
            let mut idx: Vec<usize> = (0..n_treated).collect();
            loop {
                out.push(f(&idx, &mut scratch));
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
            debug_assert_eq!(out.len() as u64, assignments);
            out
        }
        Reference::MonteCarlo { draws } => {
            let n_blocks = draws.div_ceil(BLOCK_SIZE);
            let blocks: Vec<Vec<T>> = (0..n_blocks)
                .into_par_iter()
                .map(|block| {
                    let mut scratch = scratch.clone();
                    let mut rng = block_rng(seed, block);
                    let mut perm: Vec<usize> = (0..n).collect();
                    let len = BLOCK_SIZE.min(draws - block * BLOCK_SIZE);
                    (0..len)
                        .map(|_| {
                            partial_shuffle(&mut perm, n_treated, &mut rng);
                            f(&perm[..n_treated], &mut scratch)
                        })
                        .collect()
                })
                .collect();
            blocks.into_iter().flatten().collect()
        }
    }
}

/// The RNG stream for Monte Carlo block `block`.
pub fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Moves a uniform random `k`-subset of `perm` into its first `k` slots.
fn partial_shuffle<R: Rng>(perm: &mut [usize], k: usize, rng: &mut R) {
    let n = perm.len();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        perm.swap(i, j);
    }
}

/// Advances a sorted k-combination of `0..n` to its lexicographic successor.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if idx[i] < n - k + i {
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
