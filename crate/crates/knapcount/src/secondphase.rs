//! Counting pairs `(X0, X_i)` of a tiny-item subset and a partial sample
//! with `W(X0) + W(X_i) <= T`.
//!
//! Solutions are split by the heaviest tiny item they use. For each of the
//! `r` heaviest items the count is estimated by sampling from the product of
//! a sampler over the lighter tiny items and an n-choose-1 sampler over the
//! candidates; lighter heaviest-items are dropped, which costs at most a
//! `2^-r` fraction.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::instance::{ceil_div_real, AlgoParams};
use crate::par::par_map;
use crate::rng;
use crate::sampler::{self, Sampler, SamplerError};
use crate::xfloat::XReal;

#[derive(Clone, Debug, PartialEq)]
pub struct SecondPhaseInstance {
    /// Tiny-item weights, non-increasing.
    pub tiny_weights: Vec<BigUint>,
    /// Partial samples with their original total weight.
    pub candidates: Vec<(Vec<usize>, BigUint)>,
    pub capacity: BigUint,
    pub epsilon: f64,
    /// Item count of the original instance; sets the constants.
    pub n: usize,
}

impl SecondPhaseInstance {
    pub fn new(mut tiny_weights: Vec<BigUint>, candidates: Vec<(Vec<usize>, BigUint)>, capacity: BigUint, epsilon: f64, n: usize) -> Self {
        tiny_weights.sort_by(|a, b| b.cmp(a));
        SecondPhaseInstance { tiny_weights, candidates, capacity, epsilon, n }
    }

    pub fn tiny_total(&self) -> BigUint {
        self.tiny_weights.iter().sum()
    }

    /// Exact pair count by enumerating tiny subsets (at most 30 tiny items).
    pub fn count_exact(&self) -> Option<BigUint> {
        let k = self.tiny_weights.len();
        if k > 30 {
            return None;
        }
        let sums: Vec<BigUint> = subset_sums(&self.tiny_weights);
        let mut total = BigUint::zero();
        for (_, w) in &self.candidates {
            if *w > self.capacity {
                continue;
            }
            let room = &self.capacity - w;
            total += sums.iter().filter(|s| **s <= room).count();
        }
        Some(total)
    }

    /// Additive slack allowed next to the `(1 +- eps/6)` factor.
    pub fn additive_allowance(&self) -> f64 {
        let n = self.n.max(2) as f64;
        self.epsilon * self.candidates.len() as f64 * 2f64.powi(self.tiny_weights.len() as i32) / (90000.0 * n * n.log2().powi(2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cleanup {
    pub retained: SecondPhaseInstance,
    /// `absorbed * 2^|I0|`.
    pub base: BigUint,
    pub removed: usize,
    pub absorbed: usize,
}

/// Drop candidates that never fit and absorb those that fit with every tiny subset.
pub fn second_phase_cleanup(inst: &SecondPhaseInstance) -> Cleanup {
    let tiny = inst.tiny_total();
    let mut kept = Vec::new();
    let (mut removed, mut absorbed) = (0, 0);
    for c in &inst.candidates {
        if c.1 > inst.capacity {
            removed += 1;
        } else if &c.1 + &tiny <= inst.capacity {
            absorbed += 1;
        } else {
            kept.push(c.clone());
        }
    }
    let base = BigUint::from(absorbed) << inst.tiny_weights.len();
    let retained = SecondPhaseInstance { candidates: kept, ..inst.clone() };
    Cleanup { retained, base, removed, absorbed }
}

/// Number of heaviest tiny items handled one by one.
pub fn cutoff_r(tiny: usize, n: usize, epsilon: f64) -> usize {
    let n = n.max(2) as f64;
    let r = (100000.0 * n * n.log2().powi(2) / epsilon).log2().ceil() as usize;
    r.min(tiny)
}

#[derive(Clone, Debug, Serialize)]
pub struct SubproblemReport {
    pub j: usize,
    /// Candidates that fit with item `j` and every lighter tiny item.
    pub base: String,
    /// Candidates left for sampling.
    pub active: usize,
    pub draws: u64,
    pub hits: u64,
    /// Sum of `f` up to the threshold.
    pub mass: XReal,
    pub value: XReal,
}

#[derive(Clone, Debug, Serialize)]
pub struct SecondPhaseReport {
    pub value: XReal,
    pub base: String,
    pub removed: usize,
    pub absorbed: usize,
    pub retained: usize,
    pub r: usize,
    pub subproblems: Vec<SubproblemReport>,
    pub overflows: u64,
}

/// Sampler for all subsets of `items` (id, weight) whose total is `total`,
/// as a balanced tree of one-item leaves padded with `{emptyset}` leaves.
/// `n` is the original item count, which sets the log factors.
pub fn tiny_tree_sampler<R: rand::Rng + ?Sized>(
    items: &[(usize, BigUint)],
    total: &BigUint,
    n: usize,
    params: &AlgoParams,
    rng: &mut R,
) -> Result<Sampler, SamplerError> {
    let m = items.len().next_power_of_two().max(1);
    let h_max = m.trailing_zeros() as i32;
    let log_pow = params.log_pow(n);
    let scale = |h: i32| ceil_div_real(total, m as f64 * 2f64.powf(h as f64 / 2.0) * log_pow);
    let s_leaf = scale(h_max);
    let mut level: Vec<Sampler> = Vec::with_capacity(m);
    for k in 0..m {
        level.push(match items.get(k) {
            Some(it) => sampler::leaf_dp_build(std::slice::from_ref(it), &s_leaf, 1, 0.0, rng)?,
            None => Sampler::unit(s_leaf.clone()),
        });
    }
    for h in (1..=h_max).rev() {
        let s_up = scale(h - 1);
        let mut next = Vec::with_capacity(level.len() / 2);
        let mut it = level.into_iter();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            let merged = sampler::merge_samplers_with(a, b, None, params.conv_path, rng)?;
            next.push(sampler::round_sampler(merged, &s_up, rng)?);
        }
        level = next;
    }
    Ok(level.pop().unwrap())
}

/// Hybrid-approximate count of `{(X0, X_i) : W(X0) + W(X_i) <= T}`. Draws use
/// streams under `(params.seed, tag)`.
pub fn second_phase_estimate(inst: &SecondPhaseInstance, params: &AlgoParams, tag: u64) -> Result<SecondPhaseReport, SamplerError> {
    let clean = second_phase_cleanup(inst);
    let work = &clean.retained;
    let tiny = &work.tiny_weights;
    let r = cutoff_r(tiny.len(), inst.n, inst.epsilon);
    let mut value = XReal::from_biguint(&clean.base) + XReal::from_u64(work.candidates.len() as u64);
    let mut subproblems = Vec::new();
    let mut overflows = 0;
    let t_cap = &work.capacity;
    for j in 1..=r {
        if work.candidates.is_empty() {
            break;
        }
        let w_j = &tiny[j - 1];
        let rest: Vec<(usize, BigUint)> = (j..tiny.len()).map(|k| (k, tiny[k].clone())).collect();
        let w_rest: BigUint = rest.iter().map(|x| &x.1).sum();
        let full = BigUint::one() << rest.len();
        let mut base_j = BigUint::zero();
        let mut active: Vec<(Vec<usize>, BigUint)> = Vec::new();
        let mut active_w: Vec<&BigUint> = Vec::new();
        for (_, w) in &work.candidates {
            let with_j = w + w_j;
            if with_j > *t_cap {
                continue;
            }
            if &with_j + &w_rest <= *t_cap {
                base_j += &full;
            } else {
                // shift by W_low = T - w_j - W_rest, positive by the filter above;
                // the sampler only needs the candidate index
                active.push((Vec::new(), &with_j + &w_rest - t_cap));
                active_w.push(w);
            }
        }
        let mut report = SubproblemReport {
            j,
            base: base_j.to_string(),
            active: active.len(),
            draws: 0,
            hits: 0,
            mass: XReal::zero(),
            value: XReal::from_biguint(&base_j),
        };
        if !active.is_empty() {
            let mut brng = rng::stream(params.seed, &[tag, j as u64, 0]);
            let tree = tiny_tree_sampler(&rest, &w_rest, inst.n, params, &mut brng)?;
            let s = tree.scale().clone();
            let cands = sampler::nchoose1_build(&active, &s, &mut brng)?;
            let root = sampler::merge_samplers_with(tree, cands, None, params.conv_path, &mut brng)?;
            let slack = rest.len() as f64 * params.slack_pow(inst.n);
            let t_units = (&w_rest + ceil_div_real(&w_rest, slack)).div_ceil(&s);
            let t_units: u64 = t_units.try_into().unwrap_or(u64::MAX);
            let mass = root.count_fn().prefix_at(t_units);
            let draws = params.n_prime(inst.n);
            let room = t_cap - w_j;
            let hits: u64 = par_map(draws, params.threads, |i| {
                let mut q = rng::stream(params.seed, &[tag, j as u64, 1, i]);
                let Some(y) = root.query(t_units, &mut q) else { return 0 };
                let c = y.candidate.expect("candidate present");
                let tw: BigUint = y.items.iter().map(|&k| &tiny[k]).sum();
                u64::from(tw + active_w[c] <= room)
            })
            .into_iter()
            .sum();
            overflows += root.overflow_count();
            let z = mass * XReal::from_u64(hits) / XReal::from_u64(draws);
            report.draws = draws;
            report.hits = hits;
            report.mass = mass;
            report.value = report.value + z;
        }
        value += report.value;
        subproblems.push(report);
    }
    Ok(SecondPhaseReport {
        value,
        base: clean.base.to_string(),
        removed: clean.removed,
        absorbed: clean.absorbed,
        retained: work.candidates.len(),
        r,
        subproblems,
        overflows,
    })
}

fn subset_sums(ws: &[BigUint]) -> Vec<BigUint> {
    let mut sums = vec![BigUint::zero()];
    for w in ws {
        let more: Vec<BigUint> = sums.iter().map(|s| s + w).collect();
        sums.extend(more);
    }
    sums
}
