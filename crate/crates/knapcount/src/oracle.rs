//! Exact counting and distribution checks. Everything else is tested against
//! this module, so it stays simple.

use std::collections::HashMap;
use std::hash::Hash;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

use crate::instance::KnapsackInstance;

pub type ExactCount = BigUint;

pub const MAX_ENUM_N: usize = 30;
pub const MAX_DP_CAPACITY: u64 = 10_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("n = {0} is too large for enumeration (max {MAX_ENUM_N})")]
    TooManyItems(usize),
    #[error("capacity too large for the table (max {MAX_DP_CAPACITY})")]
    CapacityTooLarge,
    #[error("band ({0}, {1}] is empty")]
    EmptyBand(String, String),
    #[error("sample outside the target support")]
    OutsideSupport,
    #[error("target distribution is empty")]
    EmptyTarget,
}

fn subset_sums(ws: &[BigUint]) -> Vec<BigUint> {
    let mut sums = vec![BigUint::zero()];
    for w in ws {
        let extra: Vec<BigUint> = sums.iter().map(|s| s + w).collect();
        sums.extend(extra);
    }
    sums.sort();
    sums
}

/// `|{X : W_X <= c}|` by meet in the middle.
pub fn count_at_most(weights: &[BigUint], c: &BigUint) -> Result<ExactCount, OracleError> {
    if weights.len() > MAX_ENUM_N {
        return Err(OracleError::TooManyItems(weights.len()));
    }
    let (a, b) = weights.split_at(weights.len() / 2);
    let left = subset_sums(a);
    let right = subset_sums(b);
    // for ascending left sums the admissible right prefix shrinks
    let mut j = right.len();
    let mut total: u64 = 0;
    for s in &left {
        while j > 0 && s + &right[j - 1] > *c {
            j -= 1;
        }
        if j == 0 {
            break;
        }
        total += j as u64;
    }
    Ok(BigUint::from(total))
}

pub fn count_enum(inst: &KnapsackInstance) -> Result<ExactCount, OracleError> {
    count_at_most(inst.weights(), inst.capacity())
}

/// `|{X : lo < W_X <= hi}|`.
pub fn count_band(inst: &KnapsackInstance, lo: &BigUint, hi: &BigUint) -> Result<ExactCount, OracleError> {
    if lo >= hi {
        return Err(OracleError::EmptyBand(lo.to_string(), hi.to_string()));
    }
    let upper = count_at_most(inst.weights(), hi)?;
    let lower = count_at_most(inst.weights(), lo)?;
    Ok(upper - lower)
}

/// Capacity-indexed table of exact-weight counts.
pub fn count_dp(inst: &KnapsackInstance) -> Result<ExactCount, OracleError> {
    let t = inst.capacity().to_u64().filter(|&t| t <= MAX_DP_CAPACITY).ok_or(OracleError::CapacityTooLarge)?;
    let t = t as usize;
    let ws: Vec<usize> = inst.weights().iter().map(|w| w.to_usize().unwrap()).collect();
    if ws.len() < 127 {
        let mut dp = vec![0u128; t + 1];
        dp[0] = 1;
        for &w in &ws {
            for c in (w..=t).rev() {
                dp[c] += dp[c - w];
            }
        }
        Ok(dp.iter().map(|&v| BigUint::from(v)).sum())
    } else {
        let mut dp = vec![BigUint::zero(); t + 1];
        dp[0] = BigUint::from(1u32);
        for &w in &ws {
            for c in (w..=t).rev() {
                let add = dp[c - w].clone();
                dp[c] += add;
            }
        }
        Ok(dp.into_iter().sum())
    }
}

/// All feasible subsets as sorted id lists (n <= 20).
pub fn enumerate_solutions(inst: &KnapsackInstance) -> Result<Vec<Vec<usize>>, OracleError> {
    let n = inst.n();
    if n > 20 {
        return Err(OracleError::TooManyItems(n));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let items: Vec<usize> = (0..n).filter(|&i| mask >> i & 1 == 1).collect();
        if inst.weight_of(&items) <= *inst.capacity() {
            out.push(items);
        }
    }
    Ok(out)
}

/// Half the L1 distance between the sample frequencies and `target`.
pub fn empirical_tv<K, I>(samples: I, target: &HashMap<K, f64>) -> Result<f64, OracleError>
where
    K: Hash + Eq,
    I: IntoIterator<Item = K>,
{
    if target.is_empty() {
        return Err(OracleError::EmptyTarget);
    }
    let mut counts: HashMap<K, u64> = HashMap::new();
    let mut total = 0u64;
    for s in samples {
        if !target.contains_key(&s) {
            return Err(OracleError::OutsideSupport);
        }
        *counts.entry(s).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Ok(1.0);
    }
    let mut l1 = 0.0;
    for (k, &p) in target {
        let q = counts.get(k).copied().unwrap_or(0) as f64 / total as f64;
        l1 += (q - p).abs();
    }
    Ok(l1 / 2.0)
}

/// Uniform distribution over the given keys.
pub fn uniform_target<K: Hash + Eq>(keys: impl IntoIterator<Item = K>) -> HashMap<K, f64> {
    let keys: Vec<K> = keys.into_iter().collect();
    let p = 1.0 / keys.len().max(1) as f64;
    keys.into_iter().map(|k| (k, p)).collect()
}
