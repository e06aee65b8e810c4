//! Knapsack instances, the text file format, generators and parameters.

use std::fmt::Write as _;

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum InstanceError {
    #[error("malformed token `{0}`")]
    Malformed(String),
    #[error("header says {expected} weights, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("weight must be positive")]
    NonPositiveWeight,
    #[error("weight {weight} exceeds capacity {capacity}")]
    WeightExceedsCapacity { weight: String, capacity: String },
    #[error("capacity must be positive")]
    NonPositiveCapacity,
    #[error("empty input")]
    Empty,
    #[error("generator: {0}")]
    Generator(String),
    #[error("parameters: {0}")]
    Params(String),
}

/// Weights sorted non-decreasing, each in `(0, T]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct KnapsackInstance {
    weights: Vec<BigUint>,
    capacity: BigUint,
}

impl KnapsackInstance {
    pub fn new(mut weights: Vec<BigUint>, capacity: BigUint) -> Result<Self, InstanceError> {
        if capacity.is_zero() {
            return Err(InstanceError::NonPositiveCapacity);
        }
        for w in &weights {
            if w.is_zero() {
                return Err(InstanceError::NonPositiveWeight);
            }
            if *w > capacity {
                return Err(InstanceError::WeightExceedsCapacity {
                    weight: w.to_string(),
                    capacity: capacity.to_string(),
                });
            }
        }
        weights.sort();
        Ok(KnapsackInstance { weights, capacity })
    }

    pub fn from_u64(weights: &[u64], capacity: u64) -> Result<Self, InstanceError> {
        Self::new(weights.iter().map(|&w| BigUint::from(w)).collect(), BigUint::from(capacity))
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[BigUint] {
        &self.weights
    }

    pub fn capacity(&self) -> &BigUint {
        &self.capacity
    }

    pub fn total_weight(&self) -> BigUint {
        self.weights.iter().sum()
    }

    /// Total weight of a set of item ids.
    pub fn weight_of(&self, items: &[usize]) -> BigUint {
        items.iter().map(|&i| &self.weights[i]).sum()
    }

    /// Every subset fits.
    pub fn is_trivial(&self) -> bool {
        self.total_weight() <= self.capacity
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n(), self.capacity);
        let ws: Vec<String> = self.weights.iter().map(|w| w.to_string()).collect();
        s.push_str(&ws.join(" "));
        s.push('\n');
        s
    }

    /// FNV-1a over the text form, as 16 hex digits.
    pub fn digest(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        let mut out = String::new();
        write!(out, "{:016x}", h).unwrap();
        out
    }
}

pub fn parse_instance(text: &str) -> Result<KnapsackInstance, InstanceError> {
    let mut toks = text.split_whitespace();
    let n_tok = toks.next().ok_or(InstanceError::Empty)?;
    let n: usize = n_tok.parse().map_err(|_| InstanceError::Malformed(n_tok.to_string()))?;
    let t_tok = toks.next().ok_or(InstanceError::Malformed("<missing capacity>".into()))?;
    let capacity = parse_uint(t_tok)?;
    let mut weights = Vec::with_capacity(n);
    for tok in toks {
        weights.push(parse_uint(tok)?);
    }
    if weights.len() != n {
        return Err(InstanceError::CountMismatch { expected: n, found: weights.len() });
    }
    KnapsackInstance::new(weights, capacity)
}

fn parse_uint(tok: &str) -> Result<BigUint, InstanceError> {
    if tok.starts_with('-') && tok[1..].bytes().all(|b| b.is_ascii_digit()) && tok.len() > 1 {
        return Err(InstanceError::NonPositiveWeight);
    }
    if tok.is_empty() || !tok.bytes().all(|b| b.is_ascii_digit()) {
        return Err(InstanceError::Malformed(tok.to_string()));
    }
    BigUint::parse_bytes(tok.as_bytes(), 10).ok_or_else(|| InstanceError::Malformed(tok.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafVariant {
    Auto,
    Dp,
    Cc,
}

/// How a weight class picks between hashing into bins and the small-items
/// sampler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseSplit {
    /// `m < 20 l^2 logPow^2` selects bins.
    Paper,
    /// Small-items whenever every weight of the class fits under its scale.
    Applicable,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AlgoParams {
    pub epsilon: f64,
    pub seed: u64,
    /// B = ceil(lg^bin_cap_exp) + 4 where lg = log2(n/eps).
    pub bin_cap_exp: f64,
    /// logPow = lg^scale_exp, divisor in every scale S_h.
    pub scale_exp: f64,
    /// Declared per-node delta is at most (eps/n)^delta_exp.
    pub delta_exp: f64,
    /// Sample multiplier 16 * ceil(lg)^sample_exp.
    pub sample_exp: f64,
    /// Slack power in the relaxed threshold t.
    pub slack_exp: f64,
    /// Inputs are scaled until T and min weight reach (n/eps)^input_scale_exp.
    pub input_scale_exp: f64,
    pub theory_mode: bool,
    pub leaf_variant: LeafVariant,
    pub case_split: CaseSplit,
    /// Product used by merges.
    #[serde(default)]
    pub conv_path: crate::convolution::ConvPath,
    /// Wall-clock budget; exceeding it aborts with estimate 0.
    pub time_budget_ms: Option<u64>,
    pub threads: usize,
    /// Upper limit on Monte Carlo draws per stage (benchmarking only).
    pub max_queries: Option<u64>,
    /// K = ceil(dyer_c * sqrt(n ln n)).
    pub dyer_c: f64,
    /// Dyer draws ceil(dyer_sample_mult * n / eps^2) samples.
    pub dyer_sample_mult: f64,
    /// Refuse arrays longer than this in any single node.
    pub max_len: usize,
}

impl Default for AlgoParams {
    fn default() -> Self {
        AlgoParams {
            epsilon: 0.25,
            seed: 0,
            bin_cap_exp: 1.0,
            scale_exp: 2.0,
            delta_exp: 3.0,
            sample_exp: 1.0,
            slack_exp: 1.0,
            input_scale_exp: 3.0,
            theory_mode: false,
            leaf_variant: LeafVariant::Auto,
            case_split: CaseSplit::Paper,
            conv_path: crate::convolution::ConvPath::Auto,
            time_budget_ms: None,
            threads: 1,
            max_queries: None,
            dyer_c: 4.0,
            dyer_sample_mult: 16.0,
            max_len: 1 << 26,
        }
    }
}

impl AlgoParams {
    pub fn with_epsilon(epsilon: f64, seed: u64) -> Self {
        AlgoParams { epsilon, seed, ..Default::default() }
    }

    /// Light knobs for timing runs at large n: B = 5, logPow = lg, per-node
    /// delta (eps/n) and at most 4000 draws per stage.
    pub fn bench(epsilon: f64, seed: u64) -> Self {
        AlgoParams {
            epsilon,
            seed,
            bin_cap_exp: 0.0,
            scale_exp: 1.0,
            delta_exp: 1.0,
            max_queries: Some(4000),
            ..Default::default()
        }
    }

    /// The literal constants: B = lg^10, logPow = lg^50, sample factor 5000 lg^10.
    pub fn theory(epsilon: f64, seed: u64) -> Self {
        AlgoParams {
            epsilon,
            seed,
            bin_cap_exp: 10.0,
            scale_exp: 50.0,
            delta_exp: 10.0,
            sample_exp: 10.0,
            slack_exp: 10.0,
            input_scale_exp: 50.0,
            theory_mode: true,
            ..Default::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), InstanceError> {
        let e = self.epsilon;
        if !(e > 0.0 && e <= 0.25) {
            return Err(InstanceError::Params(format!("epsilon {} outside (0, 1/4]", e)));
        }
        if self.theory_mode {
            let lo = (n as f64).powf(-1.5);
            if !(e > lo && e <= 1e-4) {
                return Err(InstanceError::Params(format!(
                    "theory mode needs epsilon in ({}, 1e-4], got {}",
                    lo, e
                )));
            }
        }
        if self.threads == 0 {
            return Err(InstanceError::Params("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// log2(n/eps), at least 1.
    pub fn lg(&self, n: usize) -> f64 {
        (n.max(1) as f64 / self.epsilon).log2().max(1.0)
    }

    /// Per-bin cardinality cap B.
    pub fn bin_cap(&self, n: usize) -> usize {
        let b = self.lg(n).powf(self.bin_cap_exp).ceil();
        let b = if self.theory_mode { b } else { b + 4.0 };
        b.min(1e6) as usize
    }

    pub fn log_pow(&self, n: usize) -> f64 {
        self.lg(n).powf(self.scale_exp)
    }

    pub fn slack_pow(&self, n: usize) -> f64 {
        self.lg(n).powf(self.slack_exp)
    }

    /// Upper bound on the declared delta of any node, (eps/n)^delta_exp.
    pub fn delta_target(&self, n: usize) -> f64 {
        (self.epsilon / n.max(1) as f64).powf(self.delta_exp).max(f64::MIN_POSITIVE)
    }

    pub fn sample_mult(&self, n: usize) -> f64 {
        if self.theory_mode {
            5000.0 * self.lg(n).powf(10.0)
        } else {
            16.0 * self.lg(n).ceil().powf(self.sample_exp)
        }
    }

    /// Phase-one draws N.
    pub fn n_samples(&self, n: usize, ell: u64) -> u64 {
        let base = if self.theory_mode {
            5000.0 * (n.max(2) as f64).log2().powf(10.0)
        } else {
            self.sample_mult(n)
        };
        let v = (base * n as f64 / (ell as f64 * self.epsilon * self.epsilon)).ceil();
        self.cap_queries(v)
    }

    /// Second-phase draws per subproblem N'.
    pub fn n_prime(&self, n: usize) -> u64 {
        let v = (self.sample_mult(n) / (self.epsilon * self.epsilon)).ceil();
        self.cap_queries(v)
    }

    fn cap_queries(&self, v: f64) -> u64 {
        let v = v.min(u64::MAX as f64 / 2.0).max(1.0) as u64;
        match self.max_queries {
            Some(c) => v.min(c.max(1)),
            None => v,
        }
    }

    pub fn input_scale_exponent(&self) -> f64 {
        self.input_scale_exp
    }
}

/// Smallest power of two `C = 2^k` with `min W * C >= bound` (and hence `T * C >= bound`).
pub fn scale_to_bound(inst: &KnapsackInstance, bound: &BigUint) -> (KnapsackInstance, u64) {
    let reference = inst.weights.first().unwrap_or(&inst.capacity);
    let mut k = bound.bits().saturating_sub(reference.bits());
    while (reference << k) < *bound {
        k += 1;
    }
    while k > 0 && (reference << (k - 1)) >= *bound {
        k -= 1;
    }
    let scaled = KnapsackInstance {
        weights: inst.weights.iter().map(|w| w << k).collect(),
        capacity: &inst.capacity << k,
    };
    (scaled, k)
}

/// The requirement `ceil((n/eps)^e)` as an integer; huge values fall back to
/// a power of two of the same magnitude.
pub fn scale_bound(n: usize, epsilon: f64, exponent: f64) -> BigUint {
    let lg = exponent * (n.max(1) as f64 / epsilon).log2();
    if lg <= 0.0 {
        return BigUint::one();
    }
    if lg < 1000.0 {
        let v = 2f64.powf(lg).ceil();
        if v < 1.8e19 {
            return BigUint::from(v as u64);
        }
        // f64 mantissa is exact enough at this magnitude for a lower bound
        let bits = v.log2().floor() as u64;
        let mant = (v / 2f64.powi(bits as i32 - 52)).round() as u64;
        return BigUint::from(mant) << (bits - 52);
    }
    BigUint::one() << (lg.ceil() as u64)
}

/// Scale so that `T` and every weight are at least `(n/eps)^e`. Counting is
/// invariant under this.
pub fn scale_instance(inst: &KnapsackInstance, params: &AlgoParams) -> KnapsackInstance {
    let bound = scale_bound(inst.n(), params.epsilon, params.input_scale_exponent());
    scale_to_bound(inst, &bound).0
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GenKind {
    Uniform,
    BoundedRatio { ell: u64 },
    TinyAdversarial,
    /// `(m, count)` pairs: `count` items drawn from `(T/m, 2T/m]`.
    CustomClasses(Vec<(u64, usize)>),
}

pub fn generate(kind: &GenKind, n: usize, capacity: &BigUint, seed: u64) -> Result<KnapsackInstance, InstanceError> {
    if n == 0 {
        return Err(InstanceError::Generator("n must be at least 1".into()));
    }
    if *capacity < BigUint::from(n) {
        return Err(InstanceError::Generator("T must be at least n".into()));
    }
    let mut r = rng::stream(seed, &[0x6765_6e]);
    let t = capacity;
    let weights = match kind {
        GenKind::Uniform => {
            let hi = t + 1u32;
            (0..n).map(|_| r.gen_biguint_range(&BigUint::one(), &hi)).collect()
        }
        GenKind::BoundedRatio { ell } => {
            if *ell < 2 {
                return Err(InstanceError::Generator("bounded_ratio needs ell >= 2".into()));
            }
            let lo = t / *ell;
            let hi = (t * 2u32) / *ell;
            if hi <= lo {
                return Err(InstanceError::Generator(format!("empty range ({}, {}]", lo, hi)));
            }
            let lo1 = &lo + 1u32;
            let hi1 = &hi + 1u32;
            (0..n).map(|_| r.gen_biguint_range(&lo1, &hi1)).collect()
        }
        GenKind::TinyAdversarial => {
            let ell = ceil_log2(n as u64).max(1);
            let nn = BigUint::from(n);
            let n10 = nn.pow(10);
            let large = (t * (&n10 - 1u32)) / (&n10 * ell);
            let large = if large.is_zero() { BigUint::one() } else { large };
            let tiny = ((t * 10u32) / nn.pow(11)).max(BigUint::one());
            let big_count = n / 2;
            let mut ws = vec![large; big_count];
            ws.extend(std::iter::repeat(tiny).take(n - big_count));
            ws
        }
        GenKind::CustomClasses(classes) => {
            let total: usize = classes.iter().map(|c| c.1).sum();
            if total != n {
                return Err(InstanceError::Generator(format!("classes hold {} items, n = {}", total, n)));
            }
            let mut ws = Vec::with_capacity(n);
            for &(m, count) in classes {
                if m < 1 {
                    return Err(InstanceError::Generator("class m must be positive".into()));
                }
                let lo = t / m;
                let hi = ((t * 2u32) / m).min(t.clone());
                if hi <= lo {
                    return Err(InstanceError::Generator(format!("class {} has empty range", m)));
                }
                let lo1 = &lo + 1u32;
                let hi1 = &hi + 1u32;
                for _ in 0..count {
                    ws.push(r.gen_biguint_range(&lo1, &hi1));
                }
            }
            ws
        }
    };
    KnapsackInstance::new(weights, capacity.clone())
}

pub fn ceil_log2(x: u64) -> u64 {
    if x <= 1 {
        0
    } else {
        64 - (x - 1).leading_zeros() as u64
    }
}

/// Parse `"2:3,8:5"` into class specs.
pub fn parse_classes(spec: &str) -> Result<Vec<(u64, usize)>, InstanceError> {
    spec.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|part| {
            let (m, c) = part.trim().split_once(':').ok_or_else(|| InstanceError::Malformed(part.to_string()))?;
            let m = m.parse().map_err(|_| InstanceError::Malformed(part.to_string()))?;
            let c = c.parse().map_err(|_| InstanceError::Malformed(part.to_string()))?;
            Ok((m, c))
        })
        .collect()
}

/// Exact ratio `a / b` of big integers as f64.
pub fn ratio_f64(a: &BigUint, b: &BigUint) -> f64 {
    let sh = a.bits().max(b.bits()).saturating_sub(60);
    let a = (a >> sh).to_f64().unwrap_or(0.0);
    let b = (b >> sh).to_f64().unwrap_or(0.0);
    a / b
}

/// The usual `Rng` bound for helpers that draw a few numbers.
pub fn draw_below<R: Rng + ?Sized>(r: &mut R, n: &BigUint) -> BigUint {
    r.gen_biguint_below(n)
}

/// `max(1, ceil(num / den))` for a real `den >= 1`, with the divisor carried
/// to 40 fractional bits.
pub fn ceil_div_real(num: &BigUint, den: f64) -> BigUint {
    let den = den.max(1.0);
    let e = den.log2().floor() as i32;
    let mant = (den / 2f64.powi(e - 40)).floor() as u64;
    let fixed = BigUint::from(mant.max(1));
    let q = (num << (40 - e as i64).max(0) as u64).div_ceil(&(fixed << (e - 40).max(0) as u64));
    if q.is_zero() {
        BigUint::one()
    } else {
        q
    }
}
