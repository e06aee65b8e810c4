//! The sub-quadratic estimator: weight classes, per-class sampler trees, a
//! global product sampler, Monte Carlo draws at a relaxed capacity and the
//! tiny-item correction.


use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::clock::Clock;
use crate::convolution::ConvPath;
pub use crate::dyer::estimate_dyer;
use crate::instance::{ceil_div_real, ceil_log2, scale_instance, AlgoParams, CaseSplit, InstanceError, KnapsackInstance, LeafVariant};
use crate::par::par_map;
use crate::rng;
use crate::sampler::{self, Sampler, SamplerError};
use crate::secondphase::{second_phase_estimate, SecondPhaseInstance, SecondPhaseReport};
use crate::xfloat::XReal;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error(transparent)]
    Params(#[from] InstanceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error("{0}")]
    TooLarge(String),
}

/// Index `i*` (1-based) of the last item, heaviest first, whose predecessors
/// weigh less than `T/2`.
pub fn heavy_prefix(inst: &KnapsackInstance) -> usize {
    let t = inst.capacity();
    let mut acc = BigUint::zero();
    let mut i_star = 0;
    for (i, w) in inst.weights().iter().rev().enumerate() {
        if &acc * 2u32 >= *t {
            break;
        }
        i_star = i + 1;
        acc += w;
    }
    i_star
}

fn in_class(w: &BigUint, t: &BigUint, m: u64) -> bool {
    // T/m < w <= 2T/m
    w * m > *t && w * m <= t * 2u32
}

/// Power of two `l` in `[2, 2^ceil(log2 4n)]` maximizing the weight of the
/// heaviest-first prefix that falls in `(T/l, 2T/l]`; ties go to smaller `l`.
pub fn find_popular_ell(inst: &KnapsackInstance) -> u64 {
    let t = inst.capacity();
    let i_star = heavy_prefix(inst);
    let prefix: Vec<&BigUint> = inst.weights().iter().rev().take(i_star).collect();
    let top = ceil_log2(4 * inst.n() as u64).max(1);
    let mut best = (BigUint::zero(), 2u64);
    for k in 1..=top {
        let ell = 1u64 << k;
        let score: BigUint = prefix.iter().filter(|w| in_class(w, t, ell)).map(|w| *w).sum();
        if score > best.0 {
            best = (score, ell);
        }
    }
    best.1
}

/// Items of the heaviest-first prefix in `(T/l, 2T/l]`.
pub fn popular_count(inst: &KnapsackInstance, ell: u64) -> usize {
    let t = inst.capacity();
    inst.weights().iter().rev().take(heavy_prefix(inst)).filter(|w| in_class(w, t, ell)).count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightClass {
    /// Bin count: `2^j` for `(T/2^j, 2T/2^j]`, or the power of two in `[2n, 4n)` for the last class.
    pub m: u64,
    pub last: bool,
    /// Item indices into the instance.
    pub items: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeightClassPartition {
    pub g: u32,
    pub classes: Vec<WeightClass>,
}

/// Classes `m = 2, 4, ..., 2^g` with `g = ceil(log2 n)`, then everything of
/// weight at most `T/2^g`. Empty classes are kept.
pub fn partition_classes(inst: &KnapsackInstance) -> WeightClassPartition {
    let n = inst.n();
    let g = ceil_log2(n as u64) as u32;
    let t = inst.capacity();
    let mut classes: Vec<WeightClass> = (1..=g).map(|j| WeightClass { m: 1 << j, last: false, items: Vec::new() }).collect();
    let m_last = (2 * n as u64).next_power_of_two().max(2);
    let mut last = WeightClass { m: m_last, last: true, items: Vec::new() };
    for (i, w) in inst.weights().iter().enumerate() {
        if (w << g) <= *t {
            last.items.push(i);
            continue;
        }
        // smallest j with w > T/2^j
        let j = (1..=g).find(|&j| (w << j) > *t).unwrap();
        classes[j as usize - 1].items.push(i);
    }
    classes.push(last);
    WeightClassPartition { g, classes }
}

/// Shared constants of one run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub n: usize,
    pub ell: u64,
    pub log_pow: f64,
    pub bin_cap: usize,
    pub delta_leaf: f64,
    pub root_scale: BigUint,
}

impl Plan {
    pub fn new(inst: &KnapsackInstance, ell: u64, part: &WeightClassPartition, params: &AlgoParams) -> Plan {
        let n = inst.n();
        let log_pow = params.log_pow(n);
        let h_max = part.classes.iter().map(|c| c.m.trailing_zeros()).max().unwrap_or(1) as i32;
        let folds = part.classes.len() as i32;
        let delta_leaf = (params.delta_target(n) / 8f64.powi(h_max + folds + 1)).max(f64::MIN_POSITIVE);
        let root_scale = ceil_div_real(inst.capacity(), ell as f64 * log_pow);
        Plan { n, ell, log_pow, bin_cap: params.bin_cap(n), delta_leaf, root_scale }
    }

    /// `S_h = ceil(T / (2^{h/2} l logPow))`.
    pub fn level_scale(&self, t: &BigUint, h: u32) -> BigUint {
        ceil_div_real(t, 2f64.powf(h as f64 / 2.0) * self.ell as f64 * self.log_pow)
    }
}

fn use_dp_leaves(plan: &Plan, params: &AlgoParams) -> bool {
    match params.leaf_variant {
        LeafVariant::Dp => true,
        LeafVariant::Cc => false,
        LeafVariant::Auto => (plan.ell as f64) <= (plan.n as f64).sqrt(),
    }
}

/// Which construction a class gets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClassCase {
    Bins,
    SmallItems,
}

pub fn class_case(inst: &KnapsackInstance, class: &WeightClass, plan: &Plan, params: &AlgoParams) -> ClassCase {
    let h = class.m.trailing_zeros();
    let s_leaf = plan.level_scale(inst.capacity(), h);
    let fits = class.items.iter().all(|&i| inst.weights()[i] <= s_leaf);
    let wants = match params.case_split {
        CaseSplit::Paper => class.m as f64 >= 20.0 * (plan.ell as f64).powi(2) * plan.log_pow.powi(2),
        CaseSplit::Applicable => true,
    };
    if wants && fits {
        ClassCase::SmallItems
    } else {
        ClassCase::Bins
    }
}

/// Sampler for one weight class at the root scale.
pub fn build_class_sampler<R: Rng + ?Sized>(
    inst: &KnapsackInstance,
    class: &WeightClass,
    plan: &Plan,
    params: &AlgoParams,
    rng: &mut R,
) -> Result<Sampler, EstimateError> {
    let t = inst.capacity();
    let h_max = class.m.trailing_zeros();
    let s_leaf = plan.level_scale(t, h_max);
    let items: Vec<(usize, BigUint)> = class.items.iter().map(|&i| (i, inst.weights()[i].clone())).collect();
    if class_case(inst, class, plan, params) == ClassCase::SmallItems {
        let delta = plan.delta_leaf * 8f64.powi(h_max as i32);
        let s = sampler::small_items_build(&items, &s_leaf, delta, rng)?;
        return Ok(sampler::round_sampler(s, &plan.root_scale, rng)?);
    }
    let m = class.m as usize;
    let mut bins: Vec<Vec<(usize, BigUint)>> = vec![Vec::new(); m];
    for it in items {
        bins[rng.gen_range(0..m as u64) as usize].push(it);
    }
    let dp = use_dp_leaves(plan, params);
    let mut level: Vec<Sampler> = Vec::with_capacity(m);
    for bin in &bins {
        let leaf = if bin.is_empty() {
            Sampler::unit(s_leaf.clone())
        } else if dp {
            sampler::leaf_dp_build(bin, &s_leaf, plan.bin_cap, plan.delta_leaf, rng)?
        } else {
            sampler::leaf_cc_build(bin, &s_leaf, plan.bin_cap, plan.delta_leaf, rng)?
        };
        if leaf.len() as usize > params.max_len {
            return Err(EstimateError::TooLarge(format!("leaf of length {}", leaf.len())));
        }
        level.push(leaf);
    }
    for h in (1..=h_max).rev() {
        let s_up = if h == 1 { plan.root_scale.clone() } else { plan.level_scale(t, h - 1) };
        let mut next = Vec::with_capacity(level.len() / 2);
        let mut it = level.into_iter();
        while let (Some(a), Some(b)) = (it.next(), it.next()) {
            let merged = sampler::merge_samplers_with(a, b, None, params.conv_path, rng)?;
            next.push(sampler::round_sampler(merged, &s_up, rng)?);
        }
        level = next;
    }
    let root = level.pop().unwrap();
    if root.scale() != &plan.root_scale {
        return Ok(sampler::round_sampler(root, &plan.root_scale, rng)?);
    }
    Ok(root)
}

/// Left fold of merges over the class samplers.
pub fn build_global_sampler<R: Rng + ?Sized>(classes: Vec<Sampler>, path: ConvPath, rng: &mut R) -> Result<Sampler, EstimateError> {
    let mut it = classes.into_iter();
    let mut acc = it.next().ok_or_else(|| EstimateError::TooLarge("no classes".into()))?;
    for c in it {
        acc = sampler::merge_samplers_with(acc, c, None, path, rng)?;
    }
    Ok(acc)
}

#[derive(Debug)]
pub struct PhaseOneOutput {
    pub ell: u64,
    pub partition: WeightClassPartition,
    pub sampler: Sampler,
    /// Relaxed threshold in units of the root scale.
    pub t: u64,
    pub omega_prime: XReal,
    pub tiny_items: Vec<usize>,
    /// Non-tiny part of each draw with its original total weight.
    pub samples: Vec<(Vec<usize>, BigUint)>,
    pub ledger: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StageTimes {
    pub scale_ms: u64,
    pub classes_ms: u64,
    pub global_ms: u64,
    pub queries_ms: u64,
    pub second_phase_ms: u64,
    pub total_ms: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub algo: String,
    pub estimate: XReal,
    pub epsilon: f64,
    pub seed: u64,
    pub n: usize,
    /// `sum W <= T`: the answer is `2^n` with no sampling.
    pub trivial: bool,
    pub aborted: bool,
    pub ell: Option<u64>,
    pub class_sizes: Vec<(u64, usize)>,
    pub samples: u64,
    pub tiny: usize,
    pub t: u64,
    pub root_len: u64,
    pub root_delta: f64,
    pub ledger: f64,
    pub overflows: u64,
    pub omega_prime: XReal,
    pub second_phase: Option<SecondPhaseReport>,
    pub times: StageTimes,
}

impl EstimateReport {
    pub fn trivial(algo: &str, n: usize, params: &AlgoParams) -> EstimateReport {
        EstimateReport {
            algo: algo.to_string(),
            estimate: XReal::pow2(n as i64),
            epsilon: params.epsilon,
            seed: params.seed,
            n,
            trivial: true,
            aborted: false,
            ell: None,
            class_sizes: Vec::new(),
            samples: 0,
            tiny: 0,
            t: 0,
            root_len: 0,
            root_delta: 0.0,
            ledger: 0.0,
            overflows: 0,
            omega_prime: XReal::zero(),
            second_phase: None,
            times: StageTimes::default(),
        }
    }
}

/// Build everything up to and including the phase-one draws on an already
/// scaled instance.
pub fn phase_one(inst: &KnapsackInstance, params: &AlgoParams) -> Result<PhaseOneOutput, EstimateError> {
    phase_one_timed(inst, params, &mut StageTimes::default(), &mut Clock::new(None)).map(|o| o.expect("no budget"))
}

fn phase_one_timed(inst: &KnapsackInstance, params: &AlgoParams, times: &mut StageTimes, clock: &mut Clock) -> Result<Option<PhaseOneOutput>, EstimateError> {
    let n = inst.n();
    let t_cap = inst.capacity();
    let ell = find_popular_ell(inst);
    let partition = partition_classes(inst);
    let plan = Plan::new(inst, ell, &partition, params);
    let nonempty: Vec<(usize, &WeightClass)> = partition.classes.iter().enumerate().filter(|(_, c)| !c.items.is_empty()).collect();
    let built = par_map(nonempty.len() as u64, params.threads, |k| {
        let (idx, class) = nonempty[k as usize];
        let mut r = rng::stream(params.seed, &[1, idx as u64]);
        build_class_sampler(inst, class, &plan, params, &mut r)
    });
    let mut classes = Vec::with_capacity(built.len());
    for b in built {
        classes.push(b?);
    }
    times.classes_ms = clock.lap();
    if clock.over() {
        return Ok(None);
    }
    let sampler = build_global_sampler(classes, params.conv_path, &mut rng::stream(params.seed, &[2]))?;
    let s0 = sampler.scale().clone();
    let slack = ell as f64 * params.slack_pow(n);
    let t_units = (t_cap + ceil_div_real(t_cap, slack)).div_ceil(&s0).to_u64().unwrap_or(u64::MAX);
    let omega_prime = sampler.count_fn().prefix_at(t_units);
    times.global_ms = clock.lap();
    if clock.over() {
        return Ok(None);
    }
    let draws = params.n_samples(n, ell);
    let weights = inst.weights();
    let samples = par_map(draws, params.threads, |i| {
        let mut r = rng::stream(params.seed, &[3, i]);
        let q = sampler.query(t_units, &mut r).expect("the empty set always fits");
        let w: BigUint = q.items.iter().map(|&k| &weights[k]).sum();
        (q.items, w)
    });
    times.queries_ms = clock.lap();
    Ok(Some(PhaseOneOutput {
        ell,
        partition,
        tiny_items: sampler.tiny_items().to_vec(),
        ledger: sampler.ledger(),
        sampler,
        t: t_units,
        omega_prime,
        samples,
    }))
}

/// End-to-end estimate of the number of solutions.
pub fn estimate_subquadratic(inst: &KnapsackInstance, params: &AlgoParams) -> Result<EstimateReport, EstimateError> {
    params.validate(inst.n())?;
    let n = inst.n();
    if inst.is_trivial() {
        return Ok(EstimateReport::trivial("subquad", n, params));
    }
    let mut clock = Clock::new(params.time_budget_ms);
    let mut times = StageTimes::default();
    let scaled = scale_instance(inst, params);
    times.scale_ms = clock.lap();
    let mut report = EstimateReport::trivial("subquad", n, params);
    report.trivial = false;
    report.estimate = XReal::zero();
    let Some(one) = phase_one_timed(&scaled, params, &mut times, &mut clock)? else {
        report.aborted = true;
        times.total_ms = clock.total();
        report.times = times;
        return Ok(report);
    };
    report.ell = Some(one.ell);
    report.class_sizes = one.partition.classes.iter().map(|c| (c.m, c.items.len())).collect();
    report.samples = one.samples.len() as u64;
    report.tiny = one.tiny_items.len();
    report.t = one.t;
    report.root_len = one.sampler.len();
    report.root_delta = one.sampler.delta();
    report.omega_prime = one.omega_prime;
    if clock.over() {
        report.aborted = true;
        times.total_ms = clock.total();
        report.times = times;
        return Ok(report);
    }
    let tiny_w: Vec<BigUint> = one.tiny_items.iter().map(|&i| scaled.weights()[i].clone()).collect();
    let draws = one.samples.len() as u64;
    let sp_inst = SecondPhaseInstance::new(tiny_w, one.samples, scaled.capacity().clone(), params.epsilon, n);
    let sp = second_phase_estimate(&sp_inst, params, 4)?;
    times.second_phase_ms = clock.lap();
    report.overflows = one.sampler.overflow_count() + sp.overflows;
    report.ledger = one.ledger;
    if clock.over() {
        report.aborted = true;
    } else {
        let denom = XReal::from_u64(draws).mul_pow2(one.tiny_items.len() as i64);
        report.estimate = sp.value * one.omega_prime / denom;
    }
    report.second_phase = Some(sp);
    times.total_ms = clock.total();
    report.times = times;
    Ok(report)
}

/// Exact count of `{X in Omega-hat : w(X) <= t}` under frozen randomness, for tests.
pub fn enumerate_relaxed(s: &Sampler, t: u64, limit: usize) -> Option<BigUint> {
    let all = s.enumerate(limit)?;
    Some(all.iter().filter(|(_, w)| *w <= t).count().into())
}
