//! Oracle-backed verification suites and the scaling benchmark. Each suite
//! returns one row per check; statistical suites add per-case rows marked
//! `info` and a summary row carrying the verdict.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;
use serde::Serialize;

use crate::convolution::{self, conv_exact, conv_ntt, conv_schoolbook, maxplus_witness_fast, maxplus_witness_ref, sum_approx_conv};
use crate::dyer::estimate_dyer;
use crate::estimator::{estimate_subquadratic, find_popular_ell, EstimateError, EstimateReport};
use crate::instance::{generate, AlgoParams, GenKind, KnapsackInstance};
use crate::oracle::{count_band, count_enum, empirical_tv};
use crate::rng::{self, stream};
use crate::sampler::{self, Element, Sampler};
use crate::secondphase::{second_phase_estimate, SecondPhaseInstance};
use crate::xfloat::XReal;

pub const SUITES: [&str; 8] = ["oracle", "ntt", "conv", "witness", "sampler", "structure", "secondphase", "all"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub suite: String,
    pub case: String,
    pub expected: String,
    pub got: String,
    pub pass: Verdict,
}

impl Row {
    fn new(suite: &str, case: impl Into<String>, expected: impl Into<String>, got: impl Into<String>, pass: Verdict) -> Row {
        Row { suite: suite.into(), case: case.into(), expected: expected.into(), got: got.into(), pass }
    }

    fn check(suite: &str, case: impl Into<String>, expected: impl Into<String>, got: impl Into<String>, ok: bool) -> Row {
        Row::new(suite, case, expected, got, if ok { Verdict::Pass } else { Verdict::Fail })
    }
}

pub const CSV_HEADER: &str = "suite,case,expected,got,pass";

pub fn csv_line(r: &Row) -> String {
    let v = match r.pass {
        Verdict::Pass => "pass",
        Verdict::Fail => "fail",
        Verdict::Info => "info",
    };
    format!("{},{},{},{},{}", r.suite, r.case, r.expected, r.got, v)
}

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("unknown suite {0:?}")]
    UnknownSuite(String),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error("{0}")]
    Internal(String),
}

/// Fraction of `info` rows in `rows` whose case starts with `prefix` and
/// whose `got` value is `true`-like, i.e. marked within tolerance.
pub fn hit_rate(rows: &[Row], prefix: &str) -> f64 {
    let hits: Vec<&Row> = rows.iter().filter(|r| r.case.starts_with(prefix) && r.pass == Verdict::Info).collect();
    if hits.is_empty() {
        return 0.0;
    }
    hits.iter().filter(|r| r.got.ends_with(";within")).count() as f64 / hits.len() as f64
}

pub fn default_trials(suite: &str) -> usize {
    match suite {
        "oracle" => 200,
        "sampler" => 100_000,
        _ => 100,
    }
}

/// Run one suite by name; `all` runs every suite at its default size.
pub fn run_suite(name: &str, trials: Option<usize>, seed: u64, threads: usize) -> Result<Vec<Row>, VerifyError> {
    let t = trials.unwrap_or_else(|| default_trials(name));
    match name {
        "oracle" => oracle_suite(t, seed, threads),
        "ntt" => ntt_suite(t, seed),
        "conv" => conv_suite(t, seed),
        "witness" => witness_suite(t, seed),
        "sampler" => sampler_suite(t, seed),
        "structure" => structure_suite(t, seed),
        "secondphase" => secondphase_suite(t, seed),
        "all" => {
            let mut rows = Vec::new();
            for s in SUITES.iter().filter(|s| **s != "all") {
                rows.extend(run_suite(s, trials, seed, threads)?);
            }
            Ok(rows)
        }
        other => Err(VerifyError::UnknownSuite(other.to_string())),
    }
}

// ---------------------------------------------------------------------------
// oracle accuracy

/// Mixed enumerable instance number `i`: uniform, bounded-ratio or tiny-adversarial.
pub fn oracle_instance(seed: u64, i: u64) -> KnapsackInstance {
    let mut r = stream(seed, &[0x6f72, i]);
    let n = r.gen_range(5..=18usize);
    let t = BigUint::from(r.gen_range(1_000u64..=1_000_000_000));
    let kind = match i % 3 {
        0 => GenKind::Uniform,
        1 => GenKind::BoundedRatio { ell: 1 << r.gen_range(1..=4u32) },
        _ => GenKind::TinyAdversarial,
    };
    generate(&kind, n, &t, r.gen()).expect("valid generator input")
}

fn within_eps(est: &XReal, exact: &BigUint, eps: f64) -> bool {
    let ex = XReal::from_biguint(exact);
    let r = convolution::xratio(est, &ex);
    (1.0 - eps..=1.0 + eps).contains(&r)
}

fn oracle_suite(trials: usize, seed: u64, threads: usize) -> Result<Vec<Row>, VerifyError> {
    let eps = 0.25;
    let mut rows = Vec::new();
    let algos: [(&str, fn(&KnapsackInstance, &AlgoParams) -> Result<EstimateReport, EstimateError>); 2] =
        [("subquad", estimate_subquadratic), ("dyer", estimate_dyer)];
    for (name, f) in algos {
        let mut hits = 0;
        for i in 0..trials as u64 {
            let inst = oracle_instance(seed, i);
            let exact = count_enum(&inst).map_err(|e| VerifyError::Internal(e.to_string()))?;
            let mut p = AlgoParams::with_epsilon(eps, seed.wrapping_mul(1_000_003).wrapping_add(i));
            p.threads = threads;
            let rep = f(&inst, &p)?;
            let ok = within_eps(&rep.estimate, &exact, eps);
            hits += ok as usize;
            let got = format!("{};{}", rep.estimate.to_decimal_string(), if ok { "within" } else { "outside" });
            rows.push(Row::new("oracle", format!("{}#{}", name, i), exact.to_string(), got, Verdict::Info));
        }
        let rate = hits as f64 / trials.max(1) as f64;
        rows.push(Row::check("oracle", format!("{}:rate", name), ">=0.75", format!("{:.3}", rate), rate >= 0.75));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// convolution

/// Random length-`len` array of zeros and integers in `[1, 2^max_bits]`.
pub fn random_count_array<R: Rng + ?Sized>(len: usize, max_bits: u64, rng: &mut R) -> Vec<BigUint> {
    use num_bigint::RandBigInt;
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.05) {
                BigUint::from(0u32)
            } else {
                let bits = rng.gen_range(1..=max_bits);
                rng.gen_biguint(bits) + 1u32
            }
        })
        .collect()
}

/// Largest relative prefix-sum error of `approx` against exact `truth`.
pub fn max_prefix_error(approx: &[XReal], truth: &[BigUint]) -> f64 {
    let mut acc_a = XReal::zero();
    let mut acc_t = BigUint::from(0u32);
    let mut worst: f64 = 0.0;
    for (a, t) in approx.iter().zip(truth) {
        acc_a += *a;
        acc_t += t;
        if acc_t.bits() == 0 {
            if !acc_a.is_zero() {
                return f64::INFINITY;
            }
            continue;
        }
        let t = XReal::from_biguint(&acc_t);
        let diff = acc_a.sub_saturating(&t) + t.sub_saturating(&acc_a);
        worst = worst.max(convolution::xratio(&diff, &t));
    }
    worst
}

fn ntt_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let mut rows = Vec::new();
    for i in 0..trials as u64 {
        let mut r = stream(seed, &[0x6e74, i]);
        let (la, lb) = (r.gen_range(1..=512), r.gen_range(1..=512));
        let a = random_count_array(la, 128, &mut r);
        let b = random_count_array(lb, 128, &mut r);
        let same = conv_ntt(&a, &b) == conv_schoolbook(&a, &b);
        rows.push(Row::check("ntt", format!("pair#{}", i), "transform = schoolbook", format!("len {}x{} equal={}", la, lb, same), same));
    }
    Ok(rows)
}

fn conv_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let delta = 1e-4;
    let mut rows = Vec::new();
    for i in 0..trials as u64 {
        let mut r = stream(seed, &[0x636f, i]);
        let a = random_count_array(512, 200, &mut r);
        let b = random_count_array(512, 200, &mut r);
        let fa: Vec<XReal> = a.iter().map(XReal::from_biguint).collect();
        let fb: Vec<XReal> = b.iter().map(XReal::from_biguint).collect();
        let approx = sum_approx_conv(&fa, &fb, delta, &mut r).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let truth = conv_exact(&a, &b);
        let err = max_prefix_error(&approx, &truth);
        rows.push(Row::check("conv", format!("pair#{}", i), format!("<={}", delta), format!("{:.3e}", err), err <= delta));
    }
    Ok(rows)
}

/// `|x - y| / y`, zero when both vanish.
pub fn rel_diff(x: &XReal, y: &XReal) -> f64 {
    let diff = x.sub_saturating(y) + y.sub_saturating(x);
    if diff.is_zero() {
        0.0
    } else {
        convolution::xratio(&diff, y)
    }
}

/// Non-decreasing array of length `n` with values in `[0, m]`.
pub fn random_monotone<R: Rng + ?Sized>(n: usize, m: i64, rng: &mut R) -> Vec<i64> {
    let mut v: Vec<i64> = (0..n).map(|_| rng.gen_range(0..=m)).collect();
    v.sort_unstable();
    v
}

fn witness_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let mut rows = Vec::new();
    for i in 0..trials as u64 {
        let mut r = stream(seed, &[0x7769, i]);
        let a = random_monotone(256, 100, &mut r);
        let b = random_monotone(256, 100, &mut r);
        let u: Vec<XReal> = (0..256).map(|_| XReal::from_u64(r.gen_range(1..=1u64 << 16))).collect();
        let v: Vec<XReal> = (0..256).map(|_| XReal::from_u64(r.gen_range(1..=1u64 << 16))).collect();
        let fast = maxplus_witness_fast(&a, &b, &u, &v, &mut r).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let slow = maxplus_witness_ref(&a, &b, &u, &v).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let worst = fast.w.iter().zip(&slow.w).map(|(x, y)| rel_diff(x, y)).fold(0.0, f64::max);
        let ok = fast.c == slow.c && worst <= 2f64.powi(-80);
        rows.push(Row::check("witness", format!("instance#{}", i), "C equal, w rel <= 2^-80", format!("c_equal={} w_rel={:.2e}", fast.c == slow.c, worst), ok));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// samplers

pub type Key = (Vec<usize>, Option<usize>);

fn items(ws: &[u64]) -> Vec<(usize, BigUint)> {
    ws.iter().enumerate().map(|(i, &w)| (i, BigUint::from(w))).collect()
}

/// Enumerable DP leaf over six items.
pub fn fixture_leaf_dp(seed: u64) -> Sampler {
    sampler::leaf_dp_build(&items(&[5, 9, 2, 7, 4, 6]), &BigUint::from(3u32), 3, 0.01, &mut stream(seed, &[1])).expect("fixture")
}

/// Enumerable color-coding leaf over six items.
pub fn fixture_leaf_cc(seed: u64) -> Sampler {
    sampler::leaf_cc_build(&items(&[5, 9, 2, 7, 4, 6]), &BigUint::from(3u32), 2, 0.01, &mut stream(seed, &[2])).expect("fixture")
}

/// DP leaf and CC leaf merged and rounded, then merged with a small-items
/// node. Both merges go through the approximate convolution.
pub fn fixture_two_level(seed: u64) -> Sampler {
    let path = convolution::ConvPath::Witness;
    let big = |v: u64| BigUint::from(v);
    let mut r = stream(seed, &[3]);
    let a = sampler::leaf_dp_build(&[(0, big(5)), (1, big(9)), (2, big(3))], &big(2), 2, 0.004, &mut r).expect("fixture");
    let b = sampler::leaf_cc_build(&[(3, big(7)), (4, big(4))], &big(2), 2, 0.004, &mut r).expect("fixture");
    let ab = sampler::merge_samplers_with(a, b, None, path, &mut r).expect("fixture");
    let ab = sampler::round_sampler(ab, &big(4), &mut r).expect("fixture");
    let c = sampler::small_items_build(&[(5, big(1)), (6, big(3))], &big(4), 0.004, &mut r).expect("fixture");
    sampler::merge_samplers_with(ab, c, None, path, &mut r).expect("fixture")
}

/// `s` and all its descendants.
pub fn nodes(s: &Sampler) -> Vec<&Sampler> {
    let mut out = vec![s];
    for c in s.children() {
        out.extend(nodes(c));
    }
    out
}

/// Uniform target over `{X : w(X) <= x}` with tiny items projected out.
pub fn frozen_target(s: &Sampler, x: u64) -> HashMap<Key, f64> {
    let all = s.enumerate(1 << 16).expect("enumerable");
    let fit: Vec<_> = all.into_iter().filter(|(_, w)| *w <= x).collect();
    let p = 1.0 / fit.len() as f64;
    let mut out: HashMap<Key, f64> = HashMap::new();
    for (e, _) in fit {
        let items: Vec<usize> = e.items.into_iter().filter(|i| s.tiny_items().binary_search(i).is_err()).collect();
        *out.entry((items, e.candidate)).or_insert(0.0) += p;
    }
    out
}

/// Empirical TV of `trials` queries at capacity `x` against the frozen target.
pub fn query_tv(s: &Sampler, x: u64, trials: usize, seed: u64) -> f64 {
    let target = frozen_target(s, x);
    let mut r = stream(seed, &[99]);
    let samples = (0..trials).map(|_| {
        let q = s.query(x, &mut r).expect("nonempty");
        (q.items, q.candidate)
    });
    empirical_tv(samples, &target).unwrap_or(1.0)
}

/// Exact `f` over the frozen weights, by enumeration.
pub fn exact_f(s: &Sampler) -> Vec<u64> {
    let mut f = vec![0u64; s.len() as usize + 1];
    for (_, w) in s.enumerate(1 << 16).expect("enumerable") {
        f[w as usize] += 1;
    }
    f
}

/// Largest relative error of the stored prefix sums against enumeration.
pub fn prefix_fidelity(s: &Sampler) -> f64 {
    let f = exact_f(s);
    let truth: Vec<BigUint> = f.iter().map(|&v| BigUint::from(v)).collect();
    max_prefix_error(s.count_fn().values(), &truth)
}

/// Mean of `w(X) S - W_X`, fraction beyond `4 sigma`, and `sigma`, over
/// `trials` fresh constructions.
pub fn replay_stats(build: &dyn Fn(u64) -> Sampler, set: &[usize], wx: u64, trials: u64) -> (f64, f64, f64) {
    let mut sum = 0f64;
    let mut far = 0u64;
    let mut sigma = 0f64;
    for t in 0..trials {
        let s = build(t);
        sigma = s.sigma2().to_f64().sqrt();
        let e = Element { items: set.to_vec(), candidate: None };
        let w = s.rounded_weight(&e).expect("element of the sampler") as f64 * s.scale().to_f64().unwrap_or(f64::MAX);
        let d = w - wx as f64;
        sum += d;
        if d.abs() > 4.0 * sigma {
            far += 1;
        }
    }
    (sum / trials as f64, far as f64 / trials as f64, sigma)
}

type Builder = Box<dyn Fn(u64) -> Sampler>;

/// Three-item constructors used for the rounding checks, with the full set's true weight.
pub fn rounding_fixtures(seed: u64) -> Vec<(&'static str, Builder, u64)> {
    let big = |v: u64| BigUint::from(v);
    let fix = move || [(0usize, big(5)), (1, big(7)), (2, big(3))];
    vec![
        ("leaf_dp", Box::new(move |t| sampler::leaf_dp_build(&fix(), &big(4), 3, 0.01, &mut stream(seed ^ t, &[1, t])).unwrap()) as Builder, 15),
        ("leaf_cc", Box::new(move |t| sampler::leaf_cc_build(&fix(), &big(4), 3, 0.01, &mut stream(seed ^ t, &[2, t])).unwrap()), 15),
        (
            "small_items",
            Box::new(move |t| {
                sampler::small_items_build(&[(0, big(1)), (1, big(2)), (2, big(3))], &big(4), 0.01, &mut stream(seed ^ t, &[3, t])).unwrap()
            }),
            6,
        ),
        (
            "round",
            Box::new(move |t| {
                let mut r = stream(seed ^ t, &[4, t]);
                let c = sampler::leaf_dp_build(&fix(), &big(2), 3, 0.01, &mut r).unwrap();
                sampler::round_sampler(c, &big(5), &mut r).unwrap()
            }),
            15,
        ),
    ]
}

fn sampler_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let mut rows = Vec::new();
    let n = trials as u64;
    for (name, build, wx) in rounding_fixtures(seed) {
        let (mean, tail, sigma) = replay_stats(&*build, &[0, 1, 2], wx, n);
        let bound = 4.0 * sigma / (n as f64).sqrt();
        rows.push(Row::check("sampler", format!("{}:mean", name), format!("|mean|<={:.4}", bound), format!("{:.5}", mean), mean.abs() <= bound));
        rows.push(Row::check("sampler", format!("{}:tail", name), "<=0.01", format!("{:.5}", tail), tail <= 0.01));
    }
    let fixtures: [(&str, Sampler); 3] = [("leaf_dp", fixture_leaf_dp(seed)), ("leaf_cc", fixture_leaf_cc(seed)), ("two_level", fixture_two_level(seed))];
    for (name, s) in &fixtures {
        for cap in [s.len() / 2, s.len()] {
            let tv = query_tv(s, cap, trials, seed ^ cap);
            let bound = 0.05 + 2.0 * s.delta();
            rows.push(Row::check("sampler", format!("{}:tv@{}", name, cap), format!("<={:.4}", bound), format!("{:.4}", tv), tv <= bound));
        }
        for (k, node) in nodes(s).into_iter().enumerate() {
            let err = prefix_fidelity(node);
            let d = node.delta();
            // exact nodes carry only the XReal rounding
            let bound = d.max(1e-20);
            rows.push(Row::check("sampler", format!("{}:fidelity{}", name, k), format!("<={:.2e}", d), format!("{:.2e}", err), err <= bound));
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// structure

fn structure_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let mut rows = Vec::new();
    for i in 0..trials as u64 {
        let mut r = stream(seed, &[0x7374, i]);
        let n = r.gen_range(2..=16usize);
        let t = BigUint::from(r.gen_range(1_000u64..=1_000_000));
        let kind = match i % 3 {
            0 => GenKind::Uniform,
            1 => GenKind::BoundedRatio { ell: 1 << r.gen_range(1..=4u32) },
            _ => GenKind::TinyAdversarial,
        };
        let inst = generate(&kind, n, &t, r.gen()).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let (omega_d, bounds) = structure_check(&inst).map_err(VerifyError::Internal)?;
        for (d, (band, bound)) in omega_d.iter().zip(&bounds).enumerate() {
            rows.push(Row::check("structure", format!("inst#{}:omega{}", i, d + 1), format!("<={}", bound), band.to_string(), band <= bound));
        }
        let omega = count_enum(&inst).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let ell = find_popular_ell(&inst);
        let nf = n.max(2) as f64;
        let bound1 = 15000.0 * nf * nf.log2().powi(2) / ell as f64 * omega.to_f64().unwrap_or(f64::MAX);
        let band1 = omega_d[0].to_f64().unwrap_or(f64::MAX);
        rows.push(Row::check("structure", format!("inst#{}:omega1_ell", i), format!("<={:.6e}", bound1), format!("{:.6e}", band1), band1 <= bound1));
    }
    Ok(rows)
}

/// `|Omega_d|` for `d = 1..=3` with `l` from `find_popular_ell`, and the
/// bounds `n^d |Omega|`.
pub fn structure_check(inst: &KnapsackInstance) -> Result<(Vec<BigUint>, Vec<BigUint>), String> {
    let omega = count_enum(inst).map_err(|e| e.to_string())?;
    let ell = find_popular_ell(inst);
    let t = inst.capacity();
    let n = BigUint::from(inst.n());
    let mut bands = Vec::new();
    let mut bounds = Vec::new();
    for d in 1..=3u32 {
        // integer weights, so flooring both rational ends keeps the band
        let lo = t + (t * (d - 1)) / ell;
        let hi = t + (t * d) / ell;
        let band = if hi > lo { count_band(inst, &lo, &hi).map_err(|e| e.to_string())? } else { BigUint::from(0u32) };
        bands.push(band);
        bounds.push(n.pow(d) * &omega);
    }
    Ok((bands, bounds))
}

// ---------------------------------------------------------------------------
// second phase

/// Random second-phase instance: up to 10 tiny items and up to 8 candidates,
/// most of them straddling the capacity.
pub fn secondphase_instance(seed: u64, i: u64) -> SecondPhaseInstance {
    let mut r = stream(seed, &[0x7370, i]);
    let k = r.gen_range(0..=10usize);
    let count = r.gen_range(1..=8usize);
    let tiny: Vec<BigUint> = (0..k).map(|_| BigUint::from(r.gen_range(1..=1000u64))).collect();
    let total: u64 = tiny.iter().map(|w| w.to_u64().unwrap()).sum();
    let cap = 1_000_000u64;
    let cands = (0..count)
        .map(|c| {
            let w = match r.gen_range(0..8) {
                0 => cap + r.gen_range(1..=100),
                1 => cap - total - r.gen_range(0..=100).min(cap - total),
                _ => cap - r.gen_range(0..=total),
            };
            (vec![c], BigUint::from(w))
        })
        .collect();
    SecondPhaseInstance::new(tiny, cands, BigUint::from(cap), 0.25, 64)
}

fn secondphase_suite(trials: usize, seed: u64) -> Result<Vec<Row>, VerifyError> {
    let mut rows = Vec::new();
    let mut hits = 0;
    for i in 0..trials as u64 {
        let inst = secondphase_instance(seed, i);
        let exact = inst.count_exact().expect("at most 10 tiny items");
        let p = AlgoParams::with_epsilon(inst.epsilon, rng::stream(seed, &[0x7370, i, 1]).gen());
        let rep = second_phase_estimate(&inst, &p, 4).map_err(|e| VerifyError::Internal(e.to_string()))?;
        let ex = exact.to_f64().unwrap();
        let got = rep.value.to_f64();
        let ok = (got - ex).abs() <= inst.epsilon / 6.0 * ex + inst.additive_allowance();
        hits += ok as usize;
        let tag = if ok { "within" } else { "outside" };
        rows.push(Row::new("secondphase", format!("inst#{}", i), exact.to_string(), format!("{};{}", rep.value.to_decimal_string(), tag), Verdict::Info));
    }
    let rate = hits as f64 / trials.max(1) as f64;
    rows.push(Row::check("secondphase", "rate", ">=0.90", format!("{:.3}", rate), rate >= 0.9));
    Ok(rows)
}

// ---------------------------------------------------------------------------
// benchmark

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub algo: String,
    pub stage: String,
    pub ms: u64,
    pub digest: String,
}

pub const BENCH_HEADER: &str = "n,algo,stage,ms,digest";

/// Bounded-ratio instance used by the benchmark.
pub fn bench_instance(n: usize, seed: u64) -> KnapsackInstance {
    generate(&GenKind::BoundedRatio { ell: 16 }, n, &(BigUint::one() << 50u32), seed).expect("valid generator input")
}

/// Stage timings for `algos` over `sizes`. A run that refuses its input
/// reports one `too_large` row.
pub fn bench(sizes: &[usize], algos: &[&str], seed: u64, params: &AlgoParams) -> Vec<BenchRow> {
    let mut rows = Vec::new();
    for &n in sizes {
        let inst = bench_instance(n, seed);
        let digest = inst.digest();
        for &algo in algos {
            let p = AlgoParams { seed, ..params.clone() };
            let res = match algo {
                "dyer" => estimate_dyer(&inst, &p),
                _ => estimate_subquadratic(&inst, &p),
            };
            let row = |stage: &str, ms: u64| BenchRow { n, algo: algo.to_string(), stage: stage.to_string(), ms, digest: digest.clone() };
            match res {
                Ok(rep) => {
                    let t = &rep.times;
                    let stages: Vec<(&str, u64)> = if algo == "dyer" {
                        vec![("round", t.scale_ms), ("table", t.classes_ms), ("sample", t.queries_ms), ("total", t.total_ms)]
                    } else {
                        vec![
                            ("scale", t.scale_ms),
                            ("classes", t.classes_ms),
                            ("global", t.global_ms),
                            ("queries", t.queries_ms),
                            ("second_phase", t.second_phase_ms),
                            ("total", t.total_ms),
                        ]
                    };
                    rows.extend(stages.into_iter().map(|(s, ms)| row(s, ms)));
                }
                Err(_) => rows.push(row("too_large", 0)),
            }
        }
    }
    rows
}
