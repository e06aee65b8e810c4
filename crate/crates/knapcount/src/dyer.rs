//! Dyer's rounding estimator: round weights to `2Kn` units of the capacity
//! with a random carry, count the relaxed solutions exactly with a DP table
//! and estimate the fraction of them that are true solutions by backtrace
//! sampling.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;

use crate::clock::Clock;
use crate::estimator::{EstimateError, EstimateReport};
use crate::instance::{draw_below, AlgoParams, KnapsackInstance};
use crate::par::par_map;
use crate::rng;
use crate::xfloat::XReal;

/// Largest table, in cells, before giving up with `TooLarge`.
pub const MAX_CELLS: usize = 1 << 25;

/// `K = ceil(c sqrt(n ln n))`, at least 1.
pub fn dyer_k(n: usize, c: f64) -> u64 {
    let n = n.max(1) as f64;
    ((c * (n * n.ln()).sqrt()).ceil() as u64).max(1)
}

/// Rounded weights in units of `T / (2Kn)` and the relaxed capacity `2Kn + K`.
pub fn dyer_round<R: Rng + ?Sized>(inst: &KnapsackInstance, k: u64, rng: &mut R) -> (Vec<u64>, u64) {
    let n = inst.n() as u64;
    let units = BigUint::from(2 * k * n);
    let cap = 2 * k * n + k;
    let t = inst.capacity();
    let w = inst
        .weights()
        .iter()
        .map(|w| {
            let (q, r) = (w * &units).div_rem(t);
            let carry = u64::from(!r.is_zero() && draw_below(rng, t) < r);
            // anything past the capacity can never be used
            q.to_u64().map_or(cap + 1, |q| q.saturating_add(carry).min(cap + 1))
        })
        .collect();
    (w, cap)
}

/// `table[k][c]` = number of subsets of the first `k` items with unit weight at most `c`.
pub struct DyerTable {
    w: Vec<u64>,
    cap: usize,
    rows: Vec<Vec<XReal>>,
}

impl DyerTable {
    pub fn build(w: &[u64], cap: u64) -> Result<DyerTable, EstimateError> {
        let width = cap as usize + 1;
        if width.saturating_mul(w.len() + 1) > MAX_CELLS {
            return Err(EstimateError::TooLarge(format!("dyer table {} x {}", w.len() + 1, width)));
        }
        let mut rows = Vec::with_capacity(w.len() + 1);
        rows.push(vec![XReal::one(); width]);
        for &wi in w {
            let prev = rows.last().unwrap();
            let mut row = prev.clone();
            let wi = wi as usize;
            for c in wi..width {
                row[c] = prev[c] + prev[c - wi];
            }
            rows.push(row);
        }
        Ok(DyerTable { w: w.to_vec(), cap: cap as usize, rows })
    }

    /// Relaxed solution count.
    pub fn total(&self) -> XReal {
        self.rows[self.w.len()][self.cap]
    }

    /// Uniform relaxed solution, items in descending order.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut c = self.cap;
        let mut out = Vec::new();
        for k in (1..=self.w.len()).rev() {
            let all = self.rows[k][c];
            let skip = self.rows[k - 1][c];
            if rng.gen::<f64>() >= skip.ratio_f64(&all) {
                out.push(k - 1);
                c -= self.w[k - 1] as usize;
            }
        }
        out
    }
}

/// Dyer's estimator. Draws use streams under `params.seed`.
pub fn estimate_dyer(inst: &KnapsackInstance, params: &AlgoParams) -> Result<EstimateReport, EstimateError> {
    params.validate(inst.n())?;
    let n = inst.n();
    if inst.is_trivial() {
        return Ok(EstimateReport::trivial("dyer", n, params));
    }
    let mut clock = Clock::new(params.time_budget_ms);
    let mut report = EstimateReport::trivial("dyer", n, params);
    report.trivial = false;
    let k = dyer_k(n, params.dyer_c);
    let (w, cap) = dyer_round(inst, k, &mut rng::stream(params.seed, &[6]));
    report.times.scale_ms = clock.lap();
    let table = DyerTable::build(&w, cap)?;
    report.omega_prime = table.total();
    report.t = cap;
    report.root_len = cap + 1;
    report.times.classes_ms = clock.lap();
    let mut draws = (params.dyer_sample_mult * n as f64 / (params.epsilon * params.epsilon)).ceil() as u64;
    if let Some(m) = params.max_queries {
        draws = draws.min(m);
    }
    let draws = draws.max(1);
    let weights = inst.weights();
    let hits: u64 = par_map(draws, params.threads, |i| {
        let mut q = rng::stream(params.seed, &[5, i]);
        let x = table.sample(&mut q);
        let total: BigUint = x.iter().map(|&j| &weights[j]).sum();
        u64::from(&total <= inst.capacity())
    })
    .into_iter()
    .sum();
    report.samples = draws;
    report.estimate = report.omega_prime * XReal::from_u64(hits) / XReal::from_u64(draws);
    report.times.queries_ms = clock.lap();
    report.times.total_ms = clock.total();
    if clock.over() {
        report.aborted = true;
        report.estimate = XReal::zero();
    }
    Ok(report)
}
