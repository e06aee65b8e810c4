//! Approximate knapsack samplers.
//!
//! A sampler fixes a randomized rounding `w` of the weights of its items to
//! multiples of a scale `S`, a table `f` approximating how many elements of
//! its set family `Omega` have each rounded weight, and a query that returns
//! a near-uniform element of `{X in Omega : w(X) <= x S}`. Items rounded to
//! zero ("tiny") are left out of query results.
//!
//! Weights inside a sampler are in units of its own `S`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, OnceLock};

use num_bigint::{BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use thiserror::Error;

use crate::convolution::{self, conv_exact, ConvError};
use crate::numtheory;
use crate::xfloat::XReal;

/// Memory ceiling for any single leaf table.
pub const MAX_TABLE_BYTES: usize = 1 << 31;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("scale mismatch between merged samplers")]
    ScaleMismatch,
    #[error("child delta {0} is not below 1/10")]
    DeltaTooLarge(f64),
    #[error("item weight exceeds the scale")]
    WeightAboveScale,
    #[error("no candidates")]
    EmptyCandidates,
    #[error("candidate weight must be positive")]
    ZeroWeightCandidate,
    #[error("new scale is below the child's scale")]
    ScaleTooSmall,
    #[error("bad threshold {0}")]
    BadThreshold(usize),
    #[error("modulus {0} does not exceed degree bound {1}")]
    ModulusTooSmall(String, usize),
    #[error("{0} too large for this machine")]
    TooLarge(String),
    #[error("bin cap must be at least 1")]
    ZeroCap,
    #[error(transparent)]
    Conv(#[from] ConvError),
}

/// `f` over `{0, S, ..., L S}` with cached prefix sums.
#[derive(Clone, Debug, PartialEq)]
pub struct CountFn {
    values: Vec<XReal>,
    prefix: Vec<XReal>,
}

impl CountFn {
    pub fn new(values: Vec<XReal>) -> CountFn {
        let prefix = convolution::prefix_sums(&values);
        CountFn { values, prefix }
    }

    pub fn values(&self) -> &[XReal] {
        &self.values
    }

    pub fn prefix(&self) -> &[XReal] {
        &self.prefix
    }

    pub fn get(&self, x: u64) -> XReal {
        self.values.get(x as usize).copied().unwrap_or_default()
    }

    /// `f^<=(x)`, constant past the end.
    pub fn prefix_at(&self, x: u64) -> XReal {
        let i = (x as usize).min(self.prefix.len() - 1);
        self.prefix[i]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryResult {
    /// Non-tiny items of the sample, sorted.
    pub items: Vec<usize>,
    /// Rounded weight in units of S.
    pub weight: u64,
    /// Index of the chosen candidate when the tree holds an n-choose-1 node.
    pub candidate: Option<usize>,
}

/// An element of `Omega`: items (tiny ones included) plus the candidate
/// index for families over an explicit list of sets.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Element {
    pub items: Vec<usize>,
    pub candidate: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Unit,
    LeafDp,
    LeafCc,
    SmallItems,
    NChoose1,
    Merge,
    Round,
}

/// Draw `q` or `q + 1` where `w = q S + r`, the latter with probability `r / S`.
pub fn round_to_scale<R: Rng + ?Sized>(w: &BigUint, s: &BigUint, rng: &mut R) -> BigUint {
    let (q, r) = w.div_rem(s);
    if r.is_zero() {
        return q;
    }
    if rng.gen_biguint_below(s) < r {
        q + 1u32
    } else {
        q
    }
}

fn units(v: &BigUint) -> Result<u64, SamplerError> {
    v.to_u64().filter(|&x| x < 1 << 40).ok_or_else(|| SamplerError::TooLarge("rounded length".into()))
}

fn ceil_div(a: &BigUint, b: &BigUint) -> BigUint {
    a.div_ceil(b)
}

/// Index drawn with probability proportional to `weights`.
pub fn sample_weighted<R: Rng + ?Sized>(weights: &[XReal], rng: &mut R) -> Option<usize> {
    let max = *weights.iter().max()?;
    if max.is_zero() {
        return None;
    }
    let ratios: Vec<f64> = weights.iter().map(|w| w.ratio_f64(&max)).collect();
    let total: f64 = ratios.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    let mut last = 0;
    for (i, &r) in ratios.iter().enumerate() {
        if r > 0.0 {
            if u < r {
                return Some(i);
            }
            u -= r;
            last = i;
        }
    }
    Some(last)
}

/// Normalized running sums of `weights` (empty if all are zero).
fn cumulative(weights: &[XReal]) -> Vec<f64> {
    let Some(max) = weights.iter().max().copied().filter(|m| !m.is_zero()) else { return Vec::new() };
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w.ratio_f64(&max);
            acc
        })
        .collect()
}

fn draw_cumulative<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> Option<usize> {
    let total = *cdf.last()?;
    let u = rng.gen::<f64>() * total;
    let i = cdf.partition_point(|&c| c <= u);
    Some(i.min(cdf.len() - 1))
}

// split distributions of a merge node, keyed by capacity
#[derive(Debug)]
struct SplitCache {
    slots: Vec<OnceLock<Arc<Vec<f64>>>>,
    budget: AtomicU64,
}

const CACHE_FLOATS: u64 = 1 << 22;

impl SplitCache {
    fn new(len: usize) -> SplitCache {
        SplitCache { slots: (0..len).map(|_| OnceLock::new()).collect(), budget: AtomicU64::new(CACHE_FLOATS) }
    }

    fn get(&self, x: u64, make: impl FnOnce() -> Vec<f64>) -> Arc<Vec<f64>> {
        let slot = &self.slots[x as usize];
        if let Some(v) = slot.get() {
            return v.clone();
        }
        let v = Arc::new(make());
        let cost = v.len() as u64;
        let left = self.budget.load(Ordering::Relaxed);
        if left >= cost && self.budget.compare_exchange(left, left - cost, Ordering::Relaxed, Ordering::Relaxed).is_ok() {
            let _ = slot.set(v.clone());
        }
        v
    }
}

fn sigma2_of(count: u64, s: &BigUint) -> XReal {
    XReal::from_biguint(&(s * s * count)).mul_pow2(-2)
}

// ---------------------------------------------------------------------------
// leaf tables

trait Cell: Copy + Send + Sync + std::fmt::Debug + 'static {
    const ZERO: Self;
    const ONE: Self;
    fn plus(self, o: Self) -> Self;
    fn to_x(self) -> XReal;
    /// Uniform in `[1, self]` (continuous for floats).
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> Self;
    fn lt(self, o: Self) -> bool;
}

macro_rules! int_cell {
    ($t:ty, $conv:expr) => {
        impl Cell for $t {
            const ZERO: Self = 0;
            const ONE: Self = 1;
            fn plus(self, o: Self) -> Self {
                self + o
            }
            fn to_x(self) -> XReal {
                $conv(self)
            }
            fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
                rng.gen_range(1..=self)
            }
            fn lt(self, o: Self) -> bool {
                self < o
            }
        }
    };
}

int_cell!(u32, |v: u32| XReal::from_u64(v as u64));
int_cell!(u64, XReal::from_u64);
int_cell!(u128, XReal::from_u128);

impl Cell for XReal {
    const ZERO: Self = crate::xfloat::ZERO;
    const ONE: Self = crate::xfloat::ONE;
    fn plus(self, o: Self) -> Self {
        self + o
    }
    fn to_x(self) -> XReal {
        self
    }
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        let u = 1.0 - rng.gen::<f64>();
        XReal::from_f64(u).unwrap() * self
    }
    fn lt(self, o: Self) -> bool {
        self < o
    }
}

// M(k, x, z): subsets of the first k items with rounded weight <= x and
// exactly z elements
#[derive(Debug)]
struct Table<T> {
    data: Vec<T>,
    m: usize,
    l: usize,
    b: usize,
}

impl<T: Cell> Table<T> {
    fn idx(&self, k: usize, x: usize, z: usize) -> usize {
        (k * (self.l + 1) + x) * (self.b + 1) + z
    }

    fn at(&self, k: usize, x: usize, z: usize) -> T {
        self.data[self.idx(k, x, z)]
    }

    fn build(w: &[u64], l: usize, b: usize) -> (Self, Vec<XReal>) {
        let m = w.len();
        let row = (l + 1) * (b + 1);
        let mut data = vec![T::ZERO; (m + 1) * row];
        for x in 0..=l {
            data[x * (b + 1)] = T::ONE;
        }
        // exact-weight layer, rolled, to read off f without subtraction
        let mut e_prev = vec![T::ZERO; row];
        e_prev[0] = T::ONE;
        let mut e_cur = vec![T::ZERO; row];
        for k in 1..=m {
            let wk = w[k - 1] as usize;
            let (done, rest) = data.split_at_mut(k * row);
            let prev = &done[(k - 1) * row..];
            let cur = &mut rest[..row];
            cur.copy_from_slice(prev);
            e_cur.copy_from_slice(&e_prev);
            for x in wk..=l {
                let src = (x - wk) * (b + 1);
                let dst = x * (b + 1);
                for z in 1..=b {
                    cur[dst + z] = cur[dst + z].plus(prev[src + z - 1]);
                    e_cur[dst + z] = e_cur[dst + z].plus(e_prev[src + z - 1]);
                }
            }
            std::mem::swap(&mut e_prev, &mut e_cur);
        }
        let f = (0..=l)
            .map(|x| {
                let mut acc = XReal::zero();
                for z in 0..=b {
                    acc += e_prev[x * (b + 1) + z].to_x();
                }
                acc
            })
            .collect();
        (Table { data, m, l, b }, f)
    }

    fn sample<R: Rng + ?Sized>(&self, w: &[u64], x: u64, rng: &mut R) -> Vec<usize> {
        let mut x = (x as usize).min(self.l);
        let zs: Vec<XReal> = (0..=self.b).map(|z| self.at(self.m, x, z).to_x()).collect();
        let Some(mut z) = sample_weighted(&zs, rng) else { return Vec::new() };
        let mut k = self.m;
        let mut out = Vec::with_capacity(z);
        while z > 0 {
            let r = self.at(k, x, z).draw(rng);
            // smallest j with M(j, x, z) >= r
            let (mut lo, mut hi) = (1, k);
            while lo < hi {
                let mid = (lo + hi) / 2;
                if self.at(mid, x, z).lt(r) {
                    lo = mid + 1;
                } else {
                    hi = mid;
                }
            }
            out.push(lo - 1);
            x -= w[lo - 1] as usize;
            z -= 1;
            k = lo - 1;
        }
        out
    }

    fn marginal(&self, x: usize, z: usize) -> XReal {
        self.at(self.m, x, z).to_x()
    }
}

#[derive(Debug)]
enum DpTable {
    U32(Table<u32>),
    U64(Table<u64>),
    U128(Table<u128>),
    X(Table<XReal>),
}

macro_rules! dispatch {
    ($self:expr, $t:ident => $e:expr) => {
        match $self {
            DpTable::U32($t) => $e,
            DpTable::U64($t) => $e,
            DpTable::U128($t) => $e,
            DpTable::X($t) => $e,
        }
    };
}

fn binom_sum_bits(m: usize, b: usize) -> u64 {
    let mut c = BigUint::one();
    let mut total = BigUint::one();
    for z in 1..=b.min(m) {
        c = c * (m - z + 1) / z;
        total += &c;
    }
    total.bits()
}

impl DpTable {
    fn build(w: &[u64], l: usize, b: usize) -> Result<(DpTable, Vec<XReal>), SamplerError> {
        let bits = binom_sum_bits(w.len(), b);
        let cells = (w.len() + 1)
            .checked_mul(l + 1)
            .and_then(|v| v.checked_mul(b + 1))
            .ok_or_else(|| SamplerError::TooLarge("leaf table".into()))?;
        let width = if bits < 32 {
            4
        } else if bits < 64 {
            8
        } else if bits < 128 {
            16
        } else {
            32
        };
        if cells.saturating_mul(width) > MAX_TABLE_BYTES {
            return Err(SamplerError::TooLarge(format!("leaf table of {} cells", cells)));
        }
        Ok(match width {
            4 => {
                let (t, f) = Table::<u32>::build(w, l, b);
                (DpTable::U32(t), f)
            }
            8 => {
                let (t, f) = Table::<u64>::build(w, l, b);
                (DpTable::U64(t), f)
            }
            16 => {
                let (t, f) = Table::<u128>::build(w, l, b);
                (DpTable::U128(t), f)
            }
            _ => {
                let (t, f) = Table::<XReal>::build(w, l, b);
                (DpTable::X(t), f)
            }
        })
    }

    fn sample<R: Rng + ?Sized>(&self, w: &[u64], x: u64, rng: &mut R) -> Vec<usize> {
        dispatch!(self, t => t.sample(w, x, rng))
    }

    fn marginal(&self, x: usize, z: usize) -> XReal {
        dispatch!(self, t => t.marginal(x, z))
    }
}

// cumulative M(x, z) for the color-coding leaf
#[derive(Debug)]
struct CcTable {
    cum: Vec<XReal>,
    l: usize,
    b: usize,
    p: BigUint,
}

impl CcTable {
    fn at(&self, x: usize, z: usize) -> XReal {
        self.cum[x * (self.b + 1) + z]
    }
}

// ---------------------------------------------------------------------------
// truncated polynomial products modulo p

fn nnz(p: &[BigUint]) -> usize {
    p.iter().filter(|c| !c.is_zero()).count()
}

fn poly_mul_mod(a: &[BigUint], b: &[BigUint], t: usize, p: &BigUint) -> Vec<BigUint> {
    let len = (a.len() + b.len() - 1).min(t + 1);
    let (na, nb) = (nnz(a), nnz(b));
    let mut out = if na.saturating_mul(nb) <= 64 * (a.len() + b.len()) {
        let mut out = vec![BigUint::zero(); len];
        for (i, x) in a.iter().enumerate().filter(|(_, x)| !x.is_zero()) {
            for (j, y) in b.iter().enumerate().filter(|(_, y)| !y.is_zero()) {
                if i + j < len {
                    out[i + j] += x * y;
                }
            }
        }
        out
    } else {
        let mut out = conv_exact(a, b);
        out.truncate(len);
        out
    };
    for c in out.iter_mut() {
        if *c >= *p {
            *c %= p;
        }
    }
    while out.len() > 1 && out.last().map_or(false, |c| c.is_zero()) {
        out.pop();
    }
    out
}

fn subset_product(a: &[u64], t: usize, p: &BigUint) -> Vec<BigUint> {
    if a.len() == 1 {
        let ai = a[0] as usize;
        let mut v = vec![BigUint::zero(); if ai <= t { ai + 1 } else { 1 }];
        v[0] = BigUint::one() % p;
        if ai <= t {
            v[ai] += 1u32;
            if v[ai] >= *p {
                v[ai] %= p;
            }
        }
        return v;
    }
    let (x, y) = a.split_at(a.len() / 2);
    poly_mul_mod(&subset_product(x, t, p), &subset_product(y, t, p), t, p)
}

/// `g[s] = |{X : sum_{i in X} a_i = s}| mod p` for `s = 0..=t`, by a
/// divide-and-conquer product of `(1 + x^{a_i})` truncated at degree `t`.
pub fn subset_sums_count_mod_p(a: &[u64], t: usize, p: &BigUint) -> Result<Vec<BigUint>, SamplerError> {
    if *p <= BigUint::from(t) {
        return Err(SamplerError::ModulusTooSmall(p.to_string(), t));
    }
    let mut g = if a.is_empty() { vec![BigUint::one() % p] } else { subset_product(a, t, p) };
    g.resize(t + 1, BigUint::zero());
    Ok(g)
}

// ---------------------------------------------------------------------------
// the node

#[derive(Debug)]
struct Leaf {
    items: Vec<usize>,
    w: Vec<u64>,
    b: usize,
}

#[derive(Debug)]
struct Candidate {
    items: Vec<usize>,
    w: u64,
}

#[derive(Debug)]
enum Body {
    Unit,
    LeafDp(Leaf, DpTable),
    LeafCc(Leaf, CcTable),
    Small {
        items: Vec<usize>,
        plus: Vec<usize>,
        binom: Vec<XReal>,
    },
    NChoose1 {
        cands: Vec<Candidate>,
        // candidate indices ordered by rounded weight
        order: Vec<usize>,
    },
    Merge(Box<Sampler>, Box<Sampler>, SplitCache),
    Round {
        child: Box<Sampler>,
        thresholds: Vec<BigUint>,
        xcap: Vec<u64>,
        alpha: Vec<u64>,
    },
}

#[derive(Debug)]
pub struct Sampler {
    body: Body,
    s: BigUint,
    l: u64,
    sigma2: XReal,
    delta: f64,
    f: CountFn,
    tiny: Vec<usize>,
    universe: Vec<usize>,
    has_cands: bool,
    ledger: f64,
    overflows: AtomicU64,
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn merge_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().chain(b).copied().collect();
    v.sort_unstable();
    v
}

impl Sampler {
    fn node(body: Body, s: BigUint, f: Vec<XReal>, sigma2: XReal, delta: f64, tiny: Vec<usize>, universe: Vec<usize>) -> Sampler {
        let l = f.len() as u64 - 1;
        Sampler {
            body,
            s,
            l,
            sigma2,
            delta,
            f: CountFn::new(f),
            tiny,
            universe,
            has_cands: false,
            ledger: 0.0,
            overflows: AtomicU64::new(0),
        }
    }

    /// The sampler for `{emptyset}`.
    pub fn unit(s: BigUint) -> Sampler {
        Sampler::node(Body::Unit, s, vec![XReal::one()], XReal::zero(), 0.0, Vec::new(), Vec::new())
    }

    pub fn kind(&self) -> Kind {
        match self.body {
            Body::Unit => Kind::Unit,
            Body::LeafDp(..) => Kind::LeafDp,
            Body::LeafCc(..) => Kind::LeafCc,
            Body::Small { .. } => Kind::SmallItems,
            Body::NChoose1 { .. } => Kind::NChoose1,
            Body::Merge(..) => Kind::Merge,
            Body::Round { .. } => Kind::Round,
        }
    }

    pub fn scale(&self) -> &BigUint {
        &self.s
    }

    pub fn len(&self) -> u64 {
        self.l
    }

    pub fn sigma2(&self) -> XReal {
        self.sigma2
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn count_fn(&self) -> &CountFn {
        &self.f
    }

    pub fn tiny_items(&self) -> &[usize] {
        &self.tiny
    }

    pub fn universe(&self) -> &[usize] {
        &self.universe
    }

    /// Summed failure probability recorded in this subtree.
    pub fn ledger(&self) -> f64 {
        self.ledger
    }

    pub fn children(&self) -> Vec<&Sampler> {
        match &self.body {
            Body::Merge(a, b, _) => vec![a, b],
            Body::Round { child, .. } => vec![child],
            _ => Vec::new(),
        }
    }

    /// Rejection-loop overflows in this subtree so far.
    pub fn overflow_count(&self) -> u64 {
        self.overflows.load(Ordering::Relaxed) + self.children().iter().map(|c| c.overflow_count()).sum::<u64>()
    }

    /// Frozen rounded weights of a leaf, aligned with its items.
    pub fn leaf_weights(&self) -> Option<(&[usize], &[u64])> {
        match &self.body {
            Body::LeafDp(leaf, _) | Body::LeafCc(leaf, _) => Some((&leaf.items, &leaf.w)),
            _ => None,
        }
    }

    /// `r_y` thresholds of a round node.
    pub fn thresholds(&self) -> Option<&[BigUint]> {
        match &self.body {
            Body::Round { thresholds, .. } => Some(thresholds),
            _ => None,
        }
    }

    /// Rounded-weight map of a round node: child units to own units.
    pub fn alpha(&self) -> Option<&[u64]> {
        match &self.body {
            Body::Round { alpha, .. } => Some(alpha),
            _ => None,
        }
    }

    /// Cardinality-split table `M(|I|, x, z)` of a leaf as XReal.
    pub fn leaf_marginal(&self, x: usize, z: usize) -> Option<XReal> {
        match &self.body {
            Body::LeafDp(leaf, t) if z <= leaf.b.min(leaf.items.len()) => Some(t.marginal(x.min(self.l as usize), z)),
            Body::LeafCc(leaf, t) if z <= leaf.b.min(leaf.items.len()) => Some(t.at(x.min(t.l), z)),
            _ => None,
        }
    }

    /// Prime used by a color-coding leaf.
    pub fn cc_prime(&self) -> Option<&BigUint> {
        match &self.body {
            Body::LeafCc(_, t) => Some(&t.p),
            _ => None,
        }
    }

    /// Candidate rounded weights of an n-choose-1 node.
    pub fn candidate_weights(&self) -> Option<Vec<u64>> {
        match &self.body {
            Body::NChoose1 { cands, .. } => Some(cands.iter().map(|c| c.w).collect()),
            _ => None,
        }
    }

    /// Plus items (rounded to S) of a small-items node.
    pub fn small_plus(&self) -> Option<&[usize]> {
        match &self.body {
            Body::Small { plus, .. } => Some(plus),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// constructors

fn leaf_common<R: Rng + ?Sized>(items: &[(usize, BigUint)], s: &BigUint, b: usize, rng: &mut R) -> Result<(Leaf, usize), SamplerError> {
    if b == 0 {
        return Err(SamplerError::ZeroCap);
    }
    let mut w = Vec::with_capacity(items.len());
    for (_, wi) in items {
        w.push(units(&round_to_scale(wi, s, rng))?);
    }
    let b_eff = b.min(items.len());
    let wmax = items.iter().map(|(_, x)| x).max().unwrap();
    let per = units(&ceil_div(wmax, s))?;
    let l = (b_eff as u64).checked_mul(per).filter(|&v| v < 1 << 32).ok_or_else(|| SamplerError::TooLarge("leaf length".into()))?;
    Ok((Leaf { items: items.iter().map(|x| x.0).collect(), w, b: b_eff }, l as usize))
}

fn leaf_universe(items: &[(usize, BigUint)]) -> Vec<usize> {
    sorted(items.iter().map(|x| x.0).collect())
}

/// Leaf over `items` (id, weight) with `Omega = {X : |X| <= B}`, counted by
/// a table over prefix, rounded weight and cardinality.
pub fn leaf_dp_build<R: Rng + ?Sized>(items: &[(usize, BigUint)], s: &BigUint, b: usize, delta: f64, rng: &mut R) -> Result<Sampler, SamplerError> {
    if items.is_empty() {
        return Ok(Sampler::unit(s.clone()));
    }
    let (leaf, l) = leaf_common(items, s, b, rng)?;
    let (table, f) = DpTable::build(&leaf.w, l, leaf.b)?;
    let sigma2 = sigma2_of(leaf.b as u64, s);
    let uni = leaf_universe(items);
    Ok(Sampler::node(Body::LeafDp(leaf, table), s.clone(), f, sigma2, delta, Vec::new(), uni))
}

/// Same family as `leaf_dp_build`; counts come from subset sums modulo a
/// prime and queries use random group partitions with rejection.
pub fn leaf_cc_build<R: Rng + ?Sized>(items: &[(usize, BigUint)], s: &BigUint, b: usize, delta: f64, rng: &mut R) -> Result<Sampler, SamplerError> {
    if items.is_empty() {
        return Ok(Sampler::unit(s.clone()));
    }
    let (leaf, l) = leaf_common(items, s, b, rng)?;
    let bb = leaf.b;
    let t = bb
        .checked_mul(l + 1)
        .and_then(|v| v.checked_add(l))
        .filter(|&v| v < 1 << 28)
        .ok_or_else(|| SamplerError::TooLarge("packed degree".into()))?;
    let base = BigUint::from(items.len()).pow(bb as u32);
    let mut p = numtheory::random_big_prime_in(&(&base * 2u32), &(&base * 4u32), rng);
    if p <= BigUint::from(t) {
        p = BigUint::from(numtheory::next_prime(t as u64));
    }
    let a: Vec<u64> = leaf.w.iter().map(|&wi| wi + l as u64 + 1).collect();
    let g = subset_sums_count_mod_p(&a, t, &p)?;
    let mut cum = vec![XReal::zero(); (l + 1) * (bb + 1)];
    let mut f = vec![XReal::zero(); l + 1];
    let mut run = vec![XReal::zero(); bb + 1];
    for x in 0..=l {
        for z in 0..=bb {
            let e = XReal::from_biguint(&g[x + z * (l + 1)]);
            f[x] += e;
            run[z] += e;
            cum[x * (bb + 1) + z] = run[z];
        }
    }
    let sigma2 = sigma2_of(bb as u64, s);
    let uni = leaf_universe(items);
    let mut node = Sampler::node(Body::LeafCc(leaf, CcTable { cum, l, b: bb, p }), s.clone(), f, sigma2, delta, Vec::new(), uni);
    node.ledger = 2f64.powi(-100);
    Ok(node)
}

fn binomials(k: usize) -> Vec<BigUint> {
    let mut out = Vec::with_capacity(k + 1);
    let mut c = BigUint::one();
    out.push(c.clone());
    for z in 1..=k {
        c = c * (k - z + 1) / z;
        out.push(c.clone());
    }
    out
}

/// Items of weight at most `S`, each rounded to `0` or `S`; `Omega` is every
/// subset and zero-rounded items become tiny.
pub fn small_items_build<R: Rng + ?Sized>(items: &[(usize, BigUint)], s: &BigUint, delta: f64, rng: &mut R) -> Result<Sampler, SamplerError> {
    let mut plus = Vec::new();
    let mut tiny = Vec::new();
    for (id, w) in items {
        if w > s {
            return Err(SamplerError::WeightAboveScale);
        }
        if round_to_scale(w, s, rng).is_zero() {
            tiny.push(*id);
        } else {
            plus.push(*id);
        }
    }
    let k = plus.len();
    let bin = binomials(k);
    let f: Vec<XReal> = (0..=items.len())
        .map(|t| if t <= k { XReal::from_biguint(&bin[t]).mul_pow2(tiny.len() as i64) } else { XReal::zero() })
        .collect();
    let binom = bin.iter().map(XReal::from_biguint).collect();
    let sigma2 = sigma2_of(items.len() as u64, s);
    let uni = leaf_universe(items);
    let all: Vec<usize> = items.iter().map(|x| x.0).collect();
    Ok(Sampler::node(Body::Small { items: all, plus: sorted(plus), binom }, s.clone(), f, sigma2, delta, sorted(tiny), uni))
}

/// Sampler over an explicit list of sets with positive shifted weights.
pub fn nchoose1_build<R: Rng + ?Sized>(candidates: &[(Vec<usize>, BigUint)], s: &BigUint, rng: &mut R) -> Result<Sampler, SamplerError> {
    if candidates.is_empty() {
        return Err(SamplerError::EmptyCandidates);
    }
    let mut cands = Vec::with_capacity(candidates.len());
    for (ids, w) in candidates {
        if w.is_zero() {
            return Err(SamplerError::ZeroWeightCandidate);
        }
        cands.push(Candidate { items: sorted(ids.clone()), w: units(&round_to_scale(w, s, rng))? });
    }
    let l = cands.iter().map(|c| c.w).max().unwrap() as usize;
    if l >= 1 << 28 {
        return Err(SamplerError::TooLarge("candidate length".into()));
    }
    let mut counts = vec![0u64; l + 1];
    for c in &cands {
        counts[c.w as usize] += 1;
    }
    let f = counts.into_iter().map(XReal::from_u64).collect();
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by_key(|&i| (cands[i].w, i));
    let uni = sorted(cands.iter().flat_map(|c| c.items.iter().copied()).collect::<std::collections::BTreeSet<_>>().into_iter().collect());
    let sigma2 = sigma2_of(1, s);
    let mut node = Sampler::node(Body::NChoose1 { cands, order }, s.clone(), f, sigma2, 0.0, Vec::new(), uni);
    node.has_cands = true;
    Ok(node)
}

/// Re-round a sampler to the coarser scale `s_new` using fresh thresholds.
pub fn round_sampler<R: Rng + ?Sized>(child: Sampler, s_new: &BigUint, rng: &mut R) -> Result<Sampler, SamplerError> {
    if *s_new < child.s {
        return Err(SamplerError::ScaleTooSmall);
    }
    let l_new = units(&ceil_div(&(&child.s * child.l), s_new))?;
    let thresholds: Vec<BigUint> = (0..=l_new).map(|y| s_new * y + rng.gen_biguint_below(s_new)).collect();
    round_with_thresholds(child, s_new, thresholds)
}

/// Round node with explicit thresholds `r_y` in `[y S', (y+1) S')`.
pub fn round_with_thresholds(child: Sampler, s_new: &BigUint, thresholds: Vec<BigUint>) -> Result<Sampler, SamplerError> {
    if *s_new < child.s {
        return Err(SamplerError::ScaleTooSmall);
    }
    let l_new = units(&ceil_div(&(&child.s * child.l), s_new))?;
    if thresholds.len() as u64 != l_new + 1 {
        return Err(SamplerError::BadThreshold(thresholds.len()));
    }
    for (y, r) in thresholds.iter().enumerate() {
        let lo = s_new * y;
        if *r < lo || *r >= &lo + s_new {
            return Err(SamplerError::BadThreshold(y));
        }
    }
    let s = &child.s;
    let xcap: Vec<u64> = thresholds.iter().map(|r| (r / s).to_u64().unwrap_or(u64::MAX).min(child.l)).collect();
    let mut alpha = Vec::with_capacity(child.l as usize + 1);
    let mut f = vec![XReal::zero(); l_new as usize + 1];
    for x in 0..=child.l {
        let xs = s * x;
        let (y, _) = xs.div_rem(s_new);
        let y = y.to_u64().unwrap();
        let a = if xs > thresholds[y as usize] { y + 1 } else { y };
        alpha.push(a);
        f[a as usize] += child.f.get(x);
    }
    let sigma2 = child.sigma2 + sigma2_of(1, s_new);
    let delta = child.delta;
    let tiny = child.tiny.clone();
    let uni = child.universe.clone();
    let has_cands = child.has_cands;
    let ledger = child.ledger;
    let mut node = Sampler::node(Body::Round { child: Box::new(child), thresholds, xcap, alpha }, s_new.clone(), f, sigma2, delta, tiny, uni);
    node.has_cands = has_cands;
    node.ledger = ledger;
    Ok(node)
}

/// Product family of two samplers at the same scale. `delta_conv` defaults
/// to a tenth of the merged delta.
pub fn merge_samplers<R: Rng + ?Sized>(left: Sampler, right: Sampler, delta_conv: Option<f64>, rng: &mut R) -> Result<Sampler, SamplerError> {
    merge_samplers_with(left, right, delta_conv, convolution::ConvPath::Auto, rng)
}

/// `merge_samplers` with an explicit choice of convolution.
pub fn merge_samplers_with<R: Rng + ?Sized>(
    left: Sampler,
    right: Sampler,
    delta_conv: Option<f64>,
    path: convolution::ConvPath,
    rng: &mut R,
) -> Result<Sampler, SamplerError> {
    if left.s != right.s {
        return Err(SamplerError::ScaleMismatch);
    }
    for d in [left.delta, right.delta] {
        if d >= 0.1 {
            return Err(SamplerError::DeltaTooLarge(d));
        }
    }
    let delta = 4.0 * left.delta + 4.0 * right.delta;
    let (fl, fr) = (left.f.values(), right.f.values());
    let f = if fl.len() == 1 && fl[0] == XReal::one() {
        fr.to_vec()
    } else if fr.len() == 1 && fr[0] == XReal::one() {
        fl.to_vec()
    } else if delta == 0.0 {
        convolution::conv_xreal_exact(fl, fr)
    } else {
        let dc = delta_conv.unwrap_or(delta / 10.0).min(0.2);
        convolution::merge_conv(fl, fr, dc, path, rng)?
    };
    let sigma2 = left.sigma2 + right.sigma2;
    let tiny = merge_sorted(&left.tiny, &right.tiny);
    let uni = merge_sorted(&left.universe, &right.universe);
    let has_cands = left.has_cands || right.has_cands;
    let ledger = left.ledger + right.ledger;
    let s = left.s.clone();
    let cache = SplitCache::new(f.len());
    let mut node = Sampler::node(Body::Merge(Box::new(left), Box::new(right), cache), s, f, sigma2, delta, tiny, uni);
    node.has_cands = has_cands;
    node.ledger = ledger;
    Ok(node)
}

// ---------------------------------------------------------------------------
// queries

// sparse bivariate polynomial keyed by (u-degree, v-degree)
type Poly2 = BTreeMap<(u64, usize), XReal>;

impl Sampler {
    /// Near-uniform element of `{X : w(X) <= x S}` with its rounded weight;
    /// `None` when no element fits.
    pub fn query<R: Rng + ?Sized>(&self, x: u64, rng: &mut R) -> Option<QueryResult> {
        let mut items = Vec::new();
        let (weight, candidate) = self.query_into(x, rng, &mut items)?;
        items.sort_unstable();
        Some(QueryResult { items, weight, candidate })
    }

    fn query_into<R: Rng + ?Sized>(&self, x: u64, rng: &mut R, out: &mut Vec<usize>) -> Option<(u64, Option<usize>)> {
        match &self.body {
            Body::Unit => Some((0, None)),
            Body::LeafDp(leaf, table) => {
                let picked = table.sample(&leaf.w, x, rng);
                let mut w = 0;
                for i in picked {
                    out.push(leaf.items[i]);
                    w += leaf.w[i];
                }
                Some((w, None))
            }
            Body::LeafCc(leaf, table) => {
                let picked = self.cc_query(leaf, table, x, rng);
                let mut w = 0;
                for i in picked {
                    out.push(leaf.items[i]);
                    w += leaf.w[i];
                }
                Some((w, None))
            }
            Body::Small { plus, binom, .. } => {
                let cap = (x as usize).min(plus.len());
                let z = sample_weighted(&binom[..=cap], rng)?;
                for i in rand::seq::index::sample(rng, plus.len(), z) {
                    out.push(plus[i]);
                }
                Some((z as u64, None))
            }
            Body::NChoose1 { cands, order } => {
                let fit = order.partition_point(|&i| cands[i].w <= x);
                if fit == 0 {
                    return None;
                }
                let c = order[rng.gen_range(0..fit as u64) as usize];
                out.extend_from_slice(&cands[c].items);
                Some((cands[c].w, Some(c)))
            }
            Body::Round { child, xcap, alpha, .. } => {
                let y = x.min(self.l) as usize;
                let (w, c) = child.query_into(xcap[y], rng, out)?;
                Some((alpha[w as usize], c))
            }
            Body::Merge(left, right, cache) => {
                let x = x.min(self.l);
                let cdf = cache.get(x, || {
                    let hi = x.min(left.l);
                    let weights: Vec<XReal> = (0..=hi).map(|y| left.f.get(y) * right.f.prefix_at(x - y)).collect();
                    cumulative(&weights)
                });
                let y = draw_cumulative(&cdf, rng)? as u64;
                let (w2, c2) = right.query_into(x - y, rng, out)?;
                let (w1, c1) = left.query_into(x - w2, rng, out)?;
                Some((w1 + w2, c1.or(c2)))
            }
        }
    }

    fn cc_query<R: Rng + ?Sized>(&self, leaf: &Leaf, table: &CcTable, x: u64, rng: &mut R) -> Vec<usize> {
        let x = (x as usize).min(table.l);
        let cz: Vec<XReal> = (0..=table.b).map(|z| table.at(x, z)).collect();
        let Some(z) = sample_weighted(&cz, rng) else { return Vec::new() };
        if z == 0 {
            return Vec::new();
        }
        let rounds = (10.0 / self.delta.max(1e-300)).log2().ceil().max(1.0) as usize;
        let groups_n = z * z;
        for _ in 0..rounds {
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for i in 0..leaf.items.len() {
                groups.entry(rng.gen_range(0..groups_n as u64) as usize).or_default().push(i);
            }
            let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
            groups.sort();
            // prefix products over groups; each group adds nothing or one item
            let mut pre: Vec<Poly2> = Vec::with_capacity(groups.len() + 1);
            let mut cur: Poly2 = BTreeMap::new();
            cur.insert((0, 0), XReal::one());
            pre.push(cur.clone());
            for g in &groups {
                let mut by_w: BTreeMap<u64, u64> = BTreeMap::new();
                for &i in g {
                    *by_w.entry(leaf.w[i]).or_insert(0) += 1;
                }
                let mut next = cur.clone();
                for (&(y, zz), &c) in &cur {
                    if zz == z {
                        continue;
                    }
                    for (&wi, &mult) in &by_w {
                        if y + wi <= x as u64 {
                            *next.entry((y + wi, zz + 1)).or_default() += c.mul_u64(mult);
                        }
                    }
                }
                pre.push(next.clone());
                cur = next;
            }
            let mut top: Vec<(u64, XReal)> = cur.iter().filter(|(k, _)| k.1 == z).map(|(k, v)| (k.0, *v)).collect();
            top.sort_by_key(|e| e.0);
            let total: XReal = top.iter().map(|e| e.1).sum();
            let accept = total.ratio_f64(&cz[z]);
            if rng.gen::<f64>() >= accept {
                continue;
            }
            let ws: Vec<XReal> = top.iter().map(|e| e.1).collect();
            let mut y = top[sample_weighted(&ws, rng).unwrap()].0;
            let mut zz = z;
            let mut out = Vec::with_capacity(z);
            for k in (0..groups.len()).rev() {
                let prev = &pre[k];
                let mut opts: Vec<(Option<usize>, XReal)> = Vec::with_capacity(groups[k].len() + 1);
                opts.push((None, prev.get(&(y, zz)).copied().unwrap_or_default()));
                if zz > 0 {
                    for &i in &groups[k] {
                        if leaf.w[i] <= y {
                            opts.push((Some(i), prev.get(&(y - leaf.w[i], zz - 1)).copied().unwrap_or_default()));
                        }
                    }
                }
                let ws: Vec<XReal> = opts.iter().map(|o| o.1).collect();
                let pick = sample_weighted(&ws, rng).expect("backtrack has a live option");
                if let Some(i) = opts[pick].0 {
                    out.push(i);
                    y -= leaf.w[i];
                    zz -= 1;
                }
            }
            return out;
        }
        self.overflows.fetch_add(1, Ordering::Relaxed);
        Vec::new()
    }
}

// ---------------------------------------------------------------------------
// replay, enumeration and bookkeeping

impl Sampler {
    /// Frozen `w` of an element (units of S), or `None` if it is not in `Omega`.
    pub fn rounded_weight(&self, e: &Element) -> Option<u64> {
        match &self.body {
            Body::Unit => (e.items.is_empty() && e.candidate.is_none()).then_some(0),
            Body::LeafDp(leaf, _) | Body::LeafCc(leaf, _) => {
                if e.candidate.is_some() || e.items.len() > leaf.b {
                    return None;
                }
                let mut w = 0;
                for id in &e.items {
                    let pos = leaf.items.iter().position(|x| x == id)?;
                    w += leaf.w[pos];
                }
                Some(w)
            }
            Body::Small { items, plus, .. } => {
                if e.candidate.is_some() || !e.items.iter().all(|i| items.contains(i)) {
                    return None;
                }
                Some(e.items.iter().filter(|i| plus.binary_search(i).is_ok()).count() as u64)
            }
            Body::NChoose1 { cands, .. } => {
                let c = e.candidate?;
                let cand = cands.get(c)?;
                (sorted(e.items.clone()) == cand.items).then_some(cand.w)
            }
            Body::Round { child, alpha, .. } => child.rounded_weight(e).map(|w| alpha[w as usize]),
            Body::Merge(left, right, _) => {
                let (mut li, mut ri) = (Vec::new(), Vec::new());
                for &i in &e.items {
                    if left.universe.binary_search(&i).is_ok() {
                        li.push(i);
                    } else {
                        ri.push(i);
                    }
                }
                let (lc, rc) = if left.has_cands { (e.candidate, None) } else { (None, e.candidate) };
                let wl = left.rounded_weight(&Element { items: li, candidate: lc })?;
                let wr = right.rounded_weight(&Element { items: ri, candidate: rc })?;
                Some(wl + wr)
            }
        }
    }

    /// All of `Omega` with frozen weights, when it has at most `limit` elements.
    pub fn enumerate(&self, limit: usize) -> Option<Vec<(Element, u64)>> {
        let out = match &self.body {
            Body::Unit => vec![(Element { items: vec![], candidate: None }, 0)],
            Body::LeafDp(leaf, _) | Body::LeafCc(leaf, _) => {
                let m = leaf.items.len();
                if m > 24 {
                    return None;
                }
                let mut out = Vec::new();
                for mask in 0u32..(1 << m) {
                    if mask.count_ones() as usize > leaf.b {
                        continue;
                    }
                    let idx: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).collect();
                    let w = idx.iter().map(|&i| leaf.w[i]).sum();
                    out.push((Element { items: sorted(idx.iter().map(|&i| leaf.items[i]).collect()), candidate: None }, w));
                    if out.len() > limit {
                        return None;
                    }
                }
                out
            }
            Body::Small { items, plus, .. } => {
                let m = items.len();
                if m > 24 || (1usize << m) > limit {
                    return None;
                }
                (0u32..(1 << m))
                    .map(|mask| {
                        let sel: Vec<usize> = (0..m).filter(|&i| mask >> i & 1 == 1).map(|i| items[i]).collect();
                        let w = sel.iter().filter(|i| plus.binary_search(i).is_ok()).count() as u64;
                        (Element { items: sorted(sel), candidate: None }, w)
                    })
                    .collect()
            }
            Body::NChoose1 { cands, .. } => cands
                .iter()
                .enumerate()
                .map(|(i, c)| (Element { items: c.items.clone(), candidate: Some(i) }, c.w))
                .collect(),
            Body::Round { child, alpha, .. } => child
                .enumerate(limit)?
                .into_iter()
                .map(|(e, w)| (e, alpha[w as usize]))
                .collect(),
            Body::Merge(left, right, _) => {
                let a = left.enumerate(limit)?;
                let b = right.enumerate(limit)?;
                if a.len().saturating_mul(b.len()) > limit {
                    return None;
                }
                let mut out = Vec::with_capacity(a.len() * b.len());
                for (ea, wa) in &a {
                    for (eb, wb) in &b {
                        let items = merge_sorted(&ea.items, &eb.items);
                        out.push((Element { items, candidate: ea.candidate.or(eb.candidate) }, wa + wb));
                    }
                }
                out
            }
        };
        (out.len() <= limit).then_some(out)
    }

    /// Recompute `L`, `sigma^2`, `delta`, scales and tiny sets from the
    /// children and compare with what is stored.
    pub fn check_bookkeeping(&self) -> Result<(), String> {
        for c in self.children() {
            c.check_bookkeeping()?;
        }
        if self.f.values.len() as u64 != self.l + 1 {
            return Err(format!("{:?}: table length {} vs L {}", self.kind(), self.f.values.len(), self.l));
        }
        if self.f.values.iter().any(|v| !v.is_zero() && *v < XReal::one()) {
            return Err(format!("{:?}: count below one", self.kind()));
        }
        match &self.body {
            Body::Merge(a, b, _) => {
                if a.s != self.s || b.s != self.s {
                    return Err("merge: scale".into());
                }
                if self.l != a.l + b.l {
                    return Err("merge: L".into());
                }
                if self.sigma2 != a.sigma2 + b.sigma2 {
                    return Err("merge: sigma2".into());
                }
                if self.delta != 4.0 * a.delta + 4.0 * b.delta {
                    return Err("merge: delta".into());
                }
                if self.tiny != merge_sorted(&a.tiny, &b.tiny) {
                    return Err("merge: tiny".into());
                }
            }
            Body::Round { child, .. } => {
                if self.s < child.s {
                    return Err("round: scale".into());
                }
                let l = ceil_div(&(&child.s * child.l), &self.s);
                if BigUint::from(self.l) != l {
                    return Err("round: L".into());
                }
                if self.sigma2 != child.sigma2 + sigma2_of(1, &self.s) {
                    return Err("round: sigma2".into());
                }
                if self.delta != child.delta || self.tiny != child.tiny {
                    return Err("round: delta or tiny".into());
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Human-oriented dump of the tree.
    pub fn describe(&self) -> String {
        let mut s = String::new();
        self.describe_into(0, &mut s);
        s
    }

    fn describe_into(&self, depth: usize, out: &mut String) {
        let _ = writeln!(
            out,
            "{:indent$}{:?} S={} L={} sigma2={} delta={:.3e} tiny={} ledger={:.1e}",
            "",
            self.kind(),
            self.s,
            self.l,
            self.sigma2,
            self.delta,
            self.tiny.len(),
            self.ledger,
            indent = depth * 2
        );
        for c in self.children() {
            c.describe_into(depth + 1, out);
        }
    }

    /// Number of nodes in the tree.
    pub fn node_count(&self) -> usize {
        1 + self.children().iter().map(|c| c.node_count()).sum::<usize>()
    }
}
