//! Exact convolution, weighted witness counts for (max,+)-convolution of
//! monotone arrays, and sum-approximation convolution of count functions.

use std::collections::HashSet;

use num_bigint::BigUint;
use num_traits::Zero;
use rand::Rng;
use thiserror::Error;

use crate::numtheory;
use crate::xfloat::XReal;

#[derive(Debug, Error, PartialEq)]
pub enum ConvError {
    #[error("array is not monotone non-decreasing at index {0}")]
    NotMonotone(usize),
    #[error("length mismatch: {0} values for {1} entries")]
    LengthMismatch(usize, usize),
    #[error("delta {0} outside (0, 1/4)")]
    DeltaOutOfRange(f64),
    #[error("entry {0} lies strictly between 0 and 1")]
    BelowOne(usize),
    #[error("modulus must exceed 1")]
    BadPrime,
    #[error("empty input")]
    Empty,
}

const SCHOOLBOOK_LIMIT: usize = 32;

/// Below this many bits in the shorter factor the library product is faster.
const NTT_MIN_BITS: u64 = 1 << 23;

pub fn conv_schoolbook(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut c = vec![BigUint::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                c[i + j] += x * y;
            }
        }
    }
    c
}

/// Kronecker substitution: pack both arrays into one big integer each with
/// slots wide enough that no coefficient of the product carries into the
/// next, multiply once, unpack.
pub fn conv_kronecker(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    kronecker(a, b, |x, y| if x.bits().min(y.bits()) >= NTT_MIN_BITS { crate::ntt::mul(x, y) } else { x * y })
}

/// Kronecker substitution with the product always taken by the transform.
pub fn conv_ntt(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    kronecker(a, b, crate::ntt::mul)
}

fn kronecker(a: &[BigUint], b: &[BigUint], mul: impl Fn(&BigUint, &BigUint) -> BigUint) -> Vec<BigUint> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let ba = a.iter().map(|x| x.bits()).max().unwrap();
    let bb = b.iter().map(|x| x.bits()).max().unwrap();
    let out_len = a.len() + b.len() - 1;
    if ba == 0 || bb == 0 {
        return vec![BigUint::zero(); out_len];
    }
    let bits = ba + bb + 64 - (a.len().min(b.len()) as u64).leading_zeros() as u64 + 1;
    let slot = ((bits + 31) / 32) as usize;
    let pack = |xs: &[BigUint]| {
        let mut digits = vec![0u32; xs.len() * slot];
        for (i, x) in xs.iter().enumerate() {
            for (k, d) in x.iter_u32_digits().enumerate() {
                digits[i * slot + k] = d;
            }
        }
        BigUint::new(digits)
    };
    let prod = mul(&pack(a), &pack(b));
    let digits = prod.to_u32_digits();
    (0..out_len)
        .map(|i| {
            let lo = (i * slot).min(digits.len());
            let hi = ((i + 1) * slot).min(digits.len());
            BigUint::from_slice(&digits[lo..hi])
        })
        .collect()
}

/// Exact convolution of nonnegative integer arrays.
pub fn conv_exact(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    if a.len().min(b.len()) <= SCHOOLBOOK_LIMIT {
        conv_schoolbook(a, b)
    } else {
        conv_kronecker(a, b)
    }
}

/// `(max,+)` result: `c[k] = max_{i+j=k} a[i] + b[j]` and the witness
/// weight `w[k] = sum of u[i] v[j]` over the maximizing pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct WitnessResult {
    pub c: Vec<i64>,
    pub w: Vec<XReal>,
}

/// Maximal constant stretch `[i1, i2]` of both `a[i]` and `b[k - i]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segment {
    pub i1: usize,
    pub i2: usize,
    pub k: usize,
}

// run_start[i] / run_end[i]: bounds of the constant run containing i
struct Runs {
    start: Vec<usize>,
    end: Vec<usize>,
}

impl Runs {
    fn new(a: &[i64]) -> Runs {
        let n = a.len();
        let mut start = vec![0; n];
        let mut end = vec![0; n];
        for i in 1..n {
            start[i] = if a[i] == a[i - 1] { start[i - 1] } else { i };
        }
        if n > 0 {
            end[n - 1] = n - 1;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            end[i] = if a[i] == a[i + 1] { end[i + 1] } else { i };
        }
        Runs { start, end }
    }
}

fn check_monotone(a: &[i64]) -> Result<(), ConvError> {
    match a.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => Err(ConvError::NotMonotone(i + 1)),
        None => Ok(()),
    }
}

struct SegmentWalker<'a> {
    a: &'a [i64],
    b: &'a [i64],
    ra: Runs,
    rb: Runs,
}

impl<'a> SegmentWalker<'a> {
    fn new(a: &'a [i64], b: &'a [i64]) -> Self {
        SegmentWalker { a, b, ra: Runs::new(a), rb: Runs::new(b) }
    }

    fn out_len(&self) -> usize {
        self.a.len() + self.b.len() - 1
    }

    // calls f(i1, i2, value) for each segment of target index k
    fn for_each<F: FnMut(usize, usize, i64)>(&self, k: usize, mut f: F) {
        let lo = k.saturating_sub(self.b.len() - 1);
        let hi = k.min(self.a.len() - 1);
        let mut i = lo;
        while i <= hi {
            let j = k - i;
            let i2 = self.ra.end[i].min(k - self.rb.start[j]).min(hi);
            f(i, i2, self.a[i] + self.b[j]);
            i = i2 + 1;
        }
    }

    fn c_only(&self) -> Vec<i64> {
        (0..self.out_len())
            .map(|k| {
                let mut best = i64::MIN;
                self.for_each(k, |_, _, v| best = best.max(v));
                best
            })
            .collect()
    }
}

/// The (max,+)-convolution alone.
pub fn maxplus_c(a: &[i64], b: &[i64]) -> Result<Vec<i64>, ConvError> {
    if a.is_empty() || b.is_empty() {
        return Err(ConvError::Empty);
    }
    check_monotone(a)?;
    check_monotone(b)?;
    Ok(SegmentWalker::new(a, b).c_only())
}

fn check_witness_input(a: &[i64], b: &[i64], u: usize, v: usize) -> Result<(), ConvError> {
    if a.is_empty() || b.is_empty() {
        return Err(ConvError::Empty);
    }
    if a.len() != u {
        return Err(ConvError::LengthMismatch(u, a.len()));
    }
    if b.len() != v {
        return Err(ConvError::LengthMismatch(v, b.len()));
    }
    check_monotone(a)?;
    check_monotone(b)
}

/// Reference: walk every segment, sum the products on maximizing ones.
pub fn maxplus_witness_ref(a: &[i64], b: &[i64], u: &[XReal], v: &[XReal]) -> Result<WitnessResult, ConvError> {
    check_witness_input(a, b, u.len(), v.len())?;
    let walker = SegmentWalker::new(a, b);
    let c = walker.c_only();
    let w = c
        .iter()
        .enumerate()
        .map(|(k, &ck)| {
            let mut acc = XReal::zero();
            walker.for_each(k, |i1, i2, val| {
                if val == ck {
                    for i in i1..=i2 {
                        acc += u[i] * v[k - i];
                    }
                }
            });
            acc
        })
        .collect();
    Ok(WitnessResult { c, w })
}

/// Segments whose value agrees with `c[k]` modulo `p` without being equal.
pub fn false_positive_segments(a: &[i64], b: &[i64], c: &[i64], p: u64) -> Result<Vec<Segment>, ConvError> {
    if p <= 1 {
        return Err(ConvError::BadPrime);
    }
    if a.is_empty() || b.is_empty() {
        return Err(ConvError::Empty);
    }
    check_monotone(a)?;
    check_monotone(b)?;
    let walker = SegmentWalker::new(a, b);
    if c.len() != walker.out_len() {
        return Err(ConvError::LengthMismatch(c.len(), walker.out_len()));
    }
    let p = p as i64;
    let mut out = Vec::new();
    for (k, &ck) in c.iter().enumerate() {
        walker.for_each(k, |i1, i2, val| {
            if val != ck && (val - ck).rem_euclid(p) == 0 {
                out.push(Segment { i1, i2, k });
            }
        });
    }
    Ok(out)
}

// Split each constant run into chunks of at most `len` indices; returns the
// chunk id of every index plus the (start, end) of every chunk.
fn chunk_runs(a: &[i64], len: usize) -> (Vec<usize>, Vec<(usize, usize)>) {
    let mut id = vec![0; a.len()];
    let mut chunks: Vec<(usize, usize)> = Vec::new();
    for i in 0..a.len() {
        let fresh = match chunks.last() {
            None => true,
            Some(&(s, _)) => a[i] != a[i - 1] || i - s >= len,
        };
        if fresh {
            chunks.push((i, i));
        } else {
            chunks.last_mut().unwrap().1 = i;
        }
        id[i] = chunks.len() - 1;
    }
    (id, chunks)
}

/// Exact integer core of the fast path. Returns `c` and exact `w`.
pub fn maxplus_witness_fast_int<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    u: &[BigUint],
    v: &[BigUint],
    rng: &mut R,
) -> Result<(Vec<i64>, Vec<BigUint>), ConvError> {
    check_witness_input(a, b, u.len(), v.len())?;
    let walker = SegmentWalker::new(a, b);
    let c = walker.c_only();
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    let range = (hi - lo).max(0) as u64;
    let root = (range as f64).sqrt().ceil() as u64;
    let p = numtheory::random_prime_in(root.max(2), 2 * root.max(2), rng);
    let p2 = 2 * p as usize;
    let pi = p as i64;

    // f(x, y) = sum u_i x^i y^(a_i mod p), flattened with y-stride 2p
    let flat = |vals: &[i64], ws: &[BigUint]| {
        let mut out = vec![BigUint::zero(); vals.len() * p2];
        for (i, (&x, w)) in vals.iter().zip(ws).enumerate() {
            out[i * p2 + x.rem_euclid(pi) as usize] = w.clone();
        }
        out
    };
    let prod = conv_exact(&flat(a, u), &flat(b, v));
    let mut w: Vec<BigUint> = c
        .iter()
        .enumerate()
        .map(|(k, &ck)| {
            let r = ck.rem_euclid(pi) as usize;
            let base = k * p2;
            let mut s = prod.get(base + r).cloned().unwrap_or_default();
            if let Some(x) = prod.get(base + r + p as usize) {
                s += x;
            }
            s
        })
        .collect();

    let fps = false_positive_segments(a, b, &c, p)?;
    if fps.is_empty() {
        return Ok((c, w));
    }
    let n = a.len().max(b.len());
    let chunk = ((n as f64) / (range.max(1) as f64).sqrt()).ceil().max(1.0) as usize + 1;
    let (ida, cha) = chunk_runs(a, chunk);
    let (idb, chb) = chunk_runs(b, chunk);

    // two pointers along each false positive segment: a-chunks advance with
    // i while b-chunks retreat with k - i
    let mut relevant: HashSet<(usize, usize, usize)> = HashSet::new();
    for s in &fps {
        let mut i = s.i1;
        while i <= s.i2 {
            let j = s.k - i;
            let (ca, cb) = (ida[i], idb[j]);
            relevant.insert((ca, cb, s.k));
            let next = cha[ca].1.min(s.k - chb[cb].0).min(s.i2);
            i = next + 1;
        }
    }
    let mut by_pair: std::collections::HashMap<(usize, usize), Vec<usize>> = std::collections::HashMap::new();
    for (ca, cb, k) in relevant {
        by_pair.entry((ca, cb)).or_default().push(k);
    }
    for ((ca, cb), ks) in by_pair {
        let (sa, ea) = cha[ca];
        let (sb, eb) = chb[cb];
        let part = conv_exact(&u[sa..=ea], &v[sb..=eb]);
        for k in ks {
            let idx = k - sa - sb;
            w[k] -= &part[idx];
        }
    }
    Ok((c, w))
}

// Common power-of-two scaling that makes every value an exact integer.
fn to_scaled_ints(xs: &[XReal]) -> (Vec<BigUint>, i64) {
    let emin = xs.iter().filter(|x| !x.is_zero()).map(|x| x.raw().1).min().unwrap_or(0);
    let ints = xs
        .iter()
        .map(|x| {
            let (m, e) = x.raw();
            if m == 0 {
                BigUint::zero()
            } else {
                BigUint::from(m) << (e - emin) as u64
            }
        })
        .collect();
    (ints, emin)
}

/// Fast path: mod-p bivariate convolution plus correction of false
/// positives. Matches `maxplus_witness_ref` up to the final rounding.
pub fn maxplus_witness_fast<R: Rng + ?Sized>(
    a: &[i64],
    b: &[i64],
    u: &[XReal],
    v: &[XReal],
    rng: &mut R,
) -> Result<WitnessResult, ConvError> {
    check_witness_input(a, b, u.len(), v.len())?;
    let (ui, eu) = to_scaled_ints(u);
    let (vi, ev) = to_scaled_ints(v);
    let (c, w) = maxplus_witness_fast_int(a, b, &ui, &vi, rng)?;
    let w = w.iter().map(|x| XReal::from_biguint(x).mul_pow2(eu + ev)).collect();
    Ok(WitnessResult { c, w })
}

// round(x * 2^shift) as an integer
fn quantize(x: &XReal, shift: i64) -> BigUint {
    let (m, e) = x.raw();
    let s = e + shift;
    if m == 0 || s < -97 {
        return BigUint::zero();
    }
    if s >= 0 {
        return BigUint::from(m) << s as u64;
    }
    let sh = (-s) as u32;
    let half = 1u128 << (sh - 1);
    let rem = m & ((1u128 << sh) - 1);
    BigUint::from((m >> sh) + (rem >= half) as u128)
}

/// `h` whose prefix sums are within `(1 +- delta)` of those of `f * g`.
///
/// Values are split by their base-`D` exponent modulo 3; within each of the
/// nine residue pairs only terms sitting at the running maximum exponent
/// matter, and those are exactly the weighted witnesses of a (max,+)
/// convolution of the prefix-max exponent arrays.
pub fn sum_approx_conv<R: Rng + ?Sized>(f: &[XReal], g: &[XReal], delta: f64, rng: &mut R) -> Result<Vec<XReal>, ConvError> {
    if !(delta > 0.0 && delta < 0.25) {
        return Err(ConvError::DeltaOutOfRange(delta));
    }
    if f.is_empty() || g.is_empty() {
        return Err(ConvError::Empty);
    }
    for (i, x) in f.iter().chain(g).enumerate() {
        if !x.is_zero() && *x < XReal::one() {
            return Err(ConvError::BelowOne(i));
        }
    }
    let out_len = f.len() + g.len() - 1;
    if f.len() == 1 || g.len() == 1 {
        // a single column: the exact product is as cheap as anything
        let (s, arr) = if f.len() == 1 { (f[0], g) } else { (g[0], f) };
        return Ok(arr.iter().map(|x| *x * s).collect());
    }
    let n = f.len().max(g.len()) - 1;
    let need = ((2 * n + 1) as f64).powi(2) / delta;
    let d = need.log2().ceil().max(1.0) as i64;
    let lg_inv_delta = (1.0 / delta).log2().ceil() as i64;
    let lg_n = (n as f64 + 2.0).log2().ceil() as i64;
    let q = d + lg_inv_delta + 2 * lg_n + 8;
    let max_bits = f.iter().chain(g).filter_map(|x| x.exponent()).max().unwrap_or(0) + 1;
    let sentinel = -10 * ((max_bits + d - 1) / d).max(1);

    let exps = |xs: &[XReal]| -> Vec<Option<i64>> { xs.iter().map(|x| x.exponent().map(|e| e / d)).collect() };
    let ef = exps(f);
    let eg = exps(g);

    // prefix-max exponent array and quantized weights for one residue class
    let prepare = |xs: &[XReal], es: &[Option<i64>], r: i64| -> Option<(Vec<i64>, Vec<BigUint>)> {
        let mut cur: Option<i64> = None;
        let mut arr = Vec::with_capacity(xs.len());
        let mut ws = Vec::with_capacity(xs.len());
        for (x, e) in xs.iter().zip(es) {
            let keep = matches!(e, Some(a) if a % 3 == r);
            if keep {
                let a = e.unwrap();
                cur = Some(cur.map_or(a, |c: i64| c.max(a)));
            }
            arr.push(cur.unwrap_or(sentinel));
            ws.push(if keep { quantize(x, q - d * cur.unwrap()) } else { BigUint::zero() });
        }
        if cur.is_none() {
            None
        } else {
            Some((arr, ws))
        }
    };

    let mut h = vec![XReal::zero(); out_len];
    for r in 0..3 {
        let Some((a, u)) = prepare(f, &ef, r) else { continue };
        for s in 0..3 {
            let Some((b, v)) = prepare(g, &eg, s) else { continue };
            let (c, w) = maxplus_witness_fast_int(&a, &b, &u, &v, rng)?;
            for k in 0..out_len {
                if w[k].is_zero() {
                    continue;
                }
                let mut val = XReal::from_biguint(&w[k]).mul_pow2(d * c[k] - 2 * q);
                if val < XReal::one() {
                    val = XReal::one();
                }
                h[k] += val;
            }
        }
    }
    Ok(h)
}

/// Exact convolution of XReal arrays, one rounding per output entry.
pub fn conv_xreal_exact(f: &[XReal], g: &[XReal]) -> Vec<XReal> {
    if f.is_empty() || g.is_empty() {
        return Vec::new();
    }
    let (fi, ef) = to_scaled_ints(f);
    let (gi, eg) = to_scaled_ints(g);
    // scaled ints can be huge when exponents spread; schoolbook in XReal then
    let spread = fi.iter().chain(&gi).map(|x| x.bits()).max().unwrap_or(0);
    if spread > 4096 {
        let mut out = vec![XReal::zero(); f.len() + g.len() - 1];
        for (i, x) in f.iter().enumerate() {
            if x.is_zero() {
                continue;
            }
            for (j, y) in g.iter().enumerate() {
                out[i + j] += *x * *y;
            }
        }
        return out;
    }
    conv_exact(&fi, &gi).iter().map(|x| XReal::from_biguint(x).mul_pow2(ef + eg)).collect()
}

/// Helper for tests and reports: prefix sums.
pub fn prefix_sums(xs: &[XReal]) -> Vec<XReal> {
    let mut acc = XReal::zero();
    xs.iter()
        .map(|x| {
            acc += *x;
            acc
        })
        .collect()
}

/// Ratio of two XReals as f64 (both nonzero or both zero).
pub fn xratio(a: &XReal, b: &XReal) -> f64 {
    if b.is_zero() {
        return if a.is_zero() { 1.0 } else { f64::INFINITY };
    }
    (*a / *b).to_f64()
}


/// Which product a merge uses for its count function.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvPath {
    /// Cheaper of the two by bit-cost estimate.
    #[default]
    Auto,
    /// Always `sum_approx_conv`.
    Witness,
    /// Always the exact product.
    Exact,
}

fn spread_bits(xs: &[XReal]) -> i64 {
    let mut it = xs.iter().filter_map(|x| x.exponent());
    let Some(first) = it.next() else { return 0 };
    let (lo, hi) = it.fold((first, first), |(lo, hi), e| (lo.min(e), hi.max(e)));
    hi - lo + 96
}

/// True when the exact product is estimated cheaper than the witness path.
/// Exact multiplies integers of `spread(f) + spread(g)` bits per slot; the
/// witness path runs at least 9 residue pairs over `2p >= 4` columns of
/// `q`-bit quantized values per slot.
pub fn exact_is_cheaper(f: &[XReal], g: &[XReal], delta: f64) -> bool {
    let len = (f.len() + g.len()) as f64;
    let q = (4.0 * len * len / delta).log2().ceil() + 64.0;
    let exact = (spread_bits(f) + spread_bits(g)) as f64;
    exact <= 72.0 * q
}

/// Convolution used by merges: within `(1 +- delta)` of `f * g` either way.
pub fn merge_conv<R: Rng + ?Sized>(f: &[XReal], g: &[XReal], delta: f64, path: ConvPath, rng: &mut R) -> Result<Vec<XReal>, ConvError> {
    let exact = match path {
        ConvPath::Exact => true,
        ConvPath::Witness => false,
        ConvPath::Auto => exact_is_cheaper(f, g, delta),
    };
    if exact {
        Ok(conv_xreal_exact(f, g))
    } else {
        sum_approx_conv(f, g, delta, rng)
    }
}
