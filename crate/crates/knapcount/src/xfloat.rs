//! Nonnegative reals with a 96-bit mantissa and a 64-bit binary exponent.
//!
//! Counts in this crate run up to `2^n` and, inside the sum-approximation
//! convolution, up to `D^{O(M)}`, so `f64` is not wide enough. `XReal` keeps
//! a normalized integer mantissa `m` in `[2^95, 2^96)` and an exponent `e`,
//! with value `m * 2^e`. Every operation rounds to nearest, ties to even.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign};
use std::str::FromStr;

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Mantissa width in bits.
pub const PRECISION: u32 = 96;

const TOP: u128 = 1 << (PRECISION - 1);
const GUARD: u32 = 30;

#[derive(Debug, Error, PartialEq)]
pub enum XRealError {
    #[error("subtraction would go negative")]
    Negative,
    #[error("division by zero")]
    DivByZero,
    #[error("cannot parse `{0}` as an XReal")]
    Parse(String),
    #[error("value {0} is negative or not finite")]
    NotFinite(f64),
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct XReal {
    m: u128,
    e: i64,
}

pub const ZERO: XReal = XReal { m: 0, e: 0 };
pub const ONE: XReal = XReal { m: TOP, e: -(PRECISION as i64 - 1) };

// Round a wide mantissa to PRECISION bits. `sticky` marks nonzero bits
// already discarded below `m`; callers only set it when `m` has more than
// PRECISION + 1 significant bits.
fn round_from(m: u128, e: i64, sticky: bool) -> XReal {
    if m == 0 {
        return ZERO;
    }
    let bits = 128 - m.leading_zeros();
    if bits <= PRECISION {
        let sh = PRECISION - bits;
        return XReal { m: m << sh, e: e - sh as i64 };
    }
    let sh = bits - PRECISION;
    let kept = m >> sh;
    let rem = m & ((1u128 << sh) - 1);
    let half = 1u128 << (sh - 1);
    let up = rem > half || (rem == half && (sticky || kept & 1 == 1));
    let mut kept = kept + up as u128;
    let mut e = e + sh as i64;
    if kept == TOP << 1 {
        kept >>= 1;
        e += 1;
    }
    XReal { m: kept, e }
}

// Full 128x128 -> 256 bit product as (hi, lo).
fn mul_wide(a: u128, b: u128) -> (u128, u128) {
    const M64: u128 = u64::MAX as u128;
    let (a1, a0) = (a >> 64, a & M64);
    let (b1, b0) = (b >> 64, b & M64);
    let p00 = a0 * b0;
    let p01 = a0 * b1;
    let p10 = a1 * b0;
    let p11 = a1 * b1;
    let mid = (p00 >> 64) + (p01 & M64) + (p10 & M64);
    let lo = (p00 & M64) | (mid << 64);
    let hi = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
    (hi, lo)
}

fn ldexp(mut x: f64, mut k: i64) -> f64 {
    while k > 1000 {
        x *= 2f64.powi(1000);
        k -= 1000;
        if x.is_infinite() {
            return x;
        }
    }
    while k < -1000 {
        x *= 2f64.powi(-1000);
        k += 1000;
        if x == 0.0 {
            return x;
        }
    }
    x * 2f64.powi(k as i32)
}

impl XReal {
    pub const fn zero() -> XReal {
        ZERO
    }

    pub const fn one() -> XReal {
        ONE
    }

    pub fn is_zero(&self) -> bool {
        self.m == 0
    }

    /// `2^k`.
    pub fn pow2(k: i64) -> XReal {
        XReal { m: TOP, e: k - (PRECISION as i64 - 1) }
    }

    pub fn from_u64(v: u64) -> XReal {
        round_from(v as u128, 0, false)
    }

    pub fn from_u128(v: u128) -> XReal {
        round_from(v, 0, false)
    }

    pub fn from_biguint(v: &BigUint) -> XReal {
        let bits = v.bits();
        if bits <= 128 {
            return XReal::from_u128(v.to_u128().unwrap());
        }
        // keep 127 bits plus a sticky flag for the rest
        let sh = bits - 127;
        let top: BigUint = v >> sh;
        let sticky = v.trailing_zeros().map_or(false, |tz| tz < sh);
        round_from(top.to_u128().unwrap(), sh as i64, sticky)
    }

    pub fn from_f64(x: f64) -> Result<XReal, XRealError> {
        if !x.is_finite() || x < 0.0 {
            return Err(XRealError::NotFinite(x));
        }
        if x == 0.0 {
            return Ok(ZERO);
        }
        let bits = x.to_bits();
        let exp = ((bits >> 52) & 0x7ff) as i64;
        let frac = bits & ((1u64 << 52) - 1);
        let (m, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
        Ok(round_from(m as u128, e, false))
    }

    /// Raw parts `(m, e)` with value `m * 2^e`, `m` in `[2^95, 2^96)` or zero.
    pub fn raw(&self) -> (u128, i64) {
        (self.m, self.e)
    }

    /// Floor of log2, i.e. the binary exponent of the leading bit. None for zero.
    pub fn exponent(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.e + PRECISION as i64 - 1)
        }
    }

    pub fn log2(&self) -> f64 {
        match self.exponent() {
            None => f64::NEG_INFINITY,
            Some(k) => k as f64 + ((self.m >> 43) as f64 / (1u64 << 52) as f64).log2(),
        }
    }

    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        ldexp(self.m as f64, self.e)
    }

    /// Largest integer not above the value.
    pub fn to_biguint_floor(&self) -> BigUint {
        if self.e >= 0 {
            BigUint::from(self.m) << self.e as u64
        } else if self.e <= -(PRECISION as i64) {
            BigUint::zero()
        } else {
            BigUint::from(self.m >> (-self.e) as u32)
        }
    }

    /// `self * 2^k`, exact.
    pub fn mul_pow2(&self, k: i64) -> XReal {
        if self.is_zero() {
            ZERO
        } else {
            XReal { m: self.m, e: self.e + k }
        }
    }

    pub fn add(&self, other: &XReal) -> XReal {
        if self.is_zero() {
            return *other;
        }
        if other.is_zero() {
            return *self;
        }
        let (big, small) = if self.e >= other.e { (self, other) } else { (other, self) };
        let d = (big.e - small.e) as u64;
        if d > 126 {
            return *big;
        }
        let a = big.m << GUARD;
        let (b, sticky) = shift_out(small.m << GUARD, d as u32);
        round_from(a + b, big.e - GUARD as i64, sticky)
    }

    /// `self - other`; errors when the result would be negative.
    pub fn sub_nonneg(&self, other: &XReal) -> Result<XReal, XRealError> {
        match self.cmp(other) {
            Ordering::Less => return Err(XRealError::Negative),
            Ordering::Equal => return Ok(ZERO),
            Ordering::Greater => {}
        }
        if other.is_zero() {
            return Ok(*self);
        }
        let d = (self.e - other.e) as u64;
        if d > 126 {
            return Ok(*self);
        }
        let a = self.m << GUARD;
        let (b, sticky) = shift_out(other.m << GUARD, d as u32);
        let mut diff = a - b;
        if sticky {
            diff -= 1;
        }
        Ok(round_from(diff, self.e - GUARD as i64, sticky))
    }

    /// `max(self - other, 0)`.
    pub fn sub_saturating(&self, other: &XReal) -> XReal {
        self.sub_nonneg(other).unwrap_or(ZERO)
    }

    pub fn mul(&self, other: &XReal) -> XReal {
        if self.is_zero() || other.is_zero() {
            return ZERO;
        }
        let (hi, lo) = mul_wide(self.m, other.m);
        let top = (hi << 64) | (lo >> 64);
        let sticky = lo & (u64::MAX as u128) != 0;
        round_from(top, self.e + other.e + 64, sticky)
    }

    pub fn checked_div(&self, other: &XReal) -> Result<XReal, XRealError> {
        if other.is_zero() {
            return Err(XRealError::DivByZero);
        }
        if self.is_zero() {
            return Ok(ZERO);
        }
        // q = floor(m_a * 2^97 / m_b), between 97 and 98 bits
        let mut r = self.m;
        let mut q: u128 = 0;
        for _ in 0..98 {
            q <<= 1;
            if r >= other.m {
                r -= other.m;
                q |= 1;
            }
            r <<= 1;
        }
        Ok(round_from(q, self.e - other.e - 97, r != 0))
    }

    /// `self / other` as f64 without building the quotient; zero divisor
    /// gives infinity (or 0 for 0/0).
    pub fn ratio_f64(&self, other: &XReal) -> f64 {
        if other.is_zero() {
            return if self.is_zero() { 0.0 } else { f64::INFINITY };
        }
        if self.is_zero() {
            return 0.0;
        }
        ldexp(self.m as f64 / other.m as f64, self.e - other.e)
    }

    /// Multiply by a nonnegative integer.
    pub fn mul_u64(&self, k: u64) -> XReal {
        self.mul(&XReal::from_u64(k))
    }

    /// Human-readable decimal.
    pub fn to_decimal_string(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        if self.e >= 0 {
            let s = self.to_biguint_floor().to_string();
            return if s.len() <= 25 { s } else { sci_from_digits(&s, s.len() as i64 - 1) };
        }
        // below 2^96: either has a fractional part or is small
        let trailing = self.m.trailing_zeros() as i64;
        if self.e + trailing >= 0 {
            return self.to_biguint_floor().to_string();
        }
        let f = self.to_f64();
        if f.is_normal() {
            return if f >= 1e-4 && f < 1e21 { format!("{}", f) } else { format!("{:e}", f) };
        }
        // subnormal or underflowed: go through log10
        let l10 = self.log2() * std::f64::consts::LOG10_2;
        let k = l10.floor();
        format!("{:.15}e{}", 10f64.powf(l10 - k), k as i64)
    }

    /// Exact text form `0x<hex mantissa> e<+/-binary exponent>`, trailing
    /// zero bits stripped, e.g. `0x5 e+0` or `0x1 e+70`.
    pub fn to_exact_string(&self) -> String {
        if self.is_zero() {
            return "0x0 e+0".to_string();
        }
        let tz = self.m.trailing_zeros();
        format!("{:#x} e{:+}", self.m >> tz, self.e + tz as i64)
    }

    pub fn parse_exact(s: &str) -> Result<XReal, XRealError> {
        let err = || XRealError::Parse(s.to_string());
        let (mant, exp) = s.trim().split_once(' ').ok_or_else(err)?;
        let mant = mant.strip_prefix("0x").ok_or_else(err)?;
        let exp = exp.strip_prefix('e').ok_or_else(err)?;
        let m = u128::from_str_radix(mant, 16).map_err(|_| err())?;
        let e: i64 = exp.parse().map_err(|_| err())?;
        if m == 0 {
            return Ok(ZERO);
        }
        if 128 - m.leading_zeros() > PRECISION {
            return Err(err());
        }
        Ok(round_from(m, e, false))
    }
}

// Shift right by d, reporting whether any set bit fell off.
fn shift_out(v: u128, d: u32) -> (u128, bool) {
    if d == 0 {
        (v, false)
    } else if d >= 128 {
        (0, v != 0)
    } else {
        (v >> d, v & ((1u128 << d) - 1) != 0)
    }
}

fn sci_from_digits(digits: &str, exp10: i64) -> String {
    let sig: String = digits.chars().take(17).collect();
    let rest = sig[1..].trim_end_matches('0');
    if rest.is_empty() {
        format!("{}e{}", &sig[..1], exp10)
    } else {
        format!("{}.{}e{}", &sig[..1], rest, exp10)
    }
}

impl Ord for XReal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => self.e.cmp(&other.e).then(self.m.cmp(&other.m)),
        }
    }
}

impl PartialOrd for XReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Add for XReal {
    type Output = XReal;
    fn add(self, rhs: XReal) -> XReal {
        XReal::add(&self, &rhs)
    }
}

impl AddAssign for XReal {
    fn add_assign(&mut self, rhs: XReal) {
        *self = XReal::add(self, &rhs);
    }
}

impl Mul for XReal {
    type Output = XReal;
    fn mul(self, rhs: XReal) -> XReal {
        XReal::mul(&self, &rhs)
    }
}

impl MulAssign for XReal {
    fn mul_assign(&mut self, rhs: XReal) {
        *self = XReal::mul(self, &rhs);
    }
}

/// Panics on a zero divisor; use `checked_div` otherwise.
impl Div for XReal {
    type Output = XReal;
    fn div(self, rhs: XReal) -> XReal {
        self.checked_div(&rhs).expect("XReal division by zero")
    }
}

impl Sum for XReal {
    fn sum<I: Iterator<Item = XReal>>(iter: I) -> XReal {
        iter.fold(ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a XReal> for XReal {
    fn sum<I: Iterator<Item = &'a XReal>>(iter: I) -> XReal {
        iter.fold(ZERO, |a, b| a + *b)
    }
}

impl From<u64> for XReal {
    fn from(v: u64) -> XReal {
        XReal::from_u64(v)
    }
}

impl From<&BigUint> for XReal {
    fn from(v: &BigUint) -> XReal {
        XReal::from_biguint(v)
    }
}

impl fmt::Display for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl fmt::Debug for XReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "XReal({} = {})", self.to_exact_string(), self.to_decimal_string())
    }
}

impl FromStr for XReal {
    type Err = XRealError;
    fn from_str(s: &str) -> Result<XReal, XRealError> {
        XReal::parse_exact(s)
    }
}

impl Serialize for XReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_exact_string())
    }
}

impl<'de> Deserialize<'de> for XReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<XReal, D::Error> {
        let s = String::deserialize(d)?;
        XReal::parse_exact(&s).map_err(serde::de::Error::custom)
    }
}
