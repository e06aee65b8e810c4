//! Number-theoretic transforms modulo two primes of the form `c 2^32 + 1`
//! and the big-integer product built on them.
//!
//! Operands are split into 32-bit digits. Each digit product sum is below
//! `len 2^64 < 2^96`, and the two moduli multiply to about `2^124`, so the
//! Chinese remainder step recovers every coefficient exactly.

use std::sync::OnceLock;

use num_bigint::BigUint;

pub const PRIMES: [u64; 2] = [4611685941117976577, 4611685692009873409];

/// Largest supported transform, as a power of two.
pub const MAX_LOG: u32 = 32;

/// Montgomery arithmetic modulo an odd `p < 2^63`, with `R = 2^64`.
#[derive(Clone, Copy, Debug)]
struct Mont {
    p: u64,
    /// `p^-1 mod 2^64`
    pinv: u64,
    /// `R^2 mod p`
    r2: u64,
}

impl Mont {
    fn new(p: u64) -> Mont {
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p.wrapping_mul(inv)));
        }
        let r = ((1u128 << 64) % p as u128) as u64;
        let r2 = ((r as u128 * r as u128) % p as u128) as u64;
        Mont { p, pinv: inv, r2 }
    }

    #[inline]
    fn redc(&self, t: u128) -> u64 {
        let m = (t as u64).wrapping_mul(self.pinv);
        let mp = m as u128 * self.p as u128;
        let (hi, mhi) = ((t >> 64) as u64, (mp >> 64) as u64);
        let (d, borrow) = hi.overflowing_sub(mhi);
        d.wrapping_add(self.p & (borrow as u64).wrapping_neg())
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(a as u128 * b as u128)
    }

    /// Needs `a < p`.
    fn to_mont(&self, a: u64) -> u64 {
        self.mul(a, self.r2)
    }

    fn from_mont(&self, a: u64) -> u64 {
        self.redc(a as u128)
    }

    #[inline]
    fn add(&self, a: u64, b: u64) -> u64 {
        let (d, borrow) = (a + b).overflowing_sub(self.p);
        d.wrapping_add(self.p & (borrow as u64).wrapping_neg())
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        let (d, borrow) = a.overflowing_sub(b);
        d.wrapping_add(self.p & (borrow as u64).wrapping_neg())
    }

    fn pow(&self, mut base: u64, mut e: u64) -> u64 {
        let mut acc = self.to_mont(1);
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

/// Precomputed data for one prime.
struct Field {
    m: Mont,
    /// Element of order `2^MAX_LOG`, Montgomery form.
    root: u64,
}

impl Field {
    fn new(p: u64) -> Field {
        let m = Mont::new(p);
        let minus_one = m.to_mont(p - 1);
        // any quadratic non-residue raised to (p-1)/2^32 has order 2^32
        let x = (2..)
            .map(|g| m.to_mont(g))
            .find(|&g| m.pow(g, (p - 1) / 2) == minus_one)
            .unwrap();
        let root = m.pow(x, (p - 1) >> MAX_LOG);
        Field { m, root }
    }

    /// In-place cyclic transform of length `2^k`; `inverse` also scales by `2^-k`.
    fn transform(&self, a: &mut [u64], inverse: bool) {
        let n = a.len();
        let k = n.trailing_zeros();
        let m = &self.m;
        let mut j = 0;
        for i in 1..n {
            let mut bit = n >> 1;
            while j & bit != 0 {
                j ^= bit;
                bit >>= 1;
            }
            j |= bit;
            if i < j {
                a.swap(i, j);
            }
        }
        let mut w_n = m.pow(self.root, 1u64 << (MAX_LOG - k));
        if inverse {
            w_n = m.pow(w_n, (1u64 << k) - 1);
        }
        // roots[h + i] = w_{2h}^i for each stage half-width h
        let mut roots = vec![m.to_mont(1); n.max(2)];
        let mut half = n / 2;
        let mut w = w_n;
        while half >= 1 {
            for i in 1..half {
                roots[half + i] = m.mul(roots[half + i - 1], w);
            }
            w = m.mul(w, w);
            half /= 2;
        }
        let mut half = 1;
        while half < n {
            let r = &roots[half..2 * half];
            for chunk in a.chunks_exact_mut(2 * half) {
                let (lo, hi) = chunk.split_at_mut(half);
                for ((x, y), &w) in lo.iter_mut().zip(hi.iter_mut()).zip(r) {
                    let u = *x;
                    let v = m.mul(*y, w);
                    *x = m.add(u, v);
                    *y = m.sub(u, v);
                }
            }
            half *= 2;
        }
        if inverse {
            let inv_n = m.pow(m.to_mont((m.p + 1) / 2), k as u64);
            for x in a.iter_mut() {
                *x = m.mul(*x, inv_n);
            }
        }
    }

    /// Cyclic product of digit vectors, result reduced mod p (plain form).
    fn cyclic(&self, a: &[u32], b: &[u32], n: usize) -> Vec<u64> {
        let m = &self.m;
        let load = |xs: &[u32]| {
            let mut v = vec![0u64; n];
            for (d, &x) in v.iter_mut().zip(xs) {
                *d = m.to_mont(x as u64);
            }
            v
        };
        let mut fa = load(a);
        self.transform(&mut fa, false);
        let mut fb = load(b);
        self.transform(&mut fb, false);
        for (x, y) in fa.iter_mut().zip(&fb) {
            *x = m.mul(*x, *y);
        }
        drop(fb);
        self.transform(&mut fa, true);
        for x in fa.iter_mut() {
            *x = m.from_mont(*x);
        }
        fa
    }
}

fn fields() -> &'static [Field; 2] {
    static F: OnceLock<[Field; 2]> = OnceLock::new();
    F.get_or_init(|| [Field::new(PRIMES[0]), Field::new(PRIMES[1])])
}

/// Linear convolution of digit vectors with exact `u128` coefficients.
/// Panics if the result is longer than `2^32`.
pub fn conv_digits(a: &[u32], b: &[u32]) -> Vec<u128> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out = a.len() + b.len() - 1;
    let n = out.next_power_of_two();
    assert!(n.trailing_zeros() <= MAX_LOG, "transform too long");
    let [f0, f1] = fields();
    let r0 = f0.cyclic(a, b, n);
    let r1 = f1.cyclic(a, b, n);
    let (p0, p1) = (PRIMES[0], PRIMES[1]);
    let m1 = &f1.m;
    // p0^-1 mod p1, Montgomery form
    let inv = m1.pow(m1.to_mont(p0), p1 - 2);
    (0..out)
        .map(|i| {
            let d = m1.sub(m1.to_mont(r1[i]), m1.to_mont(r0[i]));
            let k = m1.from_mont(m1.mul(d, inv));
            r0[i] as u128 + p0 as u128 * k as u128
        })
        .collect()
}

/// Big-integer product through the transform.
pub fn mul(a: &BigUint, b: &BigUint) -> BigUint {
    let (da, db) = (a.to_u32_digits(), b.to_u32_digits());
    let coeffs = conv_digits(&da, &db);
    let mut digits = Vec::with_capacity(coeffs.len() + 4);
    let mut carry: u128 = 0;
    for c in coeffs {
        carry += c;
        digits.push(carry as u32);
        carry >>= 32;
    }
    while carry > 0 {
        digits.push(carry as u32);
        carry >>= 32;
    }
    BigUint::new(digits)
}
