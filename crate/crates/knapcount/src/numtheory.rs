//! Primality testing and prime sampling.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::Rng;

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut r = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            r = mul_mod(r, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    r
}

/// Deterministic Miller-Rabin for 64-bit integers.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    const BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];
    for &p in &BASES {
        if n % p == 0 {
            return n == p;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'outer: for &a in &BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Smallest prime strictly greater than `x`.
pub fn next_prime(x: u64) -> u64 {
    let mut c = x + 1;
    while !is_prime_u64(c) {
        c += 1;
    }
    c
}

/// Uniform-ish random prime in `[lo, hi]` by rejection over candidates;
/// falls back to the smallest prime above `lo - 1` when none is found.
pub fn random_prime_in<R: Rng + ?Sized>(lo: u64, hi: u64, rng: &mut R) -> u64 {
    if hi >= lo {
        for _ in 0..64 * (64 - (hi | 1).leading_zeros() as usize) {
            let c = rng.gen_range(lo..=hi);
            if is_prime_u64(c) {
                return c;
            }
        }
        // scan the interval once before giving up on it
        if hi - lo < 1 << 20 {
            if let Some(p) = (lo..=hi).find(|&c| is_prime_u64(c)) {
                return p;
            }
        }
    }
    next_prime(lo.saturating_sub(1))
}

/// Miller-Rabin with `rounds` random bases; error below `4^-rounds`.
pub fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rounds: u32, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    if n.bits() <= 64 {
        let mut d = n.to_u64_digits();
        return is_prime_u64(d.pop().unwrap_or(0));
    }
    for p in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if (n % p).is_zero() {
            return false;
        }
    }
    let n1 = n - 1u32;
    let s = n1.trailing_zeros().unwrap();
    let d = &n1 >> s;
    'outer: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n1);
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = (&x * &x) % n;
            if x == n1 {
                continue 'outer;
            }
        }
        return false;
    }
    true
}

/// Random prime in `[lo, hi]` (probabilistic test, 50 rounds).
pub fn random_big_prime_in<R: Rng + ?Sized>(lo: &BigUint, hi: &BigUint, rng: &mut R) -> BigUint {
    let hi1 = hi + 1u32;
    loop {
        let c = rng.gen_biguint_range(lo, &hi1) | BigUint::one();
        if c <= *hi && is_probable_prime(&c, 50, rng) {
            return c;
        }
    }
}
