use knapcount::convolution::*;
use knapcount::rng::stream;
use knapcount::verify::{max_prefix_error, random_count_array, random_monotone, rel_diff};
use knapcount::XReal;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng;

fn bigs(v: &[u64]) -> Vec<BigUint> {
    v.iter().map(|&a| BigUint::from(a)).collect()
}

fn xs(v: &[u64]) -> Vec<XReal> {
    v.iter().map(|&a| XReal::from_u64(a)).collect()
}

/// Pairs `(i, j)` by brute force.
fn witness_brute(a: &[i64], b: &[i64], u: &[u64], v: &[u64]) -> (Vec<i64>, Vec<u64>) {
    let len = a.len() + b.len() - 1;
    let mut c = vec![i64::MIN; len];
    for i in 0..a.len() {
        for j in 0..b.len() {
            c[i + j] = c[i + j].max(a[i] + b[j]);
        }
    }
    let mut w = vec![0u64; len];
    for i in 0..a.len() {
        for j in 0..b.len() {
            if a[i] + b[j] == c[i + j] {
                w[i + j] += u[i] * v[j];
            }
        }
    }
    (c, w)
}

#[test]
fn exact_small() {
    assert_eq!(conv_exact(&bigs(&[1, 2]), &bigs(&[3, 4])), bigs(&[3, 10, 8]));
    assert_eq!(conv_ntt(&bigs(&[1, 2]), &bigs(&[3, 4])), bigs(&[3, 10, 8]));
    assert_eq!(conv_kronecker(&bigs(&[1, 2]), &bigs(&[3, 4])), bigs(&[3, 10, 8]));
}

#[test]
fn exact_identity() {
    let x = bigs(&[5, 0, 7, 1 << 40]);
    assert_eq!(conv_exact(&bigs(&[1]), &x), x);
    assert!(conv_exact(&[], &x).is_empty());
}

#[test]
fn ntt_matches_schoolbook_on_random_pairs() {
    let mut r = stream(21, &[]);
    for _ in 0..100 {
        let (la, lb) = (r.gen_range(1..=512), r.gen_range(1..=512));
        let a = random_count_array(la, 128, &mut r);
        let b = random_count_array(lb, 128, &mut r);
        assert_eq!(conv_ntt(&a, &b), conv_schoolbook(&a, &b));
    }
}

#[test]
fn ntt_multiplies_large_integers() {
    let mut r = stream(22, &[]);
    for bits in [1u64, 31, 32, 33, 1000, 100_000] {
        use num_bigint::RandBigInt;
        let a = r.gen_biguint(bits);
        let b = r.gen_biguint(bits + 17);
        assert_eq!(knapcount::ntt::mul(&a, &b), &a * &b);
    }
}

#[test]
fn witness_small_examples() {
    let res = maxplus_witness_ref(&[0, 1], &[0, 2], &xs(&[1, 2]), &xs(&[3, 4])).unwrap();
    assert_eq!(res.c, vec![0, 2, 3]);
    assert_eq!(res.w, xs(&[3, 4, 8]));
    let mut r = stream(0, &[]);
    let fast = maxplus_witness_fast(&[0, 1], &[0, 2], &xs(&[1, 2]), &xs(&[3, 4]), &mut r).unwrap();
    assert_eq!(fast, res);

    let flat = maxplus_witness_ref(&[0, 0], &[0, 0], &xs(&[1, 1]), &xs(&[1, 1])).unwrap();
    assert_eq!(flat.c, vec![0, 0, 0]);
    assert_eq!(flat.w, xs(&[1, 2, 1]));

    let zero = maxplus_witness_ref(&[0, 1], &[0, 2], &xs(&[0, 0]), &xs(&[3, 4])).unwrap();
    assert_eq!(zero.c, res.c);
    assert!(zero.w.iter().all(|w| w.is_zero()));
}

#[test]
fn witness_rejects_bad_input() {
    assert_eq!(maxplus_witness_ref(&[1, 0], &[0], &xs(&[1, 1]), &xs(&[1])), Err(ConvError::NotMonotone(1)));
    assert!(matches!(maxplus_witness_ref(&[0, 1], &[0], &xs(&[1]), &xs(&[1])), Err(ConvError::LengthMismatch(..))));
    assert_eq!(maxplus_c(&[], &[0]), Err(ConvError::Empty));
}

#[test]
fn false_positive_example() {
    // k = 1: the pair (1, 0) sums to 0, which is congruent to C[1] = p but not equal
    let p = 5;
    let (a, b) = ([0i64, 0], [0i64, p]);
    let c = maxplus_c(&a, &b).unwrap();
    assert_eq!(c, vec![0, p, p]);
    let segs = false_positive_segments(&a, &b, &c, p as u64).unwrap();
    assert_eq!(segs, vec![Segment { i1: 1, i2: 1, k: 1 }]);
}

#[test]
fn false_positive_none_for_large_prime() {
    let mut r = stream(23, &[]);
    for _ in 0..20 {
        let a = random_monotone(40, 30, &mut r);
        let b = random_monotone(40, 30, &mut r);
        let c = maxplus_c(&a, &b).unwrap();
        assert!(false_positive_segments(&a, &b, &c, 61).unwrap().is_empty());
    }
    assert_eq!(false_positive_segments(&[0], &[0], &[0], 1), Err(ConvError::BadPrime));
}

#[test]
fn false_positive_matches_definition() {
    let mut r = stream(24, &[]);
    for _ in 0..30 {
        let a = random_monotone(20, 12, &mut r);
        let b = random_monotone(20, 12, &mut r);
        let c = maxplus_c(&a, &b).unwrap();
        for p in [2u64, 3, 5, 7] {
            let segs = false_positive_segments(&a, &b, &c, p).unwrap();
            // every flagged index is a false positive and every false positive is flagged
            let mut flagged = std::collections::HashSet::new();
            for s in &segs {
                for i in s.i1..=s.i2 {
                    assert!(flagged.insert((i, s.k)));
                }
            }
            for k in 0..c.len() {
                for i in k.saturating_sub(b.len() - 1)..=k.min(a.len() - 1) {
                    let val = a[i] + b[k - i];
                    let fp = val != c[k] && (val - c[k]).rem_euclid(p as i64) == 0;
                    assert_eq!(fp, flagged.contains(&(i, k)));
                }
            }
        }
    }
}

#[test]
fn witness_fast_matches_ref_on_random_instances() {
    let mut r = stream(25, &[]);
    for _ in 0..100 {
        let a = random_monotone(256, 100, &mut r);
        let b = random_monotone(256, 100, &mut r);
        let u: Vec<XReal> = (0..256).map(|_| XReal::from_u64(r.gen_range(1..=1 << 16))).collect();
        let v: Vec<XReal> = (0..256).map(|_| XReal::from_u64(r.gen_range(1..=1 << 16))).collect();
        let fast = maxplus_witness_fast(&a, &b, &u, &v, &mut r).unwrap();
        let slow = maxplus_witness_ref(&a, &b, &u, &v).unwrap();
        assert_eq!(fast.c, slow.c);
        for (x, y) in fast.w.iter().zip(&slow.w) {
            assert!(rel_diff(x, y) <= 2f64.powi(-80));
        }
    }
}

#[test]
fn witness_ref_matches_brute_force() {
    let mut r = stream(26, &[]);
    for _ in 0..50 {
        let (na, nb) = (r.gen_range(1..20), r.gen_range(1..20));
        let a = random_monotone(na, 10, &mut r);
        let b = random_monotone(nb, 10, &mut r);
        let u: Vec<u64> = (0..na).map(|_| r.gen_range(0..100)).collect();
        let v: Vec<u64> = (0..nb).map(|_| r.gen_range(0..100)).collect();
        let (c, w) = witness_brute(&a, &b, &u, &v);
        let res = maxplus_witness_ref(&a, &b, &xs(&u), &xs(&v)).unwrap();
        assert_eq!(res.c, c);
        assert_eq!(res.w, xs(&w));
    }
}

#[test]
fn sum_approx_ones() {
    let mut r = stream(27, &[]);
    let h = sum_approx_conv(&xs(&[1, 1]), &xs(&[1, 1]), 0.1, &mut r).unwrap();
    let p: Vec<f64> = prefix_sums(&h).iter().map(|x| x.to_f64()).collect();
    assert!((0.9..=1.1).contains(&p[0]));
    assert!((2.7..=3.3).contains(&p[1]));
    assert!((3.6..=4.4).contains(&p[2]));
}

#[test]
fn sum_approx_identity() {
    let mut r = stream(28, &[]);
    let f = random_count_array(64, 80, &mut r);
    let fx: Vec<XReal> = f.iter().map(XReal::from_biguint).collect();
    let h = sum_approx_conv(&fx, &xs(&[1]), 1e-3, &mut r).unwrap();
    assert!(max_prefix_error(&h, &f) <= 1e-3);
}

#[test]
fn sum_approx_rejects_bad_input() {
    let mut r = stream(29, &[]);
    assert_eq!(sum_approx_conv(&xs(&[1]), &xs(&[1]), 0.3, &mut r), Err(ConvError::DeltaOutOfRange(0.3)));
    let half = XReal::from_f64(0.5).unwrap();
    assert_eq!(sum_approx_conv(&[half], &xs(&[1]), 0.1, &mut r), Err(ConvError::BelowOne(0)));
}

#[test]
fn sum_approx_wide_values() {
    let mut r = stream(30, &[]);
    for _ in 0..10 {
        let a = random_count_array(512, 200, &mut r);
        let b = random_count_array(512, 200, &mut r);
        let fa: Vec<XReal> = a.iter().map(XReal::from_biguint).collect();
        let fb: Vec<XReal> = b.iter().map(XReal::from_biguint).collect();
        let h = sum_approx_conv(&fa, &fb, 1e-4, &mut r).unwrap();
        assert!(max_prefix_error(&h, &conv_exact(&a, &b)) <= 1e-4);
    }
}

#[test]
fn sum_approx_composition_of_ten() {
    let delta = 0.01;
    let mut r = stream(31, &[]);
    let ones = xs(&[1; 9]);
    let mut h = ones.clone();
    let mut exact = bigs(&[1; 9]);
    for _ in 0..10 {
        h = sum_approx_conv(&h, &ones, delta, &mut r).unwrap();
        exact = conv_exact(&exact, &bigs(&[1; 9]));
    }
    let bound = (1.0 + delta).powi(10) - 1.0;
    assert!(max_prefix_error(&h, &exact) <= bound);
}

#[test]
fn merge_paths_agree() {
    let mut r = stream(32, &[]);
    let a = random_count_array(100, 60, &mut r);
    let b = random_count_array(100, 60, &mut r);
    let fa: Vec<XReal> = a.iter().map(XReal::from_biguint).collect();
    let fb: Vec<XReal> = b.iter().map(XReal::from_biguint).collect();
    let truth = conv_exact(&a, &b);
    for path in [ConvPath::Auto, ConvPath::Witness, ConvPath::Exact] {
        let h = merge_conv(&fa, &fb, 1e-3, path, &mut r).unwrap();
        assert!(max_prefix_error(&h, &truth) <= 1e-3, "{:?}", path);
    }
    assert!(exact_is_cheaper(&fa, &fb, 1e-3));
}

#[test]
fn xreal_exact_conv_handles_spread() {
    let f = vec![XReal::pow2(10_000), XReal::one()];
    let g = vec![XReal::one(), XReal::pow2(-50).mul_pow2(60)];
    let h = conv_xreal_exact(&f, &g);
    assert_eq!(h.len(), 3);
    assert_eq!(h[0], XReal::pow2(10_000));
    assert_eq!(h[2], XReal::pow2(10));
}

fn arr() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..1 << 40, 1..40)
}

fn mono() -> impl Strategy<Value = Vec<i64>> {
    prop::collection::vec(0i64..50, 1..30).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_commutes_and_adds_lengths(a in arr(), b in arr()) {
        let (a, b) = (bigs(&a), bigs(&b));
        let ab = conv_exact(&a, &b);
        prop_assert_eq!(ab.len(), a.len() + b.len() - 1);
        prop_assert_eq!(&ab, &conv_exact(&b, &a));
        prop_assert_eq!(ab, conv_schoolbook(&a, &b));
    }

    #[test]
    fn maxplus_is_monotone_and_bounded(a in mono(), b in mono()) {
        let c = maxplus_c(&a, &b).unwrap();
        prop_assert!(c.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(c.iter().all(|&x| (0..=98).contains(&x)));
    }

    #[test]
    fn witness_fast_equals_ref(a in mono(), b in mono(), seed in any::<u64>()) {
        let mut r = stream(seed, &[]);
        let u: Vec<XReal> = (0..a.len()).map(|_| XReal::from_u64(r.gen_range(0..1000))).collect();
        let v: Vec<XReal> = (0..b.len()).map(|_| XReal::from_u64(r.gen_range(0..1000))).collect();
        let fast = maxplus_witness_fast(&a, &b, &u, &v, &mut r).unwrap();
        let slow = maxplus_witness_ref(&a, &b, &u, &v).unwrap();
        prop_assert_eq!(fast, slow);
    }
}
