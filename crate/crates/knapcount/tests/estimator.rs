use knapcount::convolution::ConvPath;
use knapcount::dyer::{dyer_k, dyer_round, DyerTable};
use knapcount::estimator::*;
use knapcount::instance::{generate, scale_instance, AlgoParams, GenKind, KnapsackInstance};
use knapcount::oracle::{count_dp, count_enum};
use knapcount::rng::stream;
use knapcount::verify::oracle_instance;
use knapcount::XReal;
use num_bigint::BigUint;
use proptest::prelude::*;
use rand::Rng;

fn inst(ws: &[u64], t: u64) -> KnapsackInstance {
    KnapsackInstance::from_u64(ws, t).unwrap()
}

fn within(est: &XReal, truth: &BigUint, eps: f64) -> bool {
    let r = est.ratio_f64(&XReal::from_biguint(truth));
    (1.0 - eps..=1.0 + eps).contains(&r)
}

fn random_nontrivial<R: Rng>(r: &mut R) -> KnapsackInstance {
    loop {
        let n = r.gen_range(2..=18);
        let t = r.gen_range(n as u64..=1_000_000);
        let ws: Vec<u64> = (0..n).map(|_| r.gen_range(1..=t)).collect();
        let i = inst(&ws, t);
        if !i.is_trivial() {
            return i;
        }
    }
}

#[test]
fn popular_ell_examples() {
    let a = inst(&[3, 3, 3, 3], 8);
    assert_eq!(heavy_prefix(&a), 2);
    assert_eq!(find_popular_ell(&a), 4);
    let b = inst(&[5, 5], 10);
    assert_eq!(heavy_prefix(&b), 1);
    assert_eq!(find_popular_ell(&b), 4);
}

#[test]
fn popular_ell_passes_count_bound() {
    let mut r = stream(41, &[]);
    for _ in 0..1000 {
        let i = random_nontrivial(&mut r);
        let ell = find_popular_ell(&i);
        let n = i.n() as f64;
        assert!(ell.is_power_of_two() && ell >= 2);
        assert!(popular_count(&i, ell) as f64 > ell as f64 / (8.0 * (8.0 * n).log2()));
    }
}

#[test]
fn partition_boundary() {
    for t in [4u64, 5, 17, 1000] {
        let p = partition_classes(&inst(&[1, t], t));
        assert_eq!(p.classes[0].m, 2);
        assert_eq!(p.classes[0].items, vec![1]);
        let last = p.classes.last().unwrap();
        assert!(last.last);
        assert!(p.classes.iter().any(|c| c.items.contains(&0) && c.m > 2));
    }
}

#[test]
fn partition_covers_and_respects_bounds() {
    let mut r = stream(42, &[]);
    for _ in 0..1000 {
        let i = random_nontrivial(&mut r);
        let p = partition_classes(&i);
        let mut seen = vec![false; i.n()];
        for c in &p.classes {
            for &k in &c.items {
                assert!(!seen[k]);
                seen[k] = true;
                let w = &i.weights()[k];
                let t = i.capacity();
                if c.last {
                    assert!((w << p.g) <= *t);
                } else {
                    assert!(w * c.m > *t && w * c.m <= t * 2u32);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}

#[test]
fn bounded_ratio_class_uses_bins() {
    let i = generate(&GenKind::BoundedRatio { ell: 4 }, 12, &BigUint::from(1u64 << 40), 0).unwrap();
    let p = partition_classes(&i);
    let nonempty: Vec<_> = p.classes.iter().filter(|c| !c.items.is_empty()).collect();
    assert_eq!(nonempty.len(), 1);
    let params = AlgoParams::with_epsilon(0.25, 0);
    let ell = find_popular_ell(&i);
    let plan = Plan::new(&i, ell, &p, &params);
    assert_eq!(class_case(&i, nonempty[0], &plan, &params), ClassCase::Bins);
}

#[test]
fn last_class_of_small_items_uses_small_items_sampler() {
    // one heavy item and many light ones far below every leaf scale
    let mut ws = vec![1u64; 64];
    ws.push(1 << 40);
    let i = inst(&ws, 1 << 40);
    let p = partition_classes(&i);
    let last = p.classes.last().unwrap();
    assert_eq!(last.items.len(), 64);
    let mut params = AlgoParams::with_epsilon(0.25, 0);
    params.case_split = knapcount::instance::CaseSplit::Applicable;
    let plan = Plan::new(&i, find_popular_ell(&i), &p, &params);
    assert_eq!(class_case(&i, last, &plan, &params), ClassCase::SmallItems);
    let s = build_class_sampler(&i, last, &plan, &params, &mut stream(0, &[])).unwrap();
    assert!(!s.tiny_items().is_empty());
}

#[test]
fn tiny_bins_tree_is_faithful() {
    // two-bin class at small scale: root prefix sums against enumeration
    let i = inst(&[300, 320, 350, 380, 400, 420], 1000);
    let p = partition_classes(&i);
    let class = p.classes.iter().find(|c| c.m == 4).unwrap().clone();
    assert!(class.items.len() >= 5);
    let class = WeightClass { m: 2, ..class };
    let params = AlgoParams::with_epsilon(0.25, 0);
    let plan = Plan::new(&i, 4, &p, &params);
    for seed in 0..5 {
        let s = build_class_sampler(&i, &class, &plan, &params, &mut stream(seed, &[])).unwrap();
        let delta = s.delta().max(1e-12);
        let f = s.count_fn();
        for x in 0..=s.len() {
            let truth = enumerate_relaxed(&s, x, 1 << 16).unwrap();
            let got = f.prefix_at(x);
            assert!(within(&got, &truth, delta), "x={} got={} truth={}", x, got, truth);
        }
    }
}

#[test]
fn global_of_one_class_is_that_class() {
    let leaf = knapcount::sampler::leaf_dp_build(&[(0, BigUint::from(5u32))], &BigUint::from(5u32), 2, 0.0, &mut stream(0, &[])).unwrap();
    let before = leaf.count_fn().values().to_vec();
    let g = build_global_sampler(vec![leaf], ConvPath::Auto, &mut stream(1, &[])).unwrap();
    assert_eq!(g.count_fn().values(), &before[..]);
}

#[test]
fn global_of_two_single_items() {
    let s = BigUint::from(4u32);
    let mut r = stream(2, &[]);
    let a = knapcount::sampler::leaf_dp_build(&[(0, BigUint::from(4u32))], &s, 1, 0.0, &mut r).unwrap();
    let b = knapcount::sampler::leaf_dp_build(&[(1, BigUint::from(8u32))], &s, 1, 0.0, &mut r).unwrap();
    let g = build_global_sampler(vec![a, b], ConvPath::Witness, &mut r).unwrap();
    assert_eq!(g.enumerate(16).unwrap().len(), 4);
    for x in 0..=g.len() {
        let truth = enumerate_relaxed(&g, x, 16).unwrap();
        assert!(within(&g.count_fn().prefix_at(x), &truth, g.delta().max(1e-12)));
    }
    g.check_bookkeeping().unwrap();
}

#[test]
fn phase_one_relaxed_count_matches_enumeration() {
    let params = AlgoParams::with_epsilon(0.25, 3);
    let mut r = stream(43, &[]);
    let mut checked = 0;
    while checked < 5 {
        let i = random_nontrivial(&mut r);
        if i.n() != 10 {
            continue;
        }
        let scaled = scale_instance(&i, &params);
        let one = phase_one(&scaled, &params).unwrap();
        assert!(one.sampler.scale() * one.t >= *scaled.capacity());
        let Some(truth) = enumerate_relaxed(&one.sampler, one.t, 1 << 12) else { continue };
        assert!(within(&one.omega_prime, &truth, 0.1));
        for (items, _) in one.samples.iter().take(200) {
            let e = knapcount::sampler::Element { items: items.clone(), candidate: None };
            assert!(one.sampler.rounded_weight(&e).unwrap() <= one.t);
        }
        checked += 1;
    }
}

#[test]
fn trivial_instance_is_exact() {
    let i = inst(&[1, 1, 1], 3);
    let params = AlgoParams::with_epsilon(0.25, 0);
    let rep = estimate_subquadratic(&i, &params).unwrap();
    assert!(rep.trivial);
    assert_eq!(rep.estimate, XReal::from_u64(8));
    assert_eq!(estimate_dyer(&i, &params).unwrap().estimate, XReal::from_u64(8));
}

#[test]
fn fixed_seed_fixed_report() {
    let i = oracle_instance(5, 1);
    let params = AlgoParams::with_epsilon(0.25, 9);
    let a = estimate_subquadratic(&i, &params).unwrap();
    let b = estimate_subquadratic(&i, &params).unwrap();
    assert_eq!(a.estimate, b.estimate);
    assert_eq!(a.samples, b.samples);
    let mut threaded = params.clone();
    threaded.threads = 3;
    assert_eq!(estimate_subquadratic(&i, &threaded).unwrap().estimate, a.estimate);
    let d1 = estimate_dyer(&i, &params).unwrap();
    let d2 = estimate_dyer(&i, &threaded).unwrap();
    assert_eq!(d1.estimate, d2.estimate);
}

#[test]
fn small_instances_are_mostly_accurate() {
    let params = AlgoParams::with_epsilon(0.25, 0);
    let (mut sub, mut dy) = (0, 0);
    let runs = 24;
    for k in 0..runs {
        let i = oracle_instance(77, k);
        let truth = count_enum(&i).unwrap();
        let p = AlgoParams { seed: k, ..params.clone() };
        sub += within(&estimate_subquadratic(&i, &p).unwrap().estimate, &truth, 0.25) as u32;
        dy += within(&estimate_dyer(&i, &p).unwrap().estimate, &truth, 0.25) as u32;
    }
    assert!(sub as f64 >= 0.75 * runs as f64, "subquad {}/{}", sub, runs);
    assert!(dy as f64 >= 0.75 * runs as f64, "dyer {}/{}", dy, runs);
}

#[test]
fn time_budget_aborts_with_zero() {
    let i = generate(&GenKind::BoundedRatio { ell: 8 }, 400, &BigUint::from(1u64 << 50), 0).unwrap();
    let mut params = AlgoParams::with_epsilon(0.25, 0);
    params.time_budget_ms = Some(0);
    let rep = estimate_subquadratic(&i, &params).unwrap();
    assert!(rep.aborted);
    assert!(rep.estimate.is_zero());
}

#[test]
fn dyer_rounding_and_table() {
    assert_eq!(dyer_k(1, 4.0), 1);
    assert_eq!(dyer_k(100, 4.0), (4.0 * (100.0f64 * 100f64.ln()).sqrt()).ceil() as u64);
    let i = inst(&[3, 7, 12, 20, 25], 40);
    let k = dyer_k(i.n(), 4.0);
    let (w, cap) = dyer_round(&i, k, &mut stream(0, &[]));
    assert_eq!(cap, 2 * k * 5 + k);
    for (wi, orig) in w.iter().zip(i.weights()) {
        // floor or ceiling of W 2Kn / T
        let exact = orig * (2 * k * 5) / i.capacity();
        let lo: u64 = exact.try_into().unwrap();
        assert!(*wi == lo || *wi == lo + 1);
    }
    let table = DyerTable::build(&w, cap).unwrap();
    let relaxed = count_dp(&inst(&w, cap)).unwrap();
    assert_eq!(table.total(), XReal::from_biguint(&relaxed));
    let mut r = stream(1, &[]);
    for _ in 0..200 {
        let x = table.sample(&mut r);
        assert!(x.iter().map(|&j| w[j]).sum::<u64>() <= cap);
    }
}

#[test]
fn dyer_refuses_huge_tables() {
    let w = vec![1u64; 10];
    assert!(matches!(DyerTable::build(&w, 1 << 25), Err(EstimateError::TooLarge(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn relaxed_threshold_covers_capacity(ws in prop::collection::vec(1u64..1000, 3..10), seed in any::<u64>()) {
        let t = ws.iter().sum::<u64>() / 2 + 1;
        let ws: Vec<u64> = ws.iter().map(|&w| w.min(t)).collect();
        let i = inst(&ws, t);
        prop_assume!(!i.is_trivial());
        let params = AlgoParams { max_queries: Some(50), ..AlgoParams::with_epsilon(0.25, seed) };
        let scaled = scale_instance(&i, &params);
        let one = phase_one(&scaled, &params).unwrap();
        prop_assert!(one.sampler.scale() * one.t >= *scaled.capacity());
        prop_assert!(one.samples.iter().all(|(_, w)| *w <= scaled.capacity() * 2u32));
    }
}
