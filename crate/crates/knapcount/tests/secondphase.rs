use knapcount::instance::AlgoParams;
use knapcount::rng::stream;
use knapcount::secondphase::*;
use knapcount::verify::secondphase_instance;
use knapcount::XReal;
use num_bigint::BigUint;
use proptest::prelude::*;

fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

fn cands(ws: &[u64]) -> Vec<(Vec<usize>, BigUint)> {
    ws.iter().enumerate().map(|(i, &w)| (vec![i], big(w))).collect()
}

fn sp(tiny: &[u64], ws: &[u64], t: u64) -> SecondPhaseInstance {
    SecondPhaseInstance::new(tiny.iter().map(|&w| big(w)).collect(), cands(ws), big(t), 0.25, 64)
}

fn within_hybrid(inst: &SecondPhaseInstance, got: &XReal) -> bool {
    let truth = inst.count_exact().unwrap();
    let t = XReal::from_biguint(&truth).to_f64();
    let g = got.to_f64();
    (g - t).abs() <= inst.epsilon / 6.0 * t + inst.additive_allowance()
}

#[test]
fn cleanup_removes_overweight() {
    let c = second_phase_cleanup(&sp(&[1, 2], &[11], 10));
    assert_eq!(c.removed, 1);
    assert_eq!(c.base, big(0));
    assert!(c.retained.candidates.is_empty());
}

#[test]
fn cleanup_absorbs_boundary() {
    // 7 + 1 + 2 = 10 fits with every tiny subset
    let c = second_phase_cleanup(&sp(&[1, 2], &[7], 10));
    assert_eq!(c.absorbed, 1);
    assert_eq!(c.base, big(4));
}

#[test]
fn cleanup_partitions_candidates() {
    let inst = sp(&[1, 2, 3], &[1, 4, 5, 8, 9, 10, 11, 12], 10);
    let c = second_phase_cleanup(&inst);
    assert_eq!(c.removed, 2);
    assert_eq!(c.absorbed, 2);
    assert_eq!(c.retained.candidates.len() + c.removed + c.absorbed, 8);
    let tiny = inst.tiny_total();
    for (_, w) in &c.retained.candidates {
        assert!(*w <= inst.capacity && w + &tiny > inst.capacity);
    }
}

#[test]
fn tiny_weights_are_sorted_heaviest_first() {
    let inst = sp(&[1, 5, 3], &[2], 10);
    assert_eq!(inst.tiny_weights, vec![big(5), big(3), big(1)]);
}

#[test]
fn no_tiny_items_is_exact() {
    let inst = sp(&[], &[3, 9, 10, 11], 10);
    let params = AlgoParams::with_epsilon(0.25, 0);
    let rep = second_phase_estimate(&inst, &params, 0).unwrap();
    assert_eq!(rep.r, 0);
    assert_eq!(rep.value, XReal::from_u64(3));
    assert_eq!(inst.count_exact().unwrap(), big(3));
}

#[test]
fn one_tiny_item_two_candidates() {
    // pairs: (0, 6), (0, 9), (3, 6); (3, 9) overflows
    let inst = sp(&[3], &[6, 9], 10);
    assert_eq!(inst.count_exact().unwrap(), big(3));
    let params = AlgoParams::with_epsilon(0.25, 0);
    let rep = second_phase_estimate(&inst, &params, 0).unwrap();
    assert!(within_hybrid(&inst, &rep.value), "{}", rep.value);
}

#[test]
fn cutoff_r_is_capped_by_tiny_count() {
    assert_eq!(cutoff_r(0, 100, 0.25), 0);
    assert_eq!(cutoff_r(5, 100, 0.25), 5);
    let r = cutoff_r(1000, 100, 0.25);
    assert!(r > 20 && r < 60);
}

#[test]
fn random_instances_mostly_within_hybrid_error() {
    let params = AlgoParams::with_epsilon(0.25, 0);
    let trials = 40;
    let mut ok = 0;
    for i in 0..trials {
        let inst = secondphase_instance(5, i);
        let p = AlgoParams { seed: i, ..params.clone() };
        let rep = second_phase_estimate(&inst, &p, 0).unwrap();
        ok += within_hybrid(&inst, &rep.value) as u32;
    }
    assert!(ok as f64 >= 0.9 * trials as f64, "{}/{}", ok, trials);
}

#[test]
fn classification_identity() {
    // exact per-heaviest-item counts sum to the full count
    let inst = sp(&[9, 7, 4, 2, 1], &[20, 25, 28, 30, 31], 40);
    let total = inst.count_exact().unwrap();
    let c = second_phase_cleanup(&inst);
    let tiny = &inst.tiny_weights;
    let mut acc = c.base.clone() + big(c.retained.candidates.len() as u64);
    for j in 0..tiny.len() {
        let rest = &tiny[j + 1..];
        for (_, w) in &c.retained.candidates {
            let room = &inst.capacity - w;
            if tiny[j] > room {
                continue;
            }
            let room = room - &tiny[j];
            let sub = SecondPhaseInstance::new(rest.to_vec(), vec![(vec![], big(0))], room, 0.25, 64);
            acc += sub.count_exact().unwrap();
        }
    }
    assert_eq!(acc, total);
}

#[test]
fn tree_sampler_counts_subsets() {
    let items: Vec<(usize, BigUint)> = [5u64, 3, 2].iter().enumerate().map(|(i, &w)| (i, big(w))).collect();
    let params = AlgoParams::with_epsilon(0.25, 0);
    let s = tiny_tree_sampler(&items, &big(10), 64, &params, &mut stream(0, &[])).unwrap();
    let all = s.enumerate(64).unwrap();
    assert_eq!(all.len(), 8);
    let total = s.count_fn().prefix_at(s.len());
    assert!((total.to_f64() - 8.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn zero_weight_tiny_item_doubles(tiny in prop::collection::vec(1u64..20, 1..6), ws in prop::collection::vec(1u64..60, 1..6), seed in any::<u64>()) {
        let t = 50;
        let base = sp(&tiny, &ws, t);
        let mut more = tiny.clone();
        more.push(0);
        let doubled = SecondPhaseInstance::new(more.iter().map(|&w| big(w)).collect(), cands(&ws), big(t), 0.25, 64);
        prop_assert_eq!(doubled.count_exact().unwrap(), base.count_exact().unwrap() * 2u32);
        let params = AlgoParams::with_epsilon(0.25, seed);
        let a = second_phase_estimate(&base, &params, 0).unwrap().value.to_f64();
        let b = second_phase_estimate(&doubled, &params, 0).unwrap().value.to_f64();
        let truth = base.count_exact().unwrap();
        let t2 = XReal::from_biguint(&truth).to_f64() * 2.0;
        let env = 2.0 * (0.25 / 6.0 * t2 + doubled.additive_allowance()) + 1e-9;
        prop_assert!((b - 2.0 * a).abs() <= 2.0 * env);
    }

    #[test]
    fn retained_candidates_satisfy_window(tiny in prop::collection::vec(1u64..20, 0..6), ws in prop::collection::vec(1u64..80, 1..8)) {
        let inst = sp(&tiny, &ws, 50);
        let c = second_phase_cleanup(&inst);
        let wt = inst.tiny_total();
        for (_, w) in &c.retained.candidates {
            prop_assert!(*w <= inst.capacity);
            prop_assert!(w + &wt > inst.capacity);
        }
    }
}
