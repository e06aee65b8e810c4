#![allow(dead_code)]

use std::collections::HashMap;

use knapcount::oracle::empirical_tv;
use knapcount::rng::stream;
use knapcount::sampler::Sampler;
use num_bigint::BigUint;

pub type Key = (Vec<usize>, Option<usize>);

pub fn big(v: u64) -> BigUint {
    BigUint::from(v)
}

pub fn items(ws: &[u64]) -> Vec<(usize, BigUint)> {
    ws.iter().enumerate().map(|(i, &w)| (i, big(w))).collect()
}

/// Uniform target over `{X in Omega : w(X) <= x}` projected onto non-tiny items.
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
    let mut rng = stream(seed, &[99]);
    let samples: Vec<Key> = (0..trials)
        .map(|_| {
            let r = s.query(x, &mut rng).expect("nonempty");
            assert!(r.weight <= x.min(s.len()));
            (r.items, r.candidate)
        })
        .collect();
    empirical_tv(samples, &target).unwrap()
}
