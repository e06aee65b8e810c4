//! wasm-bindgen entry points for the browser demo. Every export takes and
//! returns plain strings so the page needs no glue beyond the generated JS.

use knapcount::estimator::{estimate_dyer, estimate_subquadratic};
use knapcount::instance::{generate, AlgoParams, GenKind, KnapsackInstance};
use knapcount::oracle::{count_dp, count_enum, MAX_DP_CAPACITY};
use num_bigint::BigUint;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn parse_big(s: &str, what: &str) -> Result<BigUint, String> {
    s.trim().parse().map_err(|_| format!("bad {}: {:?}", what, s.trim()))
}

fn instance(weights: &str, capacity: &str) -> Result<KnapsackInstance, String> {
    let ws = weights
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| parse_big(t, "weight"))
        .collect::<Result<Vec<_>, _>>()?;
    KnapsackInstance::new(ws, parse_big(capacity, "capacity")?).map_err(|e| e.to_string())
}

/// Exact count. Uses the table when the capacity is small, else enumeration.
#[wasm_bindgen]
pub fn count_exact(weights: &str, capacity: &str) -> Result<String, String> {
    let inst = instance(weights, capacity)?;
    let small = inst.capacity() <= &BigUint::from(MAX_DP_CAPACITY);
    let (method, count) = if small { ("dp", count_dp(&inst)) } else { ("enum", count_enum(&inst)) };
    let count = count.map_err(|e| e.to_string())?;
    Ok(json!({ "method": method, "count": count.to_string(), "n": inst.n(), "digest": inst.digest() }).to_string())
}

/// Randomized estimate; `algo` is `subquad` or `dyer`.
#[wasm_bindgen]
pub fn estimate(weights: &str, capacity: &str, algo: &str, epsilon: f64, seed: u64) -> Result<String, String> {
    let inst = instance(weights, capacity)?;
    let params = AlgoParams::with_epsilon(epsilon, seed);
    params.validate(inst.n()).map_err(|e| e.to_string())?;
    let rep = match algo {
        "subquad" => estimate_subquadratic(&inst, &params),
        "dyer" => estimate_dyer(&inst, &params),
        _ => return Err(format!("unknown algo {:?}", algo)),
    }
    .map_err(|e| e.to_string())?;
    Ok(json!({
        "algo": rep.algo,
        "estimate": rep.estimate.to_decimal_string(),
        "epsilon": rep.epsilon,
        "seed": rep.seed,
        "n": rep.n,
        "trivial": rep.trivial,
        "ell": rep.ell,
        "samples": rep.samples,
    })
    .to_string())
}

/// Random instance in the text format, returned as `{"weights", "capacity"}`.
#[wasm_bindgen]
pub fn generate_instance(kind: &str, n: usize, capacity: &str, ell: u64, seed: u64) -> Result<String, String> {
    let kind = match kind {
        "uniform" => GenKind::Uniform,
        "bounded_ratio" => GenKind::BoundedRatio { ell },
        "tiny_adversarial" => GenKind::TinyAdversarial,
        _ => return Err(format!("unknown kind {:?}", kind)),
    };
    let inst = generate(&kind, n, &parse_big(capacity, "capacity")?, seed).map_err(|e| e.to_string())?;
    let ws: Vec<String> = inst.weights().iter().map(|w| w.to_string()).collect();
    Ok(json!({ "weights": ws.join(","), "capacity": inst.capacity().to_string() }).to_string())
}
