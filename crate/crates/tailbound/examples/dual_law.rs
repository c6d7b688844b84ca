//! A chain with two stationary laws on disjoint invariant sets: the
//! countable dense set `I = N_0 3^Z` (simulated in exact arithmetic) and
//! its complement (floats). Both laws share the exact tail index one.
//!
//!     cargo run --release --example dual_law

use serde_json::json;
use tailbound::core_ifs::{sample_stationary, SampleMode, ValueKind};
use tailbound::models::dual_law::{exact_closure_run, simulate_exact};
use tailbound::models::{DualLawSpec, ExactState};
use tailbound::{models, tail_stats};

fn main() {
    let spec = DualLawSpec::default();

    // Exact branch: closure in I with zero tolerance over 1e5 steps.
    let closure = exact_closure_run(&spec, ExactState::new(1, 1), 100_000, 61).unwrap();
    println!(
        "exact branch: {} steps, {} closure violations, numerator up to {} bits, exponent in [{}, {}]",
        closure.steps,
        closure.violations,
        closure.max_numerator_bits,
        closure.min_exponent,
        closure.max_exponent
    );

    // Tail of the exact branch from pooled restarted chains.
    let exact = simulate_exact(&spec, 200, 300, 500, 67).unwrap();
    let est = tail_stats::hill(&exact, 1_000).unwrap();
    println!("exact-branch Hill index = {:.4}", est.index);

    // Tail of the float (complement) branch by backward sampling.
    let family = models::family("dual_real", &json!({"p": 0.6})).unwrap();
    let real = sample_stationary(
        &family,
        SampleMode::Backward { depth: Some(120), start: None },
        200_000,
        71,
        ValueKind::RawState,
    )
    .unwrap();
    let est = tail_stats::hill(&real, 2_000).unwrap();
    println!("real-branch Hill index  = {:.4}", est.index);
    println!("\nboth branches share the exact tail index one: E alpha = 0.6/3 + 0.4*2 = 1");
}
