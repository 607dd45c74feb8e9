//! Builds a depth-3 coherent tree over a random chain and re-verifies every
//! certificate from the raw phases.
//!
//! Run with `cargo run --release --example coherence_tree -- [horizon] [--z]`.

use std::time::Instant;

use corona_lab::coherence_tree::{
    build_tree, generate_chain, schedule_for_tolerance, verify_tree, Certificate, DEFAULT_EPSILON, DEFAULT_J0,
};

fn main() -> corona_lab::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let horizon = args.iter().find_map(|a| a.parse().ok()).unwrap_or(100_000);
    let z_variant = args.iter().any(|a| a == "--z");

    let schedule = schedule_for_tolerance(DEFAULT_EPSILON, 8);
    let start = Instant::now();
    let chain = generate_chain(3, horizon, &schedule, 2024)?;
    let tree = build_tree(&chain, 3, z_variant, DEFAULT_EPSILON, DEFAULT_J0)?;
    println!("schedule {schedule:?}");
    for (xi, x) in chain.levels().iter().enumerate() {
        println!("X_{xi}: {} elements, last {}", x.elements().len(), x.last());
    }
    for cert in &tree.certificates {
        if let Certificate::Divergence {
            left, right, blocks, ..
        } = cert
        {
            let min = blocks.iter().map(|b| b.delta).fold(f64::INFINITY, f64::min);
            println!(
                "siblings {left} / {right}: {} blocks, smallest delta {min:.12}",
                blocks.len()
            );
        }
    }
    for stage in &tree.limits {
        println!(
            "leaf {}: X_inf has {} points, {} checked blocks",
            stage.leaf,
            stage.sparsification.x_inf.elements().len(),
            stage.sparsification.checks.len()
        );
    }
    println!("built in {:.2?}", start.elapsed());
    let verification = verify_tree(&tree)?;
    println!(
        "re-verified {} certificates and {} limit blocks: {}",
        verification.certificates_checked,
        verification.limit_blocks_checked,
        if verification.passed() { "pass" } else { "FAIL" }
    );
    Ok(())
}
