//! The two-sided estimate `Δ_I(α,1) ≤ ‖Ad u_α − id‖ ≤ 2Δ_I(α,1)` on block
//! projections, and the kernel test on block-diagonal elements.
//!
//! Run with `cargo run --example sandwich`.

use std::f64::consts::PI;

use corona_lab::interval_partitions::SparseSet;
use corona_lab::operator_lab::{ad_sandwich, kernel_test, BlockStructure};
use corona_lab::torus_metrics::{IndexSet, TorusElement};

fn main() -> corona_lab::Result<()> {
    let pair = BlockStructure::new(vec![1, 1])?;
    let antipodal = TorusElement::from_fn(2, |i| if i == 0 { 0.0 } else { PI })?;
    let r = ad_sandwich(&antipodal, &pair, &IndexSet::range(0..2)?, 16, 1)?;
    println!(
        "α = (1, -1): Δ = {}, matrix-unit witness = {}, sampled = {:.4}",
        r.delta, r.lower_witness, r.sampled_max
    );

    let blocks = BlockStructure::new(vec![3, 1, 2, 4, 2])?;
    let alpha = TorusElement::from_fn(5, |i| 0.7 * (i * i) as f64)?;
    for set in [vec![0, 1], vec![1, 3, 4], vec![0, 1, 2, 3, 4]] {
        let r = ad_sandwich(&alpha, &blocks, &IndexSet::new(set.clone())?, 32, 2)?;
        println!(
            "I = {set:?}: {:.4} <= {:.4} and {:.4} <= {:.4}",
            r.delta, r.lower_witness, r.sampled_max, r.upper
        );
    }

    // slowly varying α commutes approximately with every double-block element
    let x = SparseSet::new((1..12).map(|k| 2 * k).collect())?;
    let uniform = BlockStructure::uniform(x.last() + 1, 2)?;
    let slow = TorusElement::from_fn(x.last() + 1, |i| 0.01 * i as f64)?;
    let report = kernel_test(&slow, &x, &uniform, 0.1, 2, 3)?;
    println!(
        "slow α: verdict holds {}, largest test ratio {:.4}",
        report.verdict.holds,
        report.max_test_ratio.unwrap_or(0.0)
    );
    let fast = TorusElement::from_fn(x.last() + 1, |i| if i % 2 == 0 { 0.0 } else { PI })?;
    let report = kernel_test(&fast, &x, &uniform, 0.1, 2, 3)?;
    println!("alternating α: witness certified {}", report.certified());
    Ok(())
}
