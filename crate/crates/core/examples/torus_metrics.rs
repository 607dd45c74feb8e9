//! Evaluates the pseudometrics `Δ_I(α, β)` on a few sequences and fuzzes the
//! union bound `Δ_{I∪J} ≤ Δ_I + Δ_J + Δ_{{i0,j0}}`.
//!
//! Run with `cargo run --example torus_metrics`.

use std::f64::consts::PI;

use corona_lab::torus_metrics::{delta_over, delta_range, lij_bound_check, IndexSet, TorusElement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> corona_lab::Result<()> {
    let one = TorusElement::one(8);
    let rotation = TorusElement::from_fn(8, |i| 0.3 * i as f64)?;
    let flip = TorusElement::from_fn(8, |i| if i < 4 { 0.0 } else { PI })?;

    println!(
        "Δ over 0..8 of a slow rotation: {:.6}",
        delta_range(&rotation, &one, 0..8)?
    );
    println!(
        "Δ over 0..4 of the flip:         {:.6}",
        delta_range(&flip, &one, 0..4)?
    );
    let d = delta_over(&flip, &one, 0..8)?;
    println!(
        "Δ over 0..8 of the flip:         {:.6} attained at {:?}",
        d.value, d.pair
    );
    println!(
        "Δ(α, α·rotation) equals Δ(rotation, 1): {:.6}",
        delta_range(&flip, &flip.mul(&rotation)?, 0..8)?
    );

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let trials = 10_000;
    let mut violations = 0;
    for _ in 0..trials {
        let h = rng.random_range(2..20);
        let alpha = TorusElement::from_fn(h, |_| rng.random_range(-PI..PI))?;
        let beta = TorusElement::from_fn(h, |_| rng.random_range(-PI..PI))?;
        let split = rng.random_range(1..h);
        let i = IndexSet::range(0..split)?;
        let j = IndexSet::range(rng.random_range(0..split)..h)?;
        let r = lij_bound_check(&alpha, &beta, &i, &j, split - 1, h - 1)?;
        violations += usize::from(!r.holds);
    }
    println!("union bound: {violations} violations in {trials} trials");
    Ok(())
}
