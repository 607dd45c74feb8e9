//! Interval partitions of a sparse set and the double-interval profile that
//! decides membership in `F_X`.
//!
//! Run with `cargo run --example sparse_intervals`.

use corona_lab::interval_partitions::{almost_subset, coarsen_map, fx_profile, SparseSet};
use corona_lab::torus_metrics::TorusElement;

fn main() -> corona_lab::Result<()> {
    let squares = SparseSet::new((1..40).map(|k| k * k).collect())?;
    let fourth = SparseSet::new((1..20).map(|k| 4 * k * k).collect())?;
    println!(
        "n(X, j) for j < 6: {:?}",
        (0..6).map(|j| squares.n_of(j)).collect::<Result<Vec<_>, _>>()?
    );
    println!("I(X, 3) = {:?}", squares.interval(3)?);
    println!(
        "even squares ⊆* squares: {:?}",
        almost_subset(&fourth, &squares, 0).holds
    );
    println!(
        "each I(Y, j) covers X-intervals {:?}",
        &coarsen_map(&fourth, &squares)?[..4]
    );

    // a slowly drifting logarithmic phase passes, a half-turn at 500 does not
    let horizon = squares.last() + 1;
    let slow = TorusElement::from_fn(horizon, |i| 0.1 * (i as f64 + 1.0).ln())?;
    let jump = TorusElement::from_fn(horizon, |i| if i < 500 { 0.0 } else { std::f64::consts::PI })?;
    for (name, alpha) in [("slow", &slow), ("jump", &jump)] {
        let profile = fx_profile(alpha, &squares, true)?;
        let v = profile.verdict(0.1, 10);
        println!(
            "{name}: in F_X at ε = 0.1 beyond j0 = 10: {} (worst {:?})",
            v.holds, v.worst
        );
        assert!(profile.split_consistency().is_ok());
    }
    Ok(())
}
