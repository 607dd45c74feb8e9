//! Positive approximate units built from tents: witness elements, the
//! quasi-unitary residual, the conjugation estimate and a tensor product.
//!
//! Run with `cargo run --example weak_units`.

use std::f64::consts::PI;

use corona_lab::linalg::CMatrix;
use corona_lab::torus_metrics::{IndexSet, TorusElement};
use corona_lab::weak_units::{
    build_tent_unit, epsilon_witness, hyp_check, interval_power_gap, quasi_unitary_residual, tensor_unit,
    weak_sandwich, HypMode, PositiveUnit,
};
use nalgebra::DVector;
use num_complex::Complex64;

fn main() -> corona_lab::Result<()> {
    let model = build_tent_unit(50, 0.25)?;
    let unit = PositiveUnit::from_tents(&model);
    println!(
        "50 tents on {} grid points, identities {:?}",
        model.grid().len(),
        unit.defects()
    );
    for k in [1, 2, 4, 8] {
        println!("max t^{k}(1-t) = {:.6}", interval_power_gap(k));
    }
    for (i, j) in [(0, 0), (3, 4), (2, 9)] {
        let w = epsilon_witness(&unit, i, j, 0.1)?;
        println!(
            "witness ({i}, {j}): k = {}, ‖r_i a r_j‖ = {:.4}, ‖r_i a r_j − a‖ = {:.2e}",
            w.norms.k, w.norms.corner, w.norms.defect
        );
    }
    println!(
        "positive-element hypothesis: {}",
        hyp_check(&unit, HypMode::HypWeak, 0.1, 4).holds
    );
    println!(
        "projection hypothesis: {}",
        hyp_check(&unit, HypMode::HypA, 0.1, 4).holds
    );

    let decaying = TorusElement::from_fn(50, |i| ((i + 1) as f64).ln())?;
    let alternating = TorusElement::from_fn(50, |i| if i % 2 == 0 { 0.0 } else { PI })?;
    for n in [0, 10, 40] {
        let d = quasi_unitary_residual(&decaying, &unit, n)?;
        let a = quasi_unitary_residual(&alternating, &unit, n)?;
        println!(
            "N = {n}: decaying {:.2e} <= {:.2e}; alternating {:.2} with ε_N = {:.2}",
            d.tail_norm, d.bound, a.tail_norm, a.epsilon_n
        );
    }

    let r = weak_sandwich(&decaying, &unit, &IndexSet::range(5..12)?, 0.01, 8, 4)?;
    println!(
        "sandwich on I = 5..12: Δ = {:.4}, witness {:.4}, sampled {:.4}, 2Δ = {:.4}",
        r.delta, r.lower_witness, r.sampled_max, r.upper
    );

    let small = PositiveUnit::from_tents(&build_tent_unit(4, 0.5)?);
    let e = CMatrix::from_diagonal(&DVector::from_vec(vec![
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, 0.0),
    ]));
    let mut q = vec![CMatrix::zeros(2, 2), e];
    q.extend(std::iter::repeat_n(CMatrix::identity(2, 2), 3));
    let t = tensor_unit(&small, &q, 5)?;
    println!(
        "tensor unit on dimension {}, slice checks {:?}",
        t.unit.dim(),
        t.slice_checks
    );
    Ok(())
}
