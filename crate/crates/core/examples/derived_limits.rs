//! Limits and first derived limits of towers of abelian groups, and the
//! six-term sequence on the 2-adic model `0 → Z →(×2^n) Z → Z/2^n → 0`.
//!
//! Run with `cargo run --example derived_limits`.

use corona_lab::derived_limits::{
    build_paper_model, flasque_check, lim1_tower, lim_tower, random_finite_ses, six_term_check, smith_normal_form,
    AbGroup, IntMatrix, Tower,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> corona_lab::Result<()> {
    let m = IntMatrix::from_i64(3, 3, &[2, 4, 4, -6, 6, 12, 10, -4, -16])?;
    let s = smith_normal_form(&m);
    println!(
        "Smith invariants {:?}, certificate verified {}",
        s.invariants(),
        s.verify(&m)?
    );

    let towers = [
        ("constant Z", Tower::constant(AbGroup::free(1))),
        ("Z <-x2- Z", Tower::periodic_free(IntMatrix::from_i64(1, 1, &[2])?)?),
        ("Z/2 <- Z/4 <- ...", Tower::reductions(2, 10)?),
    ];
    for (name, t) in &towers {
        let lim = lim_tower(t, 10)?;
        let lim1 = lim1_tower(t, 10)?;
        println!(
            "{name}: lim = {} (stabilized {}), lim^1 {:?}, flasque {}",
            lim.canonical,
            lim.stabilized,
            lim1.verdict,
            flasque_check(t)?
        );
    }

    let report = six_term_check(&build_paper_model(), 12)?;
    println!("2-adic model: {:?}, holds {}", report.case, report.holds);
    println!("  {}", report.detail);
    let indices: Vec<String> = report.lim1_f.evidence[0]
        .indices()
        .iter()
        .take(6)
        .map(|i| i.as_ref().unwrap().to_string())
        .collect();
    println!("  image indices in F_0: {} ...", indices.join(", "));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let exact = (0..20)
        .map(|_| six_term_check(&random_finite_ses(&mut rng, 4)?, 4))
        .collect::<corona_lab::Result<Vec<_>>>()?
        .iter()
        .filter(|r| r.holds)
        .count();
    println!("random finite sequences with exact limits: {exact}/20");
    Ok(())
}
