//! Stratifies random dense multipliers into `m_e + m_o + a` and prints the
//! certified tail norms against their allowances `2^{4−i}`.
//!
//! Run with `cargo run --release --example stratify -- [count] [dim]`.

use std::time::Instant;

use corona_lab::linalg::unit_gaussian;
use corona_lab::operator_lab::{dd_check, stratify, tail_allowance, BlockStructure};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> corona_lab::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let count = args.first().copied().unwrap_or(5);
    let dim = args.get(1).copied().unwrap_or(256);
    let blocks = BlockStructure::uniform(dim / 4, 4)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let start = Instant::now();
    for t in 0..count {
        let m = unit_gaussian(&mut rng, dim, dim);
        let w = stratify(&m, &blocks, 64)?;
        let dd = dd_check(&w.d(), &w.x, &blocks)?;
        println!(
            "matrix {t}: X = {:?}, residual {:.1e}, band exact {dd}, tail violations {:?}",
            w.x.elements(),
            w.residual,
            w.tail_violations()
        );
        if t == 0 {
            for (i, b) in w.tail_bounds.iter().enumerate() {
                println!("  ||(1-p_n({i})) a|| = {b:.6} <= {:.6}", tail_allowance(i));
            }
        }
    }
    println!("{count} matrices in {:.2?}", start.elapsed());
    Ok(())
}
