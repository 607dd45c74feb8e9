//! Acceptance suite. Each criterion recomputes its quantities with an
//! independent oracle where one exists, checks its stated tolerance and
//! runtime, and prints one `[PASS]`/`[FAIL]` line. The criteria run
//! sequentially inside one test so their timings do not interfere.

use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use corona_lab::coherence_tree::{
    build_tree, generate_chain, jump_bound, schedule_for_tolerance, Certificate, CoherenceTree, DEFAULT_EPSILON,
    DEFAULT_J0,
};
use corona_lab::derived_limits::{
    build_paper_model, flasque_check, lim1_tower, lim_tower, random_finite_ses, six_term_check, Lim1Verdict,
    SixTermCase,
};
use corona_lab::interval_partitions::fx_profile;
use corona_lab::linalg::{frobenius, op_norm, unit_gaussian, CMatrix};
use corona_lab::operator_lab::{ad_sandwich, dd_check, stratify, tail_allowance, BlockStructure};
use corona_lab::torus_metrics::{chord, delta_range, lij_bound_check, IndexSet, TorusElement};
use corona_lab::weak_units::{
    build_tent_unit, epsilon_witness, hyp_check, power_gap, quasi_unitary_residual, weak_sandwich, Contraction,
    HypMode, PositiveUnit,
};
use num_bigint::BigInt;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;

struct Outcome {
    failures: Vec<String>,
    summary: String,
}

fn report(id: usize, name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut outcome = f();
    let elapsed = start.elapsed();
    if elapsed > limit {
        outcome
            .failures
            .push(format!("runtime {elapsed:.2?} exceeds {limit:?}"));
    }
    let pass = outcome.failures.is_empty();
    let mut line = format!(
        "[{}] {id}. {name}: {} ({elapsed:.2?})",
        if pass { "PASS" } else { "FAIL" },
        outcome.summary
    );
    for f in outcome.failures.iter().take(5) {
        line.push_str(&format!("\n       {f}"));
    }
    // written to the raw stream so the line survives output capture
    let _ = writeln!(std::io::stderr().lock(), "{line}");
    pass
}

/// `max_{i,j ∈ I} |α(i)·conj(α(j)) − β(i)·conj(β(j))|` by enumeration.
fn brute_delta(alpha: &TorusElement, beta: &TorusElement, idx: &[usize]) -> f64 {
    let mut best: f64 = 0.0;
    for &i in idx {
        for &j in idx {
            let a = alpha.value(i).unwrap() * alpha.value(j).unwrap().conj();
            let b = beta.value(i).unwrap() * beta.value(j).unwrap().conj();
            best = best.max((a - b).norm());
        }
    }
    best
}

fn tree_fixture(z_variant: bool) -> CoherenceTree {
    let schedule = schedule_for_tolerance(DEFAULT_EPSILON, 8);
    let chain = generate_chain(3, 100_000, &schedule, SEED).expect("chain");
    build_tree(&chain, 3, z_variant, DEFAULT_EPSILON, DEFAULT_J0).expect("tree")
}

fn divergence_exactness() -> Outcome {
    let tree = tree_fixture(false);
    let mut failures = Vec::new();
    let mut pairs = 0;
    for cert in &tree.certificates {
        let Certificate::Divergence {
            left, right, blocks, ..
        } = cert
        else {
            continue;
        };
        pairs += 1;
        let ratio = tree
            .node(left)
            .unwrap()
            .alpha
            .ratio(&tree.node(right).unwrap().alpha)
            .unwrap();
        let one = TorusElement::one(1);
        let best = blocks
            .iter()
            .map(|b| delta_range(&ratio, &one, b.start..b.end).unwrap())
            .fold(0.0, f64::max);
        if best < 2.0 - 1e-9 {
            failures.push(format!("siblings {left}/{right}: best block Δ = {best}"));
        }
    }
    if pairs != 7 {
        failures.push(format!("expected 7 sibling pairs, found {pairs}"));
    }
    Outcome {
        failures,
        summary: format!("{pairs} sibling pairs reach Δ = 2 on a certified block"),
    }
}

fn coherence_decay() -> Outcome {
    let mut failures = Vec::new();
    let mut pairs = 0;
    let mut worst: f64 = 0.0;
    let mut jump_checks = 0;
    for z in [false, true] {
        let tree = tree_fixture(z);
        for t in &tree.nodes {
            for s in tree.path(&t.label) {
                if s.label == t.label {
                    continue;
                }
                pairs += usize::from(!z);
                let ratio = s.alpha.ratio(&t.alpha).unwrap();
                let profile = fx_profile(&ratio, tree.chain.level(s.level), false).unwrap();
                let tail = profile.joint.iter().skip(DEFAULT_J0).copied().fold(0.0, f64::max);
                worst = worst.max(tail);
                if tail > DEFAULT_EPSILON {
                    failures.push(format!("{:?} ⊏ {:?}: profile {tail} beyond j0", s.label, t.label));
                }
            }
        }
        if z {
            for cert in &tree.certificates {
                let Certificate::JumpBound { node, checkpoints } = cert else {
                    continue;
                };
                let phases = tree.node(node).unwrap().alpha.phases();
                for c in checkpoints {
                    jump_checks += 1;
                    let observed = phases[c.i0..].windows(2).map(|w| chord(w[0], w[1])).fold(0.0, f64::max);
                    if observed > c.bound + 1e-12 {
                        failures.push(format!(
                            "node {node:?}: jump {observed} beyond {} from {}",
                            c.bound, c.i0
                        ));
                    }
                }
            }
            let declared = schedule_for_tolerance(DEFAULT_EPSILON, 8);
            if jump_checks == 0 || declared.iter().any(|&m| jump_bound(m) > DEFAULT_EPSILON + 1e-12) {
                failures.push("restricted variant lacks jump certificates within tolerance".into());
            }
        }
    }
    Outcome {
        failures,
        summary: format!(
            "{pairs} ancestor pairs, worst profile {worst:.4} ≤ 0.1 beyond j0; {jump_checks} jump checkpoints"
        ),
    }
}

fn union_bound_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let trials = 100_000;
    for t in 0..trials {
        let h = rng.random_range(2..=16usize);
        let alpha = TorusElement::from_fn(h, |_| rng.random_range(-PI..PI)).unwrap();
        let beta = TorusElement::from_fn(h, |_| rng.random_range(-PI..PI)).unwrap();
        let pick = |rng: &mut ChaCha8Rng| loop {
            let v: Vec<usize> = (0..h).filter(|_| rng.random_bool(0.4)).collect();
            if !v.is_empty() {
                return IndexSet::new(v).unwrap();
            }
        };
        let (i, j) = (pick(&mut rng), pick(&mut rng));
        let i0 = i.indices()[rng.random_range(0..i.len())];
        let j0 = j.indices()[rng.random_range(0..j.len())];
        let r = lij_bound_check(&alpha, &beta, &i, &j, i0, j0).unwrap();
        if !r.holds || r.lhs > r.rhs + 1e-12 {
            failures.push(format!("trial {t}: {} > {}", r.lhs, r.rhs));
        }
    }
    Outcome {
        failures,
        summary: format!("{trials} instances, zero violations at slack 1e-12 required"),
    }
}

fn stratification() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let blocks = BlockStructure::uniform(64, 4).unwrap();
    let mut failures = Vec::new();
    let mut worst_residual: f64 = 0.0;
    let mut worst_ratio: f64 = 0.0;
    for k in 0..100 {
        let m = unit_gaussian(&mut rng, 256, 256);
        let w = stratify(&m, &blocks, 64).unwrap();
        // Frobenius dominates the operator norm, so this bounds the residual
        let residual = frobenius(&(&m - (&w.m_e + &w.m_o + &w.a)));
        worst_residual = worst_residual.max(residual);
        if residual > 1e-12 {
            failures.push(format!("matrix {k}: residual {residual}"));
        }
        if !dd_check(&w.d(), &w.x, &blocks).unwrap() {
            failures.push(format!(
                "matrix {k}: band part has nonzero entries off the double blocks"
            ));
        }
        for (i, &t) in w.tail_bounds.iter().enumerate() {
            worst_ratio = worst_ratio.max(t / tail_allowance(i));
            if t > tail_allowance(i) {
                failures.push(format!("matrix {k}: tail {i} = {t}"));
            }
        }
    }
    Outcome {
        failures,
        summary: format!(
            "100 dense 256x256 matrices, residual ≤ {worst_residual:.1e}, largest tail/allowance {worst_ratio:.3}"
        ),
    }
}

fn sandwich() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    for t in 0..1000 {
        let count = rng.random_range(1..=6usize);
        let sizes: Vec<usize> = (0..count).map(|_| rng.random_range(1..=4)).collect();
        let blocks = BlockStructure::new(sizes).unwrap();
        let alpha = TorusElement::from_fn(count, |_| rng.random_range(-PI..PI)).unwrap();
        let set = loop {
            let v: Vec<usize> = (0..count).filter(|_| rng.random_bool(0.6)).collect();
            if !v.is_empty() {
                break IndexSet::new(v).unwrap();
            }
        };
        let r = ad_sandwich(&alpha, &blocks, &set, 4, rng.random()).unwrap();
        let oracle = brute_delta(&alpha, &TorusElement::one(count), set.indices());
        if (oracle - r.delta).abs() > 1e-12 {
            failures.push(format!("instance {t}: Δ {} vs enumeration {oracle}", r.delta));
        }
        if r.delta - 1e-9 > r.lower_witness
            || r.lower_witness > 2.0 * r.delta + 1e-9
            || r.sampled_max > 2.0 * r.delta + 1e-9
        {
            failures.push(format!("instance {t}: {r:?}"));
        }
    }
    let pair = BlockStructure::new(vec![1, 1]).unwrap();
    let antipodal = TorusElement::from_fn(2, |i| if i == 0 { 0.0 } else { PI }).unwrap();
    let r = ad_sandwich(&antipodal, &pair, &IndexSet::range(0..2).unwrap(), 8, 1).unwrap();
    if r.delta != 2.0 || r.lower_witness != 2.0 {
        failures.push(format!("α = (1, -1): Δ = {}, witness = {}", r.delta, r.lower_witness));
    }
    Outcome {
        failures,
        summary: "1000 fuzzed instances within [Δ, 2Δ]; α = (1, -1) attains 2 = Δ exactly".into(),
    }
}

/// Dense matrix of a diagonal sample vector.
fn diag(v: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        v.len(),
        v.iter().map(|&x| Complex64::new(x, 0.0)),
    ))
}

fn quasi_unitary() -> Outcome {
    let model = build_tent_unit(50, 0.25).unwrap();
    let unit = PositiveUnit::from_tents(&model);
    let dense = PositiveUnit::from_dense((0..50).map(|i| diag(model.tent(i))).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    for t in 0..100 {
        let scale = rng.random_range(0.1..2.0);
        let steps: Vec<f64> = (0..50)
            .map(|i| scale * rng.random_range(-1.0..1.0) / (i as f64 + 1.0))
            .collect();
        let alpha = TorusElement::from_fn(50, |i| steps[..i].iter().sum()).unwrap();
        for n in 0..49 {
            let r = quasi_unitary_residual(&alpha, &unit, n).unwrap();
            if r.tail_norm > 3.0 * r.epsilon_n + 1e-12 {
                failures.push(format!("instance {t}, N = {n}: {} > 3·{}", r.tail_norm, r.epsilon_n));
            }
            if t < 3 && n % 8 == 0 {
                let oracle = quasi_unitary_residual(&alpha, &dense, n).unwrap();
                if (oracle.tail_norm - r.tail_norm).abs() > 1e-12 {
                    failures.push(format!(
                        "instance {t}, N = {n}: dense norm {} vs {}",
                        oracle.tail_norm, r.tail_norm
                    ));
                }
            }
        }
    }
    let alternating = TorusElement::from_fn(50, |i| if i % 2 == 0 { 0.0 } else { PI }).unwrap();
    let floor = (0..47)
        .map(|n| quasi_unitary_residual(&alternating, &unit, n).unwrap().tail_norm)
        .fold(f64::INFINITY, f64::min);
    if floor < 1.0 - 1e-12 {
        failures.push(format!("alternating control dropped to {floor}"));
    }
    Outcome {
        failures,
        summary: format!("100 decaying sequences within 3·ε_N at every N; alternating control stays at {floor:.3}"),
    }
}

/// `max_{t∈[0,1]} t^k(1−t)` by golden-section search.
fn golden_max(k: usize) -> f64 {
    let f = |t: f64| t.powi(k as i32) * (1.0 - t);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, 1.0);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            a = c;
        } else {
            b = d;
        }
    }
    f(0.5 * (a + b))
}

fn epsilon_witnesses() -> Outcome {
    let model = build_tent_unit(50, 0.25).unwrap();
    let unit = PositiveUnit::from_tents(&model);
    let mut failures = Vec::new();
    let mut worst_defect: f64 = 0.0;
    for i in 0..=10 {
        for j in 0..=10 {
            let w = match epsilon_witness(&unit, i, j, 0.1) {
                Ok(w) => w,
                Err(e) => {
                    failures.push(format!("({i}, {j}): {e}"));
                    continue;
                }
            };
            let a = w.a.matrix();
            let (ri, rj) = (diag(model.tent(i)), diag(model.tent(j)));
            let corner = &ri * &a * &rj;
            let (norm, c, defect) = (op_norm(&a), op_norm(&corner), op_norm(&(&corner - &a)));
            worst_defect = worst_defect.max(defect);
            if (norm - 1.0).abs() > 1e-12 || c < 0.9 || defect >= 0.1 {
                failures.push(format!("({i}, {j}): ‖a‖ = {norm}, corner {c}, defect {defect}"));
            }
        }
    }
    for k in 1..=30 {
        let exact =
            BigInt::from(k).pow(k as u32).to_f64().unwrap() / BigInt::from(k + 1).pow(k as u32 + 1).to_f64().unwrap();
        let value = power_gap(Contraction::FullInterval, k).unwrap();
        if (value - exact).abs() > 1e-12 || (value - golden_max(k)).abs() > 1e-12 {
            failures.push(format!("power gap at k = {k}: {value} vs {exact}"));
        }
    }
    if (power_gap(Contraction::FullInterval, 4).unwrap() - 0.08192).abs() > 1e-12 {
        failures.push("power gap at k = 4 differs from 0.08192".into());
    }
    Outcome {
        failures,
        summary: format!("121 pairs certified, largest defect {worst_defect:.1e}; power gaps match for k ≤ 30"),
    }
}

fn derived_limits() -> Outcome {
    let mut failures = Vec::new();
    let ses = build_paper_model();
    let (f, t, _) = ses.towers();
    let report = six_term_check(&ses, 12).unwrap();
    if !report.lim_f.canonical.is_trivial() {
        failures.push(format!("lim F = {}", report.lim_f.canonical));
    }
    if !flasque_check(t).unwrap() || report.lim1_t.verdict != Lim1Verdict::Zero {
        failures.push("T should be flasque with vanishing lim^1".into());
    }
    let chain = &report.lim1_f.evidence[0];
    let indices: Vec<BigInt> = chain.indices().into_iter().map(|i| i.unwrap_or_default()).collect();
    let expected: Vec<BigInt> = (0..indices.len() as u32).map(|m| BigInt::from(2).pow(m)).collect();
    if report.lim1_f.verdict != Lim1Verdict::Nonzero || !chain.strictly_descending() || indices != expected {
        failures.push(format!(
            "lim^1 F evidence {:?} with indices {indices:?}",
            report.lim1_f.verdict
        ));
    }
    if report.case != SixTermCase::DiagonalNotSurjective || !report.holds {
        failures.push(format!("six-term report: {}", report.detail));
    }
    if lim_tower(f, 12).unwrap().stabilized && lim1_tower(f, 12).unwrap().verdict == Lim1Verdict::Zero {
        failures.push("F tower misclassified".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for k in 0..100 {
        let ses = random_finite_ses(&mut rng, 4).unwrap();
        let r = six_term_check(&ses, 4).unwrap();
        let exact = (0..4).all(|n| ses.level_exactness(n).unwrap().exact());
        if r.lim1_f.verdict != Lim1Verdict::Zero || r.case != SixTermCase::ExactLimits || !r.holds || !exact {
            failures.push(format!("random sequence {k}: {:?}", r.case));
        }
    }
    Outcome {
        failures,
        summary: "2-adic model: lim F = 0, lim^1 T = 0, lim^1 F ≠ 0 (indices 2^m); 100 random sequences exact".into(),
    }
}

fn projection_regression() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for t in 0..100 {
        let count = rng.random_range(2..=6usize);
        let sizes: Vec<usize> = (0..count).map(|_| rng.random_range(1..=3)).collect();
        let blocks = BlockStructure::new(sizes).unwrap();
        let unit = PositiveUnit::from_blocks(&blocks);
        let alpha = TorusElement::from_fn(count, |_| rng.random_range(-PI..PI)).unwrap();
        let set = IndexSet::range(0..rng.random_range(1..=count)).unwrap();
        let seed = rng.random();
        let strong = ad_sandwich(&alpha, &blocks, &set, 3, seed).unwrap();
        let weak = weak_sandwich(&alpha, &unit, &set, 0.05, 3, seed).unwrap();
        let gap = (strong.delta - weak.delta)
            .abs()
            .max((strong.lower_witness - weak.lower_witness).abs())
            .max((strong.sampled_max - weak.sampled_max).abs());
        worst = worst.max(gap);
        if gap > 1e-12 {
            failures.push(format!("instance {t}: sandwich values differ by {gap}"));
        }
        let w = epsilon_witness(&unit, 0, count - 1, 0.05).unwrap();
        if w.norms.k != 1 || w.norms.defect != 0.0 {
            failures.push(format!("instance {t}: projection witness needs k = {}", w.norms.k));
        }
        if hyp_check(&unit, HypMode::HypA, 0.05, 3).holds != hyp_check(&unit, HypMode::HypWeak, 0.05, 3).holds {
            failures.push(format!("instance {t}: hypotheses disagree on projections"));
        }
        if quasi_unitary_residual(&alpha, &unit, 0).unwrap().tail_norm != 0.0 {
            failures.push(format!("instance {t}: projection residual is nonzero"));
        }
    }
    Outcome {
        failures,
        summary: format!("100 projection units, largest deviation {worst:.1e}"),
    }
}

#[test]
fn acceptance_criteria() {
    let results = [
        report(1, "divergence exactness", Duration::from_secs(30), divergence_exactness),
        report(2, "coherence decay", Duration::from_secs(60), coherence_decay),
        report(3, "union bound fuzz", Duration::from_secs(10), union_bound_fuzz),
        report(4, "stratification", Duration::from_secs(120), stratification),
        report(5, "conjugation sandwich", Duration::from_secs(120), sandwich),
        report(6, "quasi-unitary bound", Duration::from_secs(30), quasi_unitary),
        report(7, "epsilon witnesses", Duration::from_secs(30), epsilon_witnesses),
        report(8, "derived limits", Duration::from_secs(60), derived_limits),
        report(
            9,
            "projection regression",
            Duration::from_secs(60),
            projection_regression,
        ),
    ];
    let failed: Vec<usize> = results
        .iter()
        .enumerate()
        .filter(|(_, &ok)| !ok)
        .map(|(i, _)| i + 1)
        .collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
