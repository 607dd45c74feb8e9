//! Property tests for the invariants the modules rely on.

use std::f64::consts::PI;

use corona_lab::derived_limits::{
    flasque_check, hermite_rows, lim1_tower, smith_normal_form, AbGroup, Canonical, IntMatrix, Lim1Verdict, Tower,
};
use corona_lab::linalg::CMatrix;
use corona_lab::operator_lab::{ad_sandwich, BlockStructure};
use corona_lab::torus_metrics::{chord, delta_set, lij_bound_check, wrap_phase, IndexSet, TorusElement};
use corona_lab::weak_units::{build_tent_unit, rank_two_norm, PositiveUnit};
use nalgebra::DVector;
use num_bigint::BigInt;
use num_complex::Complex64;
use proptest::prelude::*;

fn phases(h: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-PI..PI, h)
}

fn subset(h: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::btree_set(0..h, 1..=h).prop_map(|s| s.into_iter().collect())
}

fn int_matrix(max_dim: usize, bound: i64) -> impl Strategy<Value = IntMatrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(move |(r, c)| {
        prop::collection::vec(-bound..=bound, r * c).prop_map(move |e| IntMatrix::from_i64(r, c, &e).unwrap())
    })
}

fn cvec(v: &[(f64, f64)]) -> DVector<Complex64> {
    DVector::from_iterator(v.len(), v.iter().map(|&(re, im)| Complex64::new(re, im)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn chord_is_a_metric_on_the_circle(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
        prop_assert!(chord(a, b) <= 2.0 + 1e-15);
        prop_assert!((chord(a, b) - chord(b, a)).abs() < 1e-15);
        prop_assert!(chord(a, c) <= chord(a, b) + chord(b, c) + 1e-12);
        prop_assert!(chord(a, a + 2.0 * PI) < 1e-12);
        prop_assert!((0.0..2.0 * PI).contains(&wrap_phase(a)));
        prop_assert!(chord(wrap_phase(a), a) < 1e-12);
    }

    #[test]
    fn union_bound_holds((a, b, i, j) in (2..12usize).prop_flat_map(|h| (phases(h), phases(h), subset(h), subset(h)))) {
        let (alpha, beta) = (TorusElement::from_fn(a.len(), |k| a[k]).unwrap(), TorusElement::from_fn(b.len(), |k| b[k]).unwrap());
        let (si, sj) = (IndexSet::new(i.clone()).unwrap(), IndexSet::new(j.clone()).unwrap());
        for &i0 in &i {
            for &j0 in &j {
                let r = lij_bound_check(&alpha, &beta, &si, &sj, i0, j0).unwrap();
                prop_assert!(r.lhs <= r.rhs + 1e-12, "{} > {}", r.lhs, r.rhs);
            }
        }
    }

    #[test]
    fn delta_is_monotone_and_invariant((a, b, i, j) in (2..12usize).prop_flat_map(|h| (phases(h), phases(h), subset(h), subset(h))), shift in -PI..PI) {
        let alpha = TorusElement::from_fn(a.len(), |k| a[k]).unwrap();
        let beta = TorusElement::from_fn(b.len(), |k| b[k]).unwrap();
        let (si, sj) = (IndexSet::new(i).unwrap(), IndexSet::new(j).unwrap());
        let small = delta_set(&alpha, &beta, &si).unwrap();
        prop_assert!(small <= delta_set(&alpha, &beta, &si.union(&sj)).unwrap() + 1e-15);
        // multiplying α by a constant phase does not change Δ
        let rotated = TorusElement::from_fn(a.len(), |k| a[k] + shift).unwrap();
        prop_assert!((delta_set(&rotated, &beta, &si).unwrap() - small).abs() < 1e-12);
    }

    #[test]
    fn sandwich_lies_between_delta_and_twice_delta(sizes in prop::collection::vec(1..4usize, 1..6), seed in any::<u64>(), ph in phases(6)) {
        let blocks = BlockStructure::new(sizes.clone()).unwrap();
        let alpha = TorusElement::from_fn(sizes.len(), |k| ph[k]).unwrap();
        let set = IndexSet::range(0..sizes.len()).unwrap();
        let r = ad_sandwich(&alpha, &blocks, &set, 2, seed).unwrap();
        prop_assert!(r.delta - 1e-9 <= r.lower_witness);
        prop_assert!(r.lower_witness.max(r.sampled_max) <= 2.0 * r.delta + 1e-9);
    }

    #[test]
    fn smith_form_is_a_certified_factorization(m in int_matrix(5, 9)) {
        let s = smith_normal_form(&m);
        prop_assert!(s.verify(&m).unwrap());
        let inv = s.invariants();
        prop_assert!(inv.windows(2).all(|w| (&w[1] % &w[0]) == BigInt::from(0)));
    }

    #[test]
    fn hermite_form_is_idempotent_and_canonical(m in int_matrix(4, 6)) {
        let h = hermite_rows(&m);
        prop_assert_eq!(hermite_rows(&h), h.clone());
        // reversing the rows spans the same lattice
        let mut rows = m.to_rows();
        rows.reverse();
        let swapped = IntMatrix::with_shape(m.rows(), m.cols(), rows).unwrap();
        prop_assert_eq!(hermite_rows(&swapped), h);
    }

    #[test]
    fn canonical_form_is_idempotent(m in int_matrix(4, 12)) {
        let g = AbGroup::new(m.rows(), m).unwrap();
        let c: Canonical = g.canonical();
        prop_assert_eq!(AbGroup::from_canonical(&c).canonical(), c.clone());
        let back: AbGroup = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        prop_assert_eq!(back.canonical(), c);
    }

    #[test]
    fn flasque_towers_have_vanishing_lim1(ops in prop::collection::vec((0..2usize, 0..2usize, -3..=3i64, any::<bool>()), 3..8)) {
        // unimodular bonds built from elementary row operations are surjective
        let bonds: Vec<IntMatrix> = ops
            .iter()
            .map(|&(r, c, k, neg)| {
                let mut e = vec![1, 0, 0, 1];
                if r != c {
                    e[r * 2 + c] = k;
                }
                if neg {
                    e[0] = -e[0];
                    e[1] = -e[1];
                }
                IntMatrix::from_i64(2, 2, &e).unwrap()
            })
            .collect();
        let tower = Tower::new(vec![AbGroup::free(2); bonds.len() + 1], bonds, None).unwrap();
        prop_assert!(flasque_check(&tower).unwrap());
        prop_assert_eq!(lim1_tower(&tower, 8).unwrap().verdict, Lim1Verdict::Zero);
    }

    #[test]
    fn tent_units_are_exact(count in 2..40usize, step in 0.01..0.5f64) {
        let model = build_tent_unit(count, step).unwrap();
        let unit = PositiveUnit::from_tents(&model);
        let d = unit.defects();
        prop_assert!(d.within(1e-12), "{d:?}");
        for n in 0..=count {
            let p = model.partial(n);
            for (x, v) in model.grid().iter().zip(&p) {
                prop_assert!((v - (n as f64 - x).clamp(0.0, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rank_two_norm_matches_dense(v in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 16), near in any::<bool>()) {
        let (x1, y1) = (cvec(&v[0..4]), cvec(&v[4..8]));
        // near-cancelling pairs are where a Gram product would lose digits
        let (x2, y2) = if near {
            (&x1 * Complex64::new(1.0, 1e-9), &y1 + cvec(&v[12..16]) * Complex64::new(1e-9, 0.0))
        } else {
            (cvec(&v[8..12]), cvec(&v[12..16]))
        };
        let dense: CMatrix = &x1 * y1.adjoint() - &x2 * y2.adjoint();
        let exact = dense.clone().singular_values().max();
        let fast = rank_two_norm(&x1, &y1, &x2, &y2);
        prop_assert!((fast - exact).abs() <= 1e-12 + 1e-9 * exact, "{fast} vs {exact}");
    }
}
