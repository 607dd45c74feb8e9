//! Sparse sets `X ⊂ ℕ`, their enumerators `n(X, j)` over `{0} ∪ X`, the
//! induced interval partition `I(X, j) = [n(X, j), n(X, j+1))`, and the
//! finite-horizon profiles that stand in for membership in `F_X`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus_metrics::{delta_pair, delta_range, TorusElement, DEFAULT_SLACK};

#[derive(Deserialize)]
struct SparseWire {
    elements: Vec<usize>,
}

/// Finite truncation of an infinite `X ⊂ ℕ`, strictly increasing, at least
/// two elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SparseWire")]
pub struct SparseSet {
    elements: Vec<usize>,
    #[serde(skip)]
    enumeration: Vec<usize>,
}

impl TryFrom<SparseWire> for SparseSet {
    type Error = Error;
    fn try_from(w: SparseWire) -> Result<Self> {
        SparseSet::new(w.elements)
    }
}

impl SparseSet {
    pub fn new(elements: Vec<usize>) -> Result<Self> {
        if elements.len() < 2 {
            return Err(Error::PreconditionViolation(
                "a sparse set truncation needs at least two elements".into(),
            ));
        }
        if elements.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::PreconditionViolation(
                "sparse set must be strictly increasing".into(),
            ));
        }
        let mut enumeration = Vec::with_capacity(elements.len() + 1);
        if elements[0] != 0 {
            enumeration.push(0);
        }
        enumeration.extend_from_slice(&elements);
        Ok(Self { elements, enumeration })
    }

    pub fn elements(&self) -> &[usize] {
        &self.elements
    }

    /// The enumeration of `{0} ∪ X`.
    pub fn enumeration(&self) -> &[usize] {
        &self.enumeration
    }

    pub fn last(&self) -> usize {
        *self.elements.last().unwrap()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.elements.binary_search(&x).is_ok()
    }

    /// Number of complete intervals `I(X, j)` in the truncation.
    pub fn interval_count(&self) -> usize {
        self.enumeration.len() - 1
    }

    /// `n(X, j)`.
    pub fn n_of(&self, j: usize) -> Result<usize> {
        self.enumeration.get(j).copied().ok_or(Error::TruncationExceeded {
            requested: j,
            available: self.enumeration.len() - 1,
        })
    }

    /// `I(X, j)` as a half-open range.
    pub fn interval(&self, j: usize) -> Result<Range<usize>> {
        if j + 1 >= self.enumeration.len() {
            return Err(Error::TruncationExceeded {
                requested: j,
                available: self.interval_count().saturating_sub(1),
            });
        }
        Ok(self.enumeration[j]..self.enumeration[j + 1])
    }

    pub fn intervals(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.enumeration.windows(2).map(|w| w[0]..w[1])
    }

    /// Index `j` of the interval containing `x`, if `x < n(X, last)`.
    pub fn interval_index_of(&self, x: usize) -> Option<usize> {
        if x >= *self.enumeration.last().unwrap() {
            return None;
        }
        Some(self.enumeration.partition_point(|&e| e <= x) - 1)
    }

    pub fn partition(&self) -> IntervalPartition<'_> {
        IntervalPartition { set: self }
    }
}

/// Borrowed view of the intervals of a [`SparseSet`].
#[derive(Debug, Clone, Copy)]
pub struct IntervalPartition<'a> {
    set: &'a SparseSet,
}

impl IntervalPartition<'_> {
    pub fn len(&self) -> usize {
        self.set.interval_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, j: usize) -> Option<Range<usize>> {
        self.set.interval(j).ok()
    }

    /// `[0, n(X, last))`.
    pub fn covered(&self) -> Range<usize> {
        0..self.set.last()
    }

    pub fn iter(&self) -> impl Iterator<Item = Range<usize>> + '_ {
        self.set.intervals()
    }
}

/// `Y ⊂* X` evaluated within the common horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlmostInclusion {
    pub holds: bool,
    pub exceptions: Vec<usize>,
    pub horizon: usize,
    pub cutoff: usize,
}

/// Reports `Y ∖ X` below the common horizon `min(last Y, last X)`; the
/// relation is accepted when every exception lies below `cutoff`.
pub fn almost_subset(y: &SparseSet, x: &SparseSet, cutoff: usize) -> AlmostInclusion {
    let horizon = y.last().min(x.last());
    let exceptions: Vec<usize> = y
        .elements()
        .iter()
        .copied()
        .take_while(|&e| e <= horizon)
        .filter(|&e| !x.contains(e))
        .collect();
    AlmostInclusion {
        holds: exceptions.iter().all(|&e| e < cutoff),
        exceptions,
        horizon,
        cutoff,
    }
}

/// For `Y ⊆ X`, the `X`-interval indices making up each `I(Y, j)` that lies
/// within `X`'s truncation.
pub fn coarsen_map(y: &SparseSet, x: &SparseSet) -> Result<Vec<Range<usize>>> {
    let ex = x.enumeration();
    let mut positions = Vec::new();
    for &e in y.enumeration() {
        if e > x.last() {
            break;
        }
        match ex.binary_search(&e) {
            Ok(k) => positions.push(k),
            Err(_) => return Err(Error::PreconditionViolation(format!("{e} belongs to Y but not to X"))),
        }
    }
    Ok(positions.windows(2).map(|w| w[0]..w[1]).collect())
}

/// Verdict of a profile at `(ε, j0)`: every entry with index `≥ j0` is `≤ ε`.
/// This is a finite-horizon proxy, not membership in the limit group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FxVerdict {
    pub epsilon: f64,
    pub j0: usize,
    pub holds: bool,
    /// Largest entry at or past `j0`, with its index.
    pub worst: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitProfile {
    /// `Δ_{I(X,j)}(α, 1)`.
    pub block: Vec<f64>,
    /// `Δ_{{n(X,j), n(X,j+1)}}(α, 1)`.
    pub endpoint: Vec<f64>,
}

/// Double-interval profile `d_j = Δ_{I(X,j) ∪ I(X,j+1)}(α, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FxProfile {
    pub joint: Vec<f64>,
    pub split: Option<SplitProfile>,
}

impl FxProfile {
    pub fn verdict(&self, epsilon: f64, j0: usize) -> FxVerdict {
        let worst = self
            .joint
            .iter()
            .enumerate()
            .skip(j0)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(j, &v)| (j, v));
        FxVerdict {
            epsilon,
            j0,
            holds: worst.is_none_or(|(_, v)| v <= epsilon),
            worst,
        }
    }

    pub fn in_fx(&self, epsilon: f64, j0: usize) -> bool {
        self.verdict(epsilon, j0).holds
    }

    /// Checks the split/joint relations implied by the index-triangle
    /// inequality, returning the first offending index.
    pub fn split_consistency(&self) -> std::result::Result<(), usize> {
        let Some(split) = &self.split else { return Ok(()) };
        for (j, &d) in self.joint.iter().enumerate() {
            let (b0, b1, e) = (split.block[j], split.block[j + 1], split.endpoint[j]);
            if b0 > d + DEFAULT_SLACK || b1 > d + DEFAULT_SLACK || e > d + DEFAULT_SLACK {
                return Err(j);
            }
            if d > b0 + b1 + e + DEFAULT_SLACK {
                return Err(j);
            }
        }
        Ok(())
    }
}

/// Profiles `α` against `X`. The truncation must end strictly below the
/// horizon of `α`.
pub fn fx_profile(alpha: &TorusElement, x: &SparseSet, split: bool) -> Result<FxProfile> {
    if x.last() >= alpha.horizon() {
        return Err(Error::HorizonTooSmall {
            have: alpha.horizon(),
            need: x.last() + 1,
        });
    }
    let one = TorusElement::one(1);
    let e = x.enumeration();
    let joint = e
        .windows(3)
        .map(|w| delta_range(alpha, &one, w[0]..w[2]))
        .collect::<Result<Vec<_>>>()?;
    let split = if split {
        let block = e
            .windows(2)
            .map(|w| delta_range(alpha, &one, w[0]..w[1]))
            .collect::<Result<Vec<_>>>()?;
        let endpoint = e
            .windows(2)
            .map(|w| delta_pair(alpha, &one, w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        Some(SplitProfile { block, endpoint })
    } else {
        None
    };
    Ok(FxProfile { joint, split })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[usize]) -> SparseSet {
        SparseSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn enumerator_prepends_zero() {
        let x = set(&[2, 5, 9]);
        assert_eq!(x.n_of(0).unwrap(), 0);
        assert_eq!(x.n_of(1).unwrap(), 2);
        assert_eq!(x.n_of(2).unwrap(), 5);
        assert_eq!(x.n_of(3).unwrap(), 9);
        assert!(matches!(x.n_of(4), Err(Error::TruncationExceeded { .. })));

        let z = set(&[0, 3]);
        assert_eq!(z.n_of(0).unwrap(), 0);
        assert_eq!(z.n_of(1).unwrap(), 3);
    }

    #[test]
    fn evens_enumerate_linearly() {
        let evens = SparseSet::new((1..50).map(|k| 2 * k).collect()).unwrap();
        for j in 1..50 {
            assert_eq!(evens.n_of(j).unwrap(), 2 * j);
        }
    }

    #[test]
    fn intervals_partition_prefix() {
        let x = set(&[2, 5, 9]);
        assert_eq!(x.interval(0).unwrap(), 0..2);
        assert_eq!(x.interval(1).unwrap(), 2..5);
        assert_eq!(x.interval(2).unwrap(), 5..9);
        assert!(x.interval(3).is_err());
        let covered: Vec<usize> = x.intervals().flatten().collect();
        assert_eq!(covered, (0..9).collect::<Vec<_>>());
        for j in 0..2 {
            assert_eq!(x.interval(j).unwrap().end, x.interval(j + 1).unwrap().start);
        }
        assert_eq!(x.partition().covered(), 0..9);
        assert_eq!(x.interval_index_of(4), Some(1));
        assert_eq!(x.interval_index_of(9), None);
    }

    #[test]
    fn rejects_bad_sets() {
        assert!(SparseSet::new(vec![3]).is_err());
        assert!(SparseSet::new(vec![3, 3]).is_err());
        assert!(serde_json::from_str::<SparseSet>(r#"{"elements":[4,2]}"#).is_err());
        let x: SparseSet = serde_json::from_str(r#"{"elements":[2,4]}"#).unwrap();
        assert_eq!(x.n_of(2).unwrap(), 4);
    }

    #[test]
    fn almost_inclusion_cases() {
        let x = set(&[2, 4, 6, 8, 10]);
        let r = almost_subset(&x, &x, 0);
        assert!(r.holds && r.exceptions.is_empty());

        let y = set(&[1, 2, 4, 6, 8, 10]);
        let r = almost_subset(&y, &x, 5);
        assert!(r.holds);
        assert_eq!(r.exceptions, vec![1]);

        let odds = SparseSet::new((0..20).map(|k| 2 * k + 1).collect()).unwrap();
        let evens = SparseSet::new((1..21).map(|k| 2 * k).collect()).unwrap();
        let r = almost_subset(&odds, &evens, 10);
        assert!(!r.holds);
        assert_eq!(r.exceptions.len(), 20);
        let short = SparseSet::new((0..5).map(|k| 2 * k + 1).collect()).unwrap();
        assert!(almost_subset(&short, &evens, 10).exceptions.len() < r.exceptions.len());
    }

    #[test]
    fn coarsening() {
        let x = set(&[2, 5, 9]);
        let m = coarsen_map(&x, &x).unwrap();
        assert_eq!(m, vec![0..1, 1..2, 2..3]);

        let naturals = SparseSet::new((1..=20).collect()).unwrap();
        let evens = SparseSet::new((1..=10).map(|k| 2 * k).collect()).unwrap();
        let m = coarsen_map(&evens, &naturals).unwrap();
        assert_eq!(m.len(), 10);
        for (j, l) in m.iter().enumerate() {
            assert_eq!(l.len(), 2);
            let union = naturals.interval(l.start).unwrap().start..naturals.interval(l.end - 1).unwrap().end;
            assert_eq!(union, evens.interval(j).unwrap());
        }
        assert!(matches!(
            coarsen_map(&set(&[3, 7]), &evens),
            Err(Error::PreconditionViolation(_))
        ));
    }

    #[test]
    fn constant_profile_vanishes() {
        let alpha = TorusElement::one(30).rotate(1.3);
        let x = set(&[3, 7, 12, 20]);
        let p = fx_profile(&alpha, &x, true).unwrap();
        assert!(p.joint.iter().all(|&d| d == 0.0));
        assert!(p.in_fx(0.0, 0));
        assert!(p.split_consistency().is_ok());
    }

    #[test]
    fn profile_needs_horizon() {
        let alpha = TorusElement::one(9);
        assert_eq!(
            fx_profile(&alpha, &set(&[2, 5, 9]), false),
            Err(Error::HorizonTooSmall { have: 9, need: 10 })
        );
    }

    #[test]
    fn verdict_ignores_prefix() {
        let p = FxProfile {
            joint: vec![2.0, 0.05, 0.01],
            split: None,
        };
        assert!(!p.in_fx(0.1, 0));
        let v = p.verdict(0.1, 1);
        assert!(v.holds);
        assert_eq!(v.worst, Some((1, 0.05)));
    }
}
