//! Finite-horizon elements of the infinite torus and the pseudometrics
//! `Δ_I(α, β) = max_{i,j ∈ I} |α(i)·conj(α(j)) − β(i)·conj(β(j))|`.
//!
//! Elements are stored as phases, so every value `exp(iθ)` is unimodular by
//! construction. Pair distances are evaluated in phase arithmetic as
//! `2·|sin(δ/2)|` where `δ` is the relevant phase difference.

use std::f64::consts::{PI, TAU};
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used by every inequality check on Δ values.
pub const DEFAULT_SLACK: f64 = 1e-12;

/// Reduce an angle to `[0, 2π)`.
pub fn wrap_phase(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Chord length between two points of the unit circle given by phase.
#[inline]
pub fn chord(a: f64, b: f64) -> f64 {
    (2.0 * ((a - b) * 0.5).sin()).abs()
}

/// What a query past the stored horizon returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TailConvention {
    /// The last stored value repeats forever.
    #[default]
    #[serde(rename = "constant")]
    EventuallyConstant,
    /// Queries at or past the horizon are errors.
    #[serde(rename = "none")]
    Undefined,
}

#[derive(Serialize, Deserialize)]
struct TorusWire {
    horizon: usize,
    phases: Vec<f64>,
    tail: TailConvention,
}

/// A sequence `α ∈ T^ℕ` truncated at a finite horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TorusWire", into = "TorusWire")]
pub struct TorusElement {
    phases: Vec<f64>,
    tail: TailConvention,
}

impl TryFrom<TorusWire> for TorusElement {
    type Error = Error;

    fn try_from(w: TorusWire) -> Result<Self> {
        if w.horizon != w.phases.len() {
            return Err(Error::InvalidInput(format!(
                "horizon {} does not match {} phases",
                w.horizon,
                w.phases.len()
            )));
        }
        TorusElement::new(w.phases, w.tail)
    }
}

impl From<TorusElement> for TorusWire {
    fn from(t: TorusElement) -> Self {
        TorusWire {
            horizon: t.phases.len(),
            phases: t.phases,
            tail: t.tail,
        }
    }
}

impl TorusElement {
    pub fn new(phases: Vec<f64>, tail: TailConvention) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::PreconditionViolation("horizon must be at least 1".into()));
        }
        if let Some(bad) = phases.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite phase {bad}")));
        }
        Ok(Self {
            phases: phases.into_iter().map(wrap_phase).collect(),
            tail,
        })
    }

    /// The constant sequence `1` (all phases zero).
    pub fn one(horizon: usize) -> Self {
        Self {
            phases: vec![0.0; horizon.max(1)],
            tail: TailConvention::EventuallyConstant,
        }
    }

    pub fn from_fn(horizon: usize, f: impl FnMut(usize) -> f64) -> Result<Self> {
        Self::new((0..horizon).map(f).collect(), TailConvention::EventuallyConstant)
    }

    pub fn horizon(&self) -> usize {
        self.phases.len()
    }

    pub fn tail(&self) -> TailConvention {
        self.tail
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn phase(&self, i: usize) -> Result<f64> {
        match self.phases.get(i) {
            Some(p) => Ok(*p),
            None => match self.tail {
                TailConvention::EventuallyConstant => Ok(*self.phases.last().unwrap()),
                TailConvention::Undefined => Err(Error::IndexOutOfRange {
                    index: i,
                    horizon: self.phases.len(),
                }),
            },
        }
    }

    pub fn value(&self, i: usize) -> Result<Complex64> {
        Ok(Complex64::from_polar(1.0, self.phase(i)?))
    }

    /// Pointwise product over the longer of the two horizons.
    pub fn mul(&self, other: &TorusElement) -> Result<TorusElement> {
        self.combine(other, |a, b| a + b)
    }

    /// `self · other^{-1}`.
    pub fn ratio(&self, other: &TorusElement) -> Result<TorusElement> {
        self.combine(other, |a, b| a - b)
    }

    pub fn inverse(&self) -> TorusElement {
        TorusElement {
            phases: self.phases.iter().map(|p| wrap_phase(-p)).collect(),
            tail: self.tail,
        }
    }

    /// Multiply by the unimodular constant `exp(i·c)`.
    pub fn rotate(&self, c: f64) -> TorusElement {
        TorusElement {
            phases: self.phases.iter().map(|p| wrap_phase(p + c)).collect(),
            tail: self.tail,
        }
    }

    fn combine(&self, other: &TorusElement, op: impl Fn(f64, f64) -> f64) -> Result<TorusElement> {
        let h = self.horizon().max(other.horizon());
        let mut phases = Vec::with_capacity(h);
        for i in 0..h {
            phases.push(op(self.phase(i)?, other.phase(i)?));
        }
        let tail = if self.tail == TailConvention::Undefined || other.tail == TailConvention::Undefined {
            TailConvention::Undefined
        } else {
            TailConvention::EventuallyConstant
        };
        TorusElement::new(phases, tail)
    }

    fn diff_phase(&self, other: &TorusElement, i: usize) -> Result<f64> {
        Ok(self.phase(i)? - other.phase(i)?)
    }
}

/// A nonempty strictly increasing finite set of indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn new(mut indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::PreconditionViolation("index set must be nonempty".into()));
        }
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::PreconditionViolation("index set has duplicates".into()));
        }
        Ok(Self { indices })
    }

    pub fn range(r: Range<usize>) -> Result<Self> {
        Self::new(r.collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut v: Vec<usize> = self.indices.iter().chain(&other.indices).copied().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet { indices: v }
    }
}

/// Largest chord among a set of circle points, with the positions attaining it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diameter {
    pub value: f64,
    pub pair: (usize, usize),
}

/// Diameter of the point set `{exp(iθ_k)}` in `O(n log n)`.
///
/// The farthest partner of a point is the one closest to its antipode, so
/// after sorting by angle each point only needs the two sorted neighbours of
/// its antipode.
pub fn circle_diameter(phases: &[f64]) -> Diameter {
    let n = phases.len();
    if n <= 16 {
        let mut best = Diameter {
            value: 0.0,
            pair: (0, 0),
        };
        for a in 0..n {
            for b in a + 1..n {
                let c = chord(phases[a], phases[b]);
                if c > best.value {
                    best = Diameter { value: c, pair: (a, b) };
                }
            }
        }
        return best;
    }
    let mut order: Vec<(f64, usize)> = phases.iter().map(|&p| (wrap_phase(p), 0)).collect();
    for (k, o) in order.iter_mut().enumerate() {
        o.1 = k;
    }
    order.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut best = Diameter {
        value: 0.0,
        pair: (0, 0),
    };
    for &(angle, idx) in &order {
        let target = wrap_phase(angle + PI);
        let pos = order.partition_point(|o| o.0 < target);
        for cand in [pos % n, (pos + n - 1) % n] {
            let (other, oidx) = order[cand];
            let c = chord(angle, other);
            if c > best.value {
                best = Diameter {
                    value: c,
                    pair: (idx, oidx),
                };
            }
        }
    }
    best
}

/// `Δ_{{i,j}}(α, β)`.
pub fn delta_pair(alpha: &TorusElement, beta: &TorusElement, i: usize, j: usize) -> Result<f64> {
    let d = (alpha.phase(i)? - alpha.phase(j)?) - (beta.phase(i)? - beta.phase(j)?);
    Ok((2.0 * (d * 0.5).sin()).abs())
}

/// `Δ_I(α, β)`.
pub fn delta_set(alpha: &TorusElement, beta: &TorusElement, set: &IndexSet) -> Result<f64> {
    delta_over(alpha, beta, set.indices().iter().copied()).map(|d| d.value)
}

/// `Δ` over a half-open range of indices. An empty range gives 0.
pub fn delta_range(alpha: &TorusElement, beta: &TorusElement, range: Range<usize>) -> Result<f64> {
    delta_over(alpha, beta, range).map(|d| d.value)
}

/// `Δ` over arbitrary indices, returning the attaining index pair.
pub fn delta_over(
    alpha: &TorusElement,
    beta: &TorusElement,
    indices: impl IntoIterator<Item = usize>,
) -> Result<Diameter> {
    let mut idx = Vec::new();
    let mut diffs = Vec::new();
    for i in indices {
        idx.push(i);
        diffs.push(alpha.diff_phase(beta, i)?);
    }
    let d = circle_diameter(&diffs);
    if idx.is_empty() {
        return Ok(d);
    }
    Ok(Diameter {
        value: d.value,
        pair: (idx[d.pair.0], idx[d.pair.1]),
    })
}

/// Both sides of `Δ_{I∪J} ≤ Δ_I + Δ_J + Δ_{{i0,j0}}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LijReport {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

pub fn lij_bound_check(
    alpha: &TorusElement,
    beta: &TorusElement,
    set_i: &IndexSet,
    set_j: &IndexSet,
    i0: usize,
    j0: usize,
) -> Result<LijReport> {
    if !set_i.contains(i0) {
        return Err(Error::PreconditionViolation(format!("i0 = {i0} is not in I")));
    }
    if !set_j.contains(j0) {
        return Err(Error::PreconditionViolation(format!("j0 = {j0} is not in J")));
    }
    let lhs = delta_set(alpha, beta, &set_i.union(set_j))?;
    let rhs = delta_set(alpha, beta, set_i)? + delta_set(alpha, beta, set_j)? + delta_pair(alpha, beta, i0, j0)?;
    Ok(LijReport {
        lhs,
        rhs,
        holds: lhs <= rhs + DEFAULT_SLACK,
    })
}
