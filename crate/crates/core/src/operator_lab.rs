//! Block-matrix models of multipliers over a sequence of orthogonal block
//! projections `r_i`, with `p_n = r_0 + … + r_{n−1}`.
//!
//! Covers the near-block-diagonal decomposition `m = m_e + m_o + a`, diagonal
//! unitaries `u_α = Σ α(i) r_i` and their conjugation action, the two-sided
//! estimate `Δ_I(α, 1) ≤ ‖Ad u_α − id‖ ≤ 2Δ_I(α, 1)`, the kernel test against
//! double-block profiles and patching along a tree path.

use std::ops::Range;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coherence_tree::Chain;
use crate::error::{Error, Result};
use crate::interval_partitions::{fx_profile, FxVerdict, SparseSet};
use crate::linalg::{op_norm, unit_gaussian, CMatrix};
use crate::torus_metrics::{delta_over, IndexSet, TorusElement};

/// Slack for the two-sided conjugation estimate.
pub const SANDWICH_SLACK: f64 = 1e-9;

/// Orthogonal block projections realized as consecutive index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BlockWire", into = "BlockWire")]
pub struct BlockStructure {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BlockWire {
    sizes: Vec<usize>,
}

impl TryFrom<BlockWire> for BlockStructure {
    type Error = Error;
    fn try_from(w: BlockWire) -> Result<Self> {
        BlockStructure::new(w.sizes)
    }
}

impl From<BlockStructure> for BlockWire {
    fn from(b: BlockStructure) -> Self {
        BlockWire { sizes: b.sizes }
    }
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(Error::InvalidInput(
                "block sizes must be a nonempty list of positive sizes".into(),
            ));
        }
        let mut offsets = vec![0];
        for s in &sizes {
            offsets.push(offsets.last().unwrap() + s);
        }
        Ok(Self { sizes, offsets })
    }

    pub fn uniform(count: usize, size: usize) -> Result<Self> {
        Self::new(vec![size; count])
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Total dimension `D`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Matrix indices of `r_i`.
    pub fn range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Matrix indices of `p_{[lo, hi)}`.
    pub fn span(&self, blocks: Range<usize>) -> Range<usize> {
        self.offsets[blocks.start]..self.offsets[blocks.end]
    }

    /// First matrix index of block `n`, i.e. the rank of `p_n`.
    pub fn offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    /// Block index of every matrix index.
    pub fn block_of_each(&self) -> Vec<usize> {
        (0..self.count())
            .flat_map(|i| std::iter::repeat_n(i, self.sizes[i]))
            .collect()
    }
}

/// Square submatrix selection `rows × cols`, copied out.
fn sub(m: &CMatrix, rows: Range<usize>, cols: Range<usize>) -> CMatrix {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

/// `‖(1 − p_n) m‖` in matrix indices: rows from `start` on.
pub fn row_tail_norm(m: &CMatrix, start: usize) -> f64 {
    if start >= m.nrows() {
        return 0.0;
    }
    op_norm(&sub(m, start..m.nrows(), 0..m.ncols()))
}

/// `u_α = Σ α(i) r_i`, stored as phases per matrix index.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalUnitary {
    phases: Vec<f64>,
}

impl DiagonalUnitary {
    pub fn new(alpha: &TorusElement, blocks: &BlockStructure) -> Result<Self> {
        let mut phases = Vec::with_capacity(blocks.dim());
        for i in 0..blocks.count() {
            let p = alpha.phase(i)?;
            phases.extend(std::iter::repeat_n(p, blocks.sizes()[i]));
        }
        Ok(Self { phases })
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            self.phases.len(),
            self.phases.iter().map(|&p| Complex64::from_polar(1.0, p)),
        ))
    }

    /// `u m u*`, computed entrywise as `e^{i(θ_k − θ_l)} m_kl`.
    pub fn conjugate(&self, m: &CMatrix) -> CMatrix {
        CMatrix::from_fn(m.nrows(), m.ncols(), |k, l| {
            m[(k, l)] * Complex64::from_polar(1.0, self.phases[k] - self.phases[l])
        })
    }

    /// `u m u* − m`, entrywise `(d_k·conj(d_l) − 1) m_kl`.
    pub fn commutator(&self, m: &CMatrix) -> CMatrix {
        CMatrix::from_fn(m.nrows(), m.ncols(), |k, l| {
            m[(k, l)] * (Complex64::from_polar(1.0, self.phases[k] - self.phases[l]) - 1.0)
        })
    }

    pub fn inverse(&self) -> Self {
        Self {
            phases: self.phases.iter().map(|p| -p).collect(),
        }
    }
}

/// Interval index (in the block partition induced by `x`) of every block; the
/// blocks past `n(X, last)` form one trailing interval.
fn interval_of_blocks(x: &SparseSet, blocks: &BlockStructure) -> Result<Vec<usize>> {
    if x.last() > blocks.count() {
        return Err(Error::PreconditionViolation(format!(
            "partition reaches block {} but only {} blocks exist",
            x.last(),
            blocks.count()
        )));
    }
    let e = x.enumeration();
    Ok((0..blocks.count())
        .map(|b| e.partition_point(|&v| v <= b) - 1)
        .collect())
}

/// Near-block-diagonal decomposition `m = m_e + m_o + a` along `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdWitness {
    pub x: SparseSet,
    pub m_e: CMatrix,
    pub m_o: CMatrix,
    pub a: CMatrix,
    /// `‖(1 − p_{n(X,i)}) a‖` for every `i` of the enumeration.
    pub tail_bounds: Vec<f64>,
    /// `‖m − (m_e + m_o + a)‖`.
    pub residual: f64,
}

impl DdWitness {
    pub fn d(&self) -> CMatrix {
        &self.m_e + &self.m_o
    }

    /// Indices `i` with `tail_bounds[i] > 2^{4−i}`.
    pub fn tail_violations(&self) -> Vec<usize> {
        self.tail_bounds
            .iter()
            .enumerate()
            .filter(|(i, &t)| t > tail_allowance(*i))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn summary(&self) -> DdSummary {
        DdSummary {
            x: self.x.clone(),
            tail_bounds: self.tail_bounds.clone(),
            tail_allowances: (0..self.tail_bounds.len()).map(tail_allowance).collect(),
            residual: self.residual,
            norm_m_e: op_norm(&self.m_e),
            norm_m_o: op_norm(&self.m_o),
            norm_a: op_norm(&self.a),
        }
    }
}

/// Serializable record of a [`DdWitness`] without the matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DdSummary {
    pub x: SparseSet,
    pub tail_bounds: Vec<f64>,
    pub tail_allowances: Vec<f64>,
    pub residual: f64,
    pub norm_m_e: f64,
    pub norm_m_o: f64,
    pub norm_a: f64,
}

/// `2^{4−i}`.
pub fn tail_allowance(i: usize) -> f64 {
    2f64.powi(4 - i as i32)
}

/// Splits `m` along `x`: `m_e` keeps the even double blocks
/// `I(2i) ∪ I(2i+1)`, `m_o` the strips between `I(2i+1)` and `I(2i+2)`, and
/// `a` everything at interval distance at least 2.
pub fn split_along(m: &CMatrix, x: &SparseSet, blocks: &BlockStructure) -> Result<DdWitness> {
    check_square(m, blocks)?;
    let of_block = interval_of_blocks(x, blocks)?;
    let idx: Vec<usize> = blocks.block_of_each().into_iter().map(|b| of_block[b]).collect();
    let d = blocks.dim();
    let zero = Complex64::new(0.0, 0.0);
    let mut m_e = CMatrix::zeros(d, d);
    let mut m_o = CMatrix::zeros(d, d);
    let mut a = CMatrix::zeros(d, d);
    for l in 0..d {
        for k in 0..d {
            let z = m[(k, l)];
            if z == zero {
                continue;
            }
            let (p, q) = (idx[k], idx[l]);
            if p.abs_diff(q) >= 2 {
                a[(k, l)] = z;
            } else if p / 2 == q / 2 {
                m_e[(k, l)] = z;
            } else {
                m_o[(k, l)] = z;
            }
        }
    }
    let residual = op_norm(&(m - (&m_e + &m_o + &a)));
    let tail_bounds = tail_norms(&a, x, blocks);
    Ok(DdWitness {
        x: x.clone(),
        m_e,
        m_o,
        a,
        tail_bounds,
        residual,
    })
}

/// `‖(1 − p_{n(X,i)}) a‖` for each `i`, skipping the norm solve where the
/// remaining rows vanish.
fn tail_norms(a: &CMatrix, x: &SparseSet, blocks: &BlockStructure) -> Vec<f64> {
    let last_nonzero = (0..a.nrows())
        .rev()
        .find(|&r| a.row(r).iter().any(|z| z.re != 0.0 || z.im != 0.0));
    x.enumeration()
        .iter()
        .map(|&n| {
            let start = blocks.offset(n);
            match last_nonzero {
                Some(r) if start <= r => row_tail_norm(a, start),
                _ => 0.0,
            }
        })
        .collect()
}

fn check_square(m: &CMatrix, blocks: &BlockStructure) -> Result<()> {
    if m.nrows() != blocks.dim() || m.ncols() != blocks.dim() {
        return Err(Error::InvalidInput(format!(
            "matrix is {}x{} but the blocks span dimension {}",
            m.nrows(),
            m.ncols(),
            blocks.dim()
        )));
    }
    Ok(())
}

/// Greedy stratification: `n(0) = 0`, `n(1) = 1`, and each `n(j+1)` is the
/// least block index with `‖(1 − p_{n(j+1)}) m p_{n(j)}‖ ≤ 2^{−j}` and the
/// same for `m*`. After `j_max` steps the sequence is closed at the last
/// block, where both norms vanish.
pub fn stratify(m: &CMatrix, blocks: &BlockStructure, j_max: usize) -> Result<DdWitness> {
    check_square(m, blocks)?;
    let b = blocks.count();
    if b < 2 {
        return Err(Error::TruncationExceeded {
            requested: 2,
            available: b,
        });
    }
    let d = blocks.dim();
    let corner = |next: usize, cur: usize| {
        let (rows, cols) = (blocks.offset(next)..d, 0..blocks.offset(cur));
        let lower = op_norm(&sub(m, rows.clone(), cols.clone()));
        let upper = op_norm(&sub(m, cols, rows));
        lower.max(upper)
    };
    let mut ns = vec![1usize];
    let mut j = 1usize;
    while *ns.last().unwrap() < b {
        let cur = *ns.last().unwrap();
        if j >= j_max.max(1) {
            ns.push(b);
            break;
        }
        let bound = 0.5f64.powi(j as i32);
        let (mut lo, mut hi) = (cur + 1, b);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if corner(mid, cur) <= bound {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        ns.push(lo);
        j += 1;
    }
    split_along(m, &SparseSet::new(ns)?, blocks)
}

/// `true` iff every corner `p_{I(X,i)} m p_{I(X,j)}` with `|i − j| ≥ 2` is
/// exactly zero.
pub fn dd_check(m: &CMatrix, x: &SparseSet, blocks: &BlockStructure) -> Result<bool> {
    check_square(m, blocks)?;
    let of_block = interval_of_blocks(x, blocks)?;
    let idx: Vec<usize> = blocks.block_of_each().into_iter().map(|b| of_block[b]).collect();
    Ok((0..m.ncols())
        .all(|l| (0..m.nrows()).all(|k| idx[k].abs_diff(idx[l]) < 2 || (m[(k, l)].re == 0.0 && m[(k, l)].im == 0.0))))
}

/// Two-sided estimate of `‖Ad u_α − id‖` on the blocks of `I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub delta: f64,
    pub lower_witness: f64,
    pub sampled_max: f64,
    pub upper: f64,
    pub samples: usize,
    pub seed: u64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.delta - SANDWICH_SLACK <= self.lower_witness.max(self.sampled_max)
            && self.lower_witness <= self.upper + SANDWICH_SLACK
            && self.sampled_max <= self.upper + SANDWICH_SLACK
    }
}

/// Matrix indices of the blocks in `set`, with the local block number of each.
pub(crate) fn compressed_indices(blocks: &BlockStructure, set: &IndexSet) -> Result<Vec<usize>> {
    if let Some(&bad) = set.indices().iter().find(|&&i| i >= blocks.count()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            horizon: blocks.count(),
        });
    }
    Ok(set.indices().iter().flat_map(|&i| blocks.range(i)).collect())
}

/// Largest `‖u a u* − a‖` over `samples` random unit-norm `a` on the
/// compressed space with diagonal phases `phases`.
pub(crate) fn sampled_commutator_max(phases: &[f64], samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = DiagonalUnitary {
        phases: phases.to_vec(),
    };
    (0..samples)
        .map(|_| op_norm(&u.commutator(&unit_gaussian(&mut rng, phases.len(), phases.len()))))
        .fold(0.0, f64::max)
}

/// Evaluates `Δ_I(α, 1)`, the matrix-unit lower witness over all block pairs
/// of `I` and the largest commutator norm over random unit-norm elements.
pub fn ad_sandwich(
    alpha: &TorusElement,
    blocks: &BlockStructure,
    set: &IndexSet,
    samples: usize,
    seed: u64,
) -> Result<SandwichReport> {
    let one = TorusElement::one(1);
    let delta = delta_over(alpha, &one, set.indices().iter().copied())?.value;
    let idx = compressed_indices(blocks, set)?;
    let u = DiagonalUnitary::new(alpha, blocks)?;
    let phases: Vec<f64> = idx.iter().map(|&k| u.phases[k]).collect();
    let local = DiagonalUnitary { phases: phases.clone() };
    let dim = idx.len();
    let mut firsts = Vec::with_capacity(set.len());
    let mut acc = 0;
    for &i in set.indices() {
        firsts.push(acc);
        acc += blocks.sizes()[i];
    }
    let mut lower_witness: f64 = 0.0;
    for &k in &firsts {
        for &l in &firsts {
            let mut unit = CMatrix::zeros(dim, dim);
            unit[(k, l)] = Complex64::new(1.0, 0.0);
            lower_witness = lower_witness.max(op_norm(&local.commutator(&unit)));
        }
    }
    Ok(SandwichReport {
        delta,
        lower_witness,
        sampled_max: sampled_commutator_max(&phases, samples, seed),
        upper: 2.0 * delta,
        samples,
        seed,
    })
}

/// Witness that `Ad u_α` moves a block-diagonal element on one parity class
/// of double blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelWitness {
    pub element: CMatrix,
    pub parity: usize,
    pub double_blocks: Vec<usize>,
    pub commutator_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelReport {
    pub verdict: FxVerdict,
    pub trivial_on_cx: bool,
    /// Largest `‖u m u* − m‖ / ‖m‖` over the test elements beyond `j0`.
    pub max_test_ratio: Option<f64>,
    pub tests: usize,
    pub witness: Option<KernelWitness>,
}

impl KernelReport {
    /// Checks the certified inequality that matches the verdict.
    pub fn certified(&self) -> bool {
        let eps = self.verdict.epsilon;
        match (&self.witness, self.trivial_on_cx) {
            (None, true) => self.max_test_ratio.is_none_or(|r| r <= 2.0 * eps + SANDWICH_SLACK),
            (Some(w), false) => w.commutator_norm >= eps * op_norm(&w.element) - SANDWICH_SLACK,
            _ => false,
        }
    }
}

/// Decides whether `Ad u_α` acts trivially on double-block elements along `x`
/// beyond `j0` at tolerance `ε`, certifying either the blockwise upper bound
/// on random test elements or a moved block-diagonal witness.
pub fn kernel_test(
    alpha: &TorusElement,
    x: &SparseSet,
    blocks: &BlockStructure,
    epsilon: f64,
    j0: usize,
    seed: u64,
) -> Result<KernelReport> {
    if x.last() > blocks.count() {
        return Err(Error::PreconditionViolation(format!(
            "partition reaches block {} but only {} blocks exist",
            x.last(),
            blocks.count()
        )));
    }
    let horizon_alpha = if alpha.horizon() > x.last() {
        alpha.clone()
    } else {
        alpha.mul(&TorusElement::one(x.last() + 1))?
    };
    let profile = fx_profile(&horizon_alpha, x, false)?;
    let verdict = profile.verdict(epsilon, j0);
    let u = DiagonalUnitary::new(alpha, blocks)?;
    let e = x.enumeration();
    let dim = blocks.dim();
    if verdict.holds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: Option<f64> = None;
        let mut tests = 0;
        for j in j0..profile.joint.len() {
            let span = blocks.span(e[j]..e[j + 2]);
            let local = unit_gaussian(&mut rng, span.len(), span.len());
            let mut m = CMatrix::zeros(dim, dim);
            m.view_mut((span.start, span.start), (span.len(), span.len()))
                .copy_from(&local);
            let ratio = op_norm(&u.commutator(&m)) / op_norm(&m);
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
            tests += 1;
        }
        return Ok(KernelReport {
            verdict,
            trivial_on_cx: true,
            max_test_ratio: worst,
            tests,
            witness: None,
        });
    }
    let violating: Vec<usize> = (j0..profile.joint.len())
        .filter(|&j| profile.joint[j] > epsilon)
        .collect();
    let parity = [0, 1]
        .into_iter()
        .max_by_key(|p| (violating.iter().filter(|&&j| j % 2 == *p).count(), *p == 0))
        .unwrap();
    let chosen: Vec<usize> = violating.iter().copied().filter(|j| j % 2 == parity).collect();
    let one = TorusElement::one(1);
    let mut element = CMatrix::zeros(dim, dim);
    for &j in &chosen {
        let far = delta_over(&horizon_alpha, &one, e[j]..e[j + 2])?;
        let (p, q) = far.pair;
        element[(blocks.offset(p), blocks.offset(q))] = Complex64::new(1.0, 0.0);
    }
    let commutator_norm = op_norm(&u.commutator(&element));
    Ok(KernelReport {
        verdict,
        trivial_on_cx: false,
        max_test_ratio: None,
        tests: 0,
        witness: Some(KernelWitness {
            element,
            parity,
            double_blocks: chosen,
            commutator_norm,
        }),
    })
}

/// Result of conjugating the band part of `m` at one chain level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelApplication {
    pub level: usize,
    pub witness: DdWitness,
    pub output: CMatrix,
}

/// A level is admissible when the residual of the band split along it meets
/// every tail allowance.
fn admissible(m: &CMatrix, x: &SparseSet, blocks: &BlockStructure) -> Result<Option<DdWitness>> {
    let w = split_along(m, x, blocks)?;
    Ok(w.tail_violations().is_empty().then_some(w))
}

/// `u_α d u_α* + a` for the split of `m` along level `level` of the chain.
pub fn apply_at_level(
    m: &CMatrix,
    alpha: &TorusElement,
    chain: &Chain,
    level: usize,
    blocks: &BlockStructure,
) -> Result<Option<LevelApplication>> {
    let Some(witness) = admissible(m, chain.level(level), blocks)? else {
        return Ok(None);
    };
    let u = DiagonalUnitary::new(alpha, blocks)?;
    let output = u.conjugate(&witness.d()) + &witness.a;
    Ok(Some(LevelApplication { level, witness, output }))
}

/// Applies the thread along a tree path (`path[ξ]` paired with chain level
/// `ξ`) at the coarsest admissible level.
pub fn apply_thread(
    m: &CMatrix,
    path: &[TorusElement],
    chain: &Chain,
    blocks: &BlockStructure,
) -> Result<LevelApplication> {
    check_path(path, chain)?;
    for level in (0..path.len()).rev() {
        if let Some(app) = apply_at_level(m, &path[level], chain, level, blocks)? {
            return Ok(app);
        }
    }
    Err(Error::NoStratification)
}

fn check_path(path: &[TorusElement], chain: &Chain) -> Result<()> {
    if path.is_empty() || path.len() > chain.levels().len() {
        return Err(Error::PreconditionViolation(format!(
            "path of length {} does not fit a chain with {} levels",
            path.len(),
            chain.levels().len()
        )));
    }
    Ok(())
}

/// Agreement of the thread outputs at two admissible levels, measured on the
/// corner past `n(X_fine, j0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyCheck {
    pub fine: usize,
    pub coarse: usize,
    pub coherent: bool,
    pub cut: usize,
    pub difference: f64,
    pub bound: f64,
}

impl ConsistencyCheck {
    pub fn holds(&self) -> bool {
        self.difference <= self.bound + SANDWICH_SLACK
    }
}

/// For every pair of admissible levels `ξ < η` on the path, compares the two
/// outputs on the corner past `n(X_ξ, j0)` against
/// `4ε‖m‖ + 2(‖(1 − p) a_ξ‖ + ‖(1 − p) a_η‖)`.
pub fn thread_consistency(
    m: &CMatrix,
    path: &[TorusElement],
    chain: &Chain,
    blocks: &BlockStructure,
    epsilon: f64,
    j0: usize,
) -> Result<Vec<ConsistencyCheck>> {
    check_path(path, chain)?;
    let apps = (0..path.len())
        .map(|l| apply_at_level(m, &path[l], chain, l, blocks))
        .collect::<Result<Vec<_>>>()?;
    let norm_m = op_norm(m);
    let dim = blocks.dim();
    let mut out = Vec::new();
    for (fine, fa) in apps.iter().enumerate() {
        let Some(fa) = fa else { continue };
        for (coarse, ca) in apps.iter().enumerate().skip(fine + 1) {
            let Some(ca) = ca else { continue };
            let x = chain.level(fine);
            let beta = path[fine].ratio(&path[coarse])?;
            let coherent = fx_profile(&beta, x, false)?.verdict(epsilon, j0).holds;
            let cut = x.n_of(j0).map(|n| blocks.offset(n.min(blocks.count()))).unwrap_or(dim);
            let corner = |mat: &CMatrix| sub(mat, cut..dim, cut..dim);
            let difference = op_norm(&corner(&(&fa.output - &ca.output)));
            let t_fine = row_tail_norm(&fa.witness.a, cut);
            let t_coarse = row_tail_norm(&ca.witness.a, cut);
            out.push(ConsistencyCheck {
                fine,
                coarse,
                coherent,
                cut,
                difference,
                bound: 4.0 * epsilon * norm_m + 2.0 * (t_fine + t_coarse),
            });
        }
    }
    Ok(out)
}

/// `true` when the matrix vanishes outside the block tridiagonal band.
pub fn is_block_tridiagonal(m: &CMatrix, blocks: &BlockStructure) -> bool {
    let idx = blocks.block_of_each();
    (0..m.ncols()).all(|l| (0..m.nrows()).all(|k| idx[k].abs_diff(idx[l]) < 2 || m[(k, l)] == Complex64::new(0.0, 0.0)))
}

/// Zeroes every entry outside the block tridiagonal band.
pub fn block_tridiagonal_part(m: &CMatrix, blocks: &BlockStructure) -> CMatrix {
    let idx = blocks.block_of_each();
    CMatrix::from_fn(m.nrows(), m.ncols(), |k, l| {
        if idx[k].abs_diff(idx[l]) < 2 {
            m[(k, l)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian, is_zero};
    use std::f64::consts::PI;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn single_block_support() {
        let blocks = BlockStructure::uniform(6, 2).unwrap();
        let mut m = CMatrix::zeros(12, 12);
        let local = gaussian(&mut rng(1), 2, 2);
        m.view_mut((4, 4), (2, 2)).copy_from(&local);
        let w = stratify(&m, &blocks, 20).unwrap();
        assert!(is_zero(&w.a) && is_zero(&w.m_o));
        assert_eq!(w.m_e, m);
    }

    #[test]
    fn identity_reconstructs() {
        let blocks = BlockStructure::uniform(8, 3).unwrap();
        let m = CMatrix::identity(24, 24);
        let w = stratify(&m, &blocks, 20).unwrap();
        assert!(is_zero(&w.a));
        assert_eq!(w.residual, 0.0);
        assert!(dd_check(&m, &w.x, &blocks).unwrap());
    }

    #[test]
    fn dense_stratification_certificates() {
        let blocks = BlockStructure::uniform(32, 2).unwrap();
        let m = unit_gaussian(&mut rng(2), 64, 64);
        let w = stratify(&m, &blocks, 64).unwrap();
        assert!(w.residual <= 1e-12);
        assert!(dd_check(&w.d(), &w.x, &blocks).unwrap());
        assert!(w.tail_violations().is_empty(), "{:?}", w.tail_bounds);
    }

    #[test]
    fn all_ones_is_not_dd() {
        let blocks = BlockStructure::uniform(6, 1).unwrap();
        let m = CMatrix::from_element(6, 6, Complex64::new(1.0, 0.0));
        let x = SparseSet::new(vec![1, 2, 3]).unwrap();
        assert!(!dd_check(&m, &x, &blocks).unwrap());
        assert!(dd_check(&CMatrix::identity(6, 6), &x, &blocks).unwrap());
    }

    #[test]
    fn schur_action_identity() {
        let blocks = BlockStructure::new(vec![1, 3, 2]).unwrap();
        let alpha = TorusElement::from_fn(3, |i| 0.7 * i as f64 + 0.1).unwrap();
        let u = DiagonalUnitary::new(&alpha, &blocks).unwrap();
        let m = gaussian(&mut rng(3), 6, 6);
        let direct = u.matrix() * &m * u.matrix().adjoint() - &m;
        assert!((direct - u.commutator(&m)).iter().all(|z| z.norm() < 1e-14));
        let uu = u.matrix() * u.matrix().adjoint();
        assert!((uu - CMatrix::identity(6, 6)).iter().all(|z| z.norm() < 1e-15));
    }

    #[test]
    fn constant_alpha_sandwich_is_zero() {
        let blocks = BlockStructure::uniform(4, 2).unwrap();
        let alpha = TorusElement::from_fn(4, |_| 1.3).unwrap();
        let r = ad_sandwich(&alpha, &blocks, &IndexSet::range(0..4).unwrap(), 8, 0).unwrap();
        assert_eq!(r.delta, 0.0);
        assert!(r.lower_witness < 1e-15 && r.sampled_max < 1e-14);
    }

    #[test]
    fn antipodal_pair_sandwich() {
        let blocks = BlockStructure::uniform(2, 1).unwrap();
        let alpha = TorusElement::new(vec![0.0, PI], Default::default()).unwrap();
        let r = ad_sandwich(&alpha, &blocks, &IndexSet::range(0..2).unwrap(), 16, 1).unwrap();
        assert_eq!(r.delta, 2.0);
        assert_eq!(r.lower_witness, 2.0);
        assert!(r.holds());
    }

    #[test]
    fn kernel_constant_alpha() {
        let blocks = BlockStructure::uniform(20, 1).unwrap();
        let x = SparseSet::new((1..20).step_by(2).collect()).unwrap();
        let r = kernel_test(&TorusElement::one(20), &x, &blocks, 0.1, 2, 0).unwrap();
        assert!(r.trivial_on_cx && r.witness.is_none() && r.certified());
    }

    #[test]
    fn kernel_ignores_early_jump() {
        let blocks = BlockStructure::uniform(30, 1).unwrap();
        let x = SparseSet::new((1..30).collect()).unwrap();
        let alpha = TorusElement::from_fn(30, |i| if i >= 2 { PI } else { 0.0 }).unwrap();
        let early = kernel_test(&alpha, &x, &blocks, 0.1, 5, 0).unwrap();
        assert!(early.trivial_on_cx && early.certified());
        let strict = kernel_test(&alpha, &x, &blocks, 0.1, 0, 0).unwrap();
        assert!(!strict.trivial_on_cx && strict.certified());
    }

    #[test]
    fn kernel_finds_alternating_witness() {
        let blocks = BlockStructure::uniform(24, 2).unwrap();
        let x = SparseSet::new((1..24).collect()).unwrap();
        let alpha = TorusElement::from_fn(24, |i| i as f64 * PI / 2.0).unwrap();
        let r = kernel_test(&alpha, &x, &blocks, 0.5, 3, 0).unwrap();
        let w = r.witness.as_ref().unwrap();
        assert!(r.certified());
        assert!((op_norm(&w.element) - 1.0).abs() < 1e-12);
        assert!(w.double_blocks.iter().all(|j| j % 2 == w.parity));
    }
}
