//! Finite-depth coherent binary trees of torus sequences.
//!
//! A [`Chain`] of nested sparse sets `X_0 ⊃ X_1 ⊃ …` carries, for every
//! successor step, a list of schedule blocks: intervals of `X_{ξ+1}` that
//! swallow at least `m` intervals of `X_ξ`. The successor witness rotates by
//! `π/m` at each swallowed boundary, so it is small against `X_ξ` and reaches
//! the antipode against `X_{ξ+1}`. Products of witnesses along binary labels
//! give the tree; the limit stage sparsifies a path and glues it into a
//! single sequence.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval_partitions::{fx_profile, FxVerdict, SparseSet};
use crate::torus_metrics::{chord, delta_pair, delta_range, TailConvention, TorusElement};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_J0: usize = 10;
/// Slack on the antipodal value 2 in divergence certificates.
pub const DIVERGENCE_SLACK: f64 = 1e-9;
const JUMP_SLACK: f64 = 1e-12;

const LEAD_INTERVALS: usize = 2;
const TRAIL_INTERVALS: usize = 2;
const MAX_FILLER: usize = 3;
const MAX_GAP: usize = 2;

/// Largest jump `|e^{iπ/m} − 1|` produced inside a block of size `m`.
pub fn jump_bound(m: usize) -> f64 {
    2.0 * (PI / (2.0 * m as f64)).sin()
}

/// A schedule for which every jump stays within `epsilon`: the smallest
/// admissible `m` and its first `blocks − 1` multiples.
pub fn schedule_for_tolerance(epsilon: f64, blocks: usize) -> Vec<usize> {
    let mut m_min = 1;
    while jump_bound(m_min) > epsilon {
        m_min += 1;
    }
    (1..=blocks).map(|k| m_min * k).collect()
}

/// One schedule block of a successor step: `I(X_{ξ+1}, n)` contains at least
/// `m` intervals of `X_ξ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub m: usize,
    pub n: usize,
}

#[derive(Deserialize)]
struct ChainWire {
    levels: Vec<SparseSet>,
    growth: Vec<Vec<ScheduleBlock>>,
    horizon: usize,
    seed: u64,
}

/// A strictly decreasing chain of nested sparse sets with its growth record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChainWire")]
pub struct Chain {
    levels: Vec<SparseSet>,
    growth: Vec<Vec<ScheduleBlock>>,
    horizon: usize,
    seed: u64,
}

impl TryFrom<ChainWire> for Chain {
    type Error = Error;
    fn try_from(w: ChainWire) -> Result<Self> {
        Chain::from_parts(w.levels, w.growth, w.horizon, w.seed)
    }
}

impl Chain {
    pub fn from_parts(
        levels: Vec<SparseSet>,
        growth: Vec<Vec<ScheduleBlock>>,
        horizon: usize,
        seed: u64,
    ) -> Result<Self> {
        let chain = Chain {
            levels,
            growth,
            horizon,
            seed,
        };
        chain.check()?;
        Ok(chain)
    }

    pub fn levels(&self) -> &[SparseSet] {
        &self.levels
    }

    pub fn level(&self, xi: usize) -> &SparseSet {
        &self.levels[xi]
    }

    pub fn growth(&self) -> &[Vec<ScheduleBlock>] {
        &self.growth
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `I(X_{ξ+1}, n)` for a block of step `ξ`.
    pub fn block_range(&self, xi: usize, block: &ScheduleBlock) -> Result<Range<usize>> {
        self.levels[xi + 1].interval(block.n)
    }

    /// Verifies nesting, strict decrease, horizon bounds and block sizes.
    pub fn check(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::PreconditionViolation("a chain needs at least one level".into()));
        }
        if self.growth.len() + 1 != self.levels.len() {
            return Err(Error::PreconditionViolation(format!(
                "{} levels need {} growth records, found {}",
                self.levels.len(),
                self.levels.len() - 1,
                self.growth.len()
            )));
        }
        for (xi, x) in self.levels.iter().enumerate() {
            if x.last() >= self.horizon {
                return Err(Error::HorizonTooSmall {
                    have: self.horizon,
                    need: x.last() + 1,
                });
            }
            if xi == 0 {
                continue;
            }
            let prev = &self.levels[xi - 1];
            if let Some(e) = x.elements().iter().find(|&&e| !prev.contains(e)) {
                return Err(Error::PreconditionViolation(format!(
                    "level {xi} contains {e}, which is missing from level {}",
                    xi - 1
                )));
            }
            if x.elements().len() >= prev.elements().len() {
                return Err(Error::PreconditionViolation(format!(
                    "level {xi} does not thin level {}",
                    xi - 1
                )));
            }
        }
        for (xi, blocks) in self.growth.iter().enumerate() {
            for b in blocks {
                let range = self.block_range(xi, b)?;
                let found = count_intervals(&self.levels[xi], &range)?;
                if found < b.m {
                    return Err(Error::InsufficientBlock { m: b.m, found });
                }
            }
        }
        Ok(())
    }
}

/// Number of `X`-intervals making up `range`, whose ends must lie in `{0} ∪ X`.
fn count_intervals(x: &SparseSet, range: &Range<usize>) -> Result<usize> {
    let e = x.enumeration();
    let find = |v: usize| {
        e.binary_search(&v)
            .map_err(|_| Error::PreconditionViolation(format!("block end {v} is not a boundary of the finer level")))
    };
    Ok(find(range.end)? - find(range.start)?)
}

/// Smallest horizon [`generate_chain`] accepts for this depth and schedule.
pub fn minimal_horizon(depth: usize, schedule: &[usize]) -> usize {
    let per_step: usize = schedule.iter().map(|m| m + 1 + MAX_FILLER).sum();
    (LEAD_INTERVALS + depth * per_step + TRAIL_INTERVALS) * MAX_GAP + 1
}

enum Segment {
    Filler(usize),
    Block { step: usize, m: usize },
}

/// Random chain of the given depth. Every successor step receives one block
/// per schedule entry; blocks are interleaved by schedule position so later
/// entries sit further right at every level.
pub fn generate_chain(depth: usize, horizon: usize, schedule: &[usize], seed: u64) -> Result<Chain> {
    if depth > 0 && schedule.is_empty() {
        return Err(Error::PreconditionViolation(
            "a nonempty schedule is needed to thin the chain".into(),
        ));
    }
    if schedule.contains(&0) {
        return Err(Error::PreconditionViolation("schedule entries must be positive".into()));
    }
    let need = minimal_horizon(depth, schedule);
    if horizon < need {
        return Err(Error::HorizonTooSmall { have: horizon, need });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut plan = vec![Segment::Filler(LEAD_INTERVALS)];
    if depth > 0 {
        for &m in schedule {
            for step in 0..depth {
                plan.push(Segment::Filler(rng.random_range(1..=MAX_FILLER)));
                plan.push(Segment::Block { step, m });
            }
        }
    }
    plan.push(Segment::Filler(TRAIL_INTERVALS));

    let mut elements = Vec::new();
    let mut pos = 0usize;
    let mut push_intervals = |count: usize, elements: &mut Vec<usize>, rng: &mut ChaCha8Rng| {
        for _ in 0..count {
            pos += rng.random_range(1..=MAX_GAP);
            elements.push(pos);
        }
    };
    // (step, m, start position, removed boundaries)
    let mut placed: Vec<(usize, usize, usize, Vec<usize>)> = Vec::new();
    for seg in &plan {
        match *seg {
            Segment::Filler(c) => push_intervals(c, &mut elements, &mut rng),
            Segment::Block { step, m } => {
                let start = elements.last().copied().unwrap_or(0);
                push_intervals(m + 1, &mut elements, &mut rng);
                let interior = elements[elements.len() - m - 1..elements.len() - 1].to_vec();
                placed.push((step, m, start, interior));
            }
        }
    }
    let mut last = *elements.last().unwrap();
    loop {
        let next = last + rng.random_range(1..=MAX_GAP);
        if next >= horizon {
            break;
        }
        elements.push(next);
        last = next;
    }

    let mut levels = vec![SparseSet::new(elements)?];
    let mut growth = Vec::with_capacity(depth);
    for xi in 0..depth {
        let removed: BTreeSet<usize> = placed
            .iter()
            .filter(|p| p.0 == xi)
            .flat_map(|p| p.3.iter().copied())
            .collect();
        let next: Vec<usize> = levels[xi]
            .elements()
            .iter()
            .copied()
            .filter(|e| !removed.contains(e))
            .collect();
        let next = SparseSet::new(next)?;
        let blocks = placed
            .iter()
            .filter(|p| p.0 == xi)
            .map(|p| ScheduleBlock {
                m: p.1,
                n: next
                    .interval_index_of(p.2)
                    .expect("block start lies below the truncation"),
            })
            .collect();
        levels.push(next);
        growth.push(blocks);
    }
    Chain::from_parts(levels, growth, horizon, seed)
}

/// Successor witness for one chain step: constant on every `X_lo` interval,
/// rotating by `π/m` at each interior `X_lo` boundary of a schedule block
/// `I(X_hi, n)`, and constant elsewhere.
pub fn successor_witness(
    x_lo: &SparseSet,
    x_hi: &SparseSet,
    blocks: &[ScheduleBlock],
    horizon: usize,
    z_variant: bool,
) -> Result<TorusElement> {
    if horizon == 0 || x_lo.last() >= horizon || x_hi.last() >= horizon {
        return Err(Error::HorizonTooSmall {
            have: horizon,
            need: x_lo.last().max(x_hi.last()) + 1,
        });
    }
    let lo = x_lo.enumeration();
    let mut increments = vec![0.0f64; horizon];
    let mut ordered: Vec<(usize, usize)> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let range = x_hi.interval(b.n)?;
        let found = count_intervals(x_lo, &range)?;
        if found < b.m {
            return Err(Error::InsufficientBlock { m: b.m, found });
        }
        let first = lo.binary_search(&range.start).unwrap();
        for &boundary in &lo[first + 1..first + found] {
            increments[boundary] += PI / b.m as f64;
        }
        ordered.push((range.start, b.m));
    }
    if z_variant {
        ordered.sort_unstable();
        if ordered.windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::PreconditionViolation(
                "the restricted variant needs block sizes nondecreasing along the line".into(),
            ));
        }
    }
    let mut acc = 0.0;
    let phases = increments
        .into_iter()
        .map(|inc| {
            acc += inc;
            acc
        })
        .collect();
    TorusElement::new(phases, TailConvention::EventuallyConstant)
}

/// Evidence that one schedule block separates two sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBlock {
    pub m: usize,
    pub n: usize,
    pub start: usize,
    pub end: usize,
    pub delta: f64,
}

/// Bound on consecutive jumps from index `i0` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpCheckpoint {
    pub i0: usize,
    pub bound: f64,
    pub observed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Certificate {
    /// Profile of `α_s·α_t^{-1}` against `X_{|s|}` for `s ⊏ t`.
    Coherence {
        ancestor: String,
        descendant: String,
        level: usize,
        verdict: FxVerdict,
        max_entry: f64,
        entries: usize,
    },
    /// Blocks where `Δ(α_{s0}·α_{s1}^{-1}, 1)` reaches 2.
    Divergence {
        left: String,
        right: String,
        level: usize,
        blocks: Vec<DivergenceBlock>,
    },
    /// Consecutive-jump bounds of a node in the restricted variant.
    JumpBound {
        node: String,
        checkpoints: Vec<JumpCheckpoint>,
    },
}

impl Certificate {
    pub fn passes(&self) -> bool {
        match self {
            Certificate::Coherence { verdict, .. } => verdict.holds,
            Certificate::Divergence { blocks, .. } => {
                !blocks.is_empty() && blocks.iter().all(|b| b.delta >= 2.0 - DIVERGENCE_SLACK)
            }
            Certificate::JumpBound { checkpoints, .. } => {
                checkpoints.iter().all(|c| c.observed <= c.bound + JUMP_SLACK)
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Certificate::Coherence {
                ancestor, descendant, ..
            } => {
                format!("coherence({}, {})", show(ancestor), show(descendant))
            }
            Certificate::Divergence { left, right, .. } => {
                format!("divergence({}, {})", show(left), show(right))
            }
            Certificate::JumpBound { node, .. } => format!("jumps({})", show(node)),
        }
    }
}

fn show(label: &str) -> &str {
    if label.is_empty() {
        "root"
    } else {
        label
    }
}

/// Divergence blocks of `ratio` over the step-`xi` schedule. Blocks with fewer
/// than `m` realized jumps are skipped.
pub fn divergence_blocks(chain: &Chain, xi: usize, ratio: &TorusElement) -> Result<Vec<DivergenceBlock>> {
    let one = TorusElement::one(1);
    let mut out = Vec::new();
    for b in &chain.growth[xi] {
        let range = chain.block_range(xi, b)?;
        let realized = count_intervals(&chain.levels[xi], &range)? - 1;
        if realized < b.m {
            continue;
        }
        out.push(DivergenceBlock {
            m: b.m,
            n: b.n,
            start: range.start,
            end: range.end,
            delta: delta_range(ratio, &one, range.clone())?,
        });
    }
    Ok(out)
}

/// `max_{i ≥ i0} |α(i+1) − α(i)|` within the horizon.
pub fn max_jump_from(alpha: &TorusElement, i0: usize) -> f64 {
    alpha
        .phases()
        .get(i0..)
        .unwrap_or(&[])
        .windows(2)
        .map(|w| chord(w[0], w[1]))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub label: String,
    pub level: usize,
    pub alpha: TorusElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitOptions {
    pub epsilon: f64,
    pub j0: usize,
    pub z_thinning: bool,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            j0: DEFAULT_J0,
            z_thinning: false,
        }
    }
}

/// Conditions of one complete block `I(X_∞, k)`, `k ≥ 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub k: usize,
    pub start: usize,
    pub end: usize,
    pub threshold: f64,
    /// Largest `Δ_{I(X_n,j)}(α_k, α_n)` over `n ≤ k` and intervals in the block.
    pub max_interval: f64,
    /// Largest `Δ_{{n(X_n,j), n(X_n,j+1)}}(α_k, α_n)` over the same intervals.
    pub max_endpoint: f64,
    /// Largest `|α_k(i) − α_k(i+1)|` over the block, when thinning for jumps.
    pub max_jump: Option<f64>,
}

impl BlockCheck {
    pub fn holds(&self) -> bool {
        self.max_interval < self.threshold
            && self.max_endpoint < self.threshold
            && self.max_jump.is_none_or(|j| j < self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sparsification {
    pub x_inf: SparseSet,
    pub checks: Vec<BlockCheck>,
    pub options: LimitOptions,
}

/// Sorted `(value, end)` pairs answering "largest end among values ≥ t".
struct Violations {
    values: Vec<f64>,
    prefix_max_end: Vec<usize>,
}

impl Violations {
    fn new(mut entries: Vec<(f64, usize)>) -> Self {
        entries.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = 0;
        let prefix_max_end = entries
            .iter()
            .map(|e| {
                best = best.max(e.1);
                best
            })
            .collect();
        Self {
            values: entries.into_iter().map(|e| e.0).collect(),
            prefix_max_end,
        }
    }

    fn max_end_at_least(&self, t: f64) -> usize {
        let count = self.values.partition_point(|&v| v >= t);
        if count == 0 {
            0
        } else {
            self.prefix_max_end[count - 1]
        }
    }
}

fn alpha_index(k: usize, len: usize) -> usize {
    k.min(len - 1)
}

fn check_limit_inputs(alphas: &[TorusElement], xs: &[SparseSet], horizon: usize) -> Result<()> {
    if alphas.is_empty() || alphas.len() != xs.len() {
        return Err(Error::PreconditionViolation(format!(
            "need matching nonempty sequence and level lists, got {} and {}",
            alphas.len(),
            xs.len()
        )));
    }
    for (n, x) in xs.iter().enumerate() {
        if x.last() >= horizon || alphas[n].horizon() < horizon {
            return Err(Error::HorizonTooSmall {
                have: horizon.min(alphas[n].horizon()),
                need: horizon.max(x.last() + 1),
            });
        }
        if n > 0 {
            if let Some(e) = x.elements().iter().find(|&&e| !xs[n - 1].contains(e)) {
                return Err(Error::PreconditionViolation(format!(
                    "level {n} contains {e}, missing from level {}",
                    n - 1
                )));
            }
        }
    }
    Ok(())
}

/// Chooses `X_∞ ⊆ X_last` greedily from the left so that for `n ≤ k` and
/// every `I(X_n, j) ⊂ I(X_∞, k)` both `Δ_{I(X_n,j)}(α_k, α_n)` and the
/// endpoint term stay below `1/k`. Past the end of the list, `α_k` is the
/// last sequence. With `z_thinning`, also `|α_k(i) − α_k(i+1)| < 1/k` on the
/// block. Requires pairwise coherence of the inputs at `(ε, j0)`.
pub fn sparsify_limit(
    alphas: &[TorusElement],
    xs: &[SparseSet],
    horizon: usize,
    options: &LimitOptions,
) -> Result<Sparsification> {
    check_limit_inputs(alphas, xs, horizon)?;
    let len = alphas.len();
    for n in 0..len {
        for k in n + 1..len {
            let verdict =
                fx_profile(&alphas[n].ratio(&alphas[k])?, &xs[n], false)?.verdict(options.epsilon, options.j0);
            if !verdict.holds {
                return Err(Error::PreconditionViolation(format!(
                    "sequences {n} and {k} are not coherent at level {n}: {:?}",
                    verdict.worst
                )));
            }
        }
    }

    // violations[a][n] for n ≤ a
    let violations: Vec<Vec<Violations>> = (0..len)
        .into_par_iter()
        .map(|a| {
            (0..=a)
                .map(|n| {
                    let e = xs[n].enumeration();
                    let entries = e
                        .windows(2)
                        .map(|w| {
                            let block = delta_range(&alphas[a], &alphas[n], w[0]..w[1])?;
                            let end = delta_pair(&alphas[a], &alphas[n], w[0], w[1])?;
                            Ok((block.max(end), w[1]))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Violations::new(entries))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let jumps: Vec<Option<Violations>> = alphas
        .iter()
        .map(|alpha| {
            options.z_thinning.then(|| {
                Violations::new(
                    alpha.phases()[..horizon]
                        .windows(2)
                        .enumerate()
                        .map(|(i, w)| (chord(w[0], w[1]), i + 1))
                        .collect(),
                )
            })
        })
        .collect();

    let points = xs[len - 1].elements();
    let mut starts = Vec::new();
    let mut cursor = 0usize;
    let mut prev = 0usize;
    let mut k = 1usize;
    let mut shortfall = 0usize;
    while cursor < points.len() {
        let a = alpha_index(k, len);
        let t = 1.0 / k as f64;
        let mut need = violations[a].iter().map(|v| v.max_end_at_least(t)).max().unwrap_or(0);
        if let Some(j) = &jumps[a] {
            need = need.max(j.max_end_at_least(t));
        }
        let need = need.max(prev + 1);
        cursor += points[cursor..].partition_point(|&p| p < need);
        if cursor == points.len() {
            shortfall = need;
            break;
        }
        starts.push(points[cursor]);
        prev = points[cursor];
        cursor += 1;
        k += 1;
    }
    if starts.len() < 2 {
        return Err(Error::HorizonTooSmall {
            have: horizon,
            need: horizon.max(shortfall + 1) + 1,
        });
    }
    let x_inf = SparseSet::new(starts)?;
    let checks = check_sparsification(alphas, xs, &x_inf, options.z_thinning)?;
    if let Some(bad) = checks.iter().find(|c| !c.holds()) {
        return Err(Error::CertificateFailure(format!(
            "sparsification block {} fails: {bad:?}",
            bad.k
        )));
    }
    Ok(Sparsification {
        x_inf,
        checks,
        options: *options,
    })
}

/// Recomputes the sparsification conditions on every complete block of `X_∞`
/// by a direct scan.
pub fn check_sparsification(
    alphas: &[TorusElement],
    xs: &[SparseSet],
    x_inf: &SparseSet,
    z_thinning: bool,
) -> Result<Vec<BlockCheck>> {
    let len = alphas.len();
    let e = x_inf.enumeration();
    (1..e.len() - 1)
        .map(|k| {
            let (start, end) = (e[k], e[k + 1]);
            let a = alpha_index(k, len);
            let mut max_interval: f64 = 0.0;
            let mut max_endpoint: f64 = 0.0;
            for n in 0..=a {
                let en = xs[n].enumeration();
                let first = en.partition_point(|&p| p < start);
                for w in en[first..].windows(2).take_while(|w| w[1] <= end) {
                    max_interval = max_interval.max(delta_range(&alphas[a], &alphas[n], w[0]..w[1])?);
                    max_endpoint = max_endpoint.max(delta_pair(&alphas[a], &alphas[n], w[0], w[1])?);
                }
            }
            let max_jump = z_thinning.then(|| {
                alphas[a].phases()[start..=end]
                    .windows(2)
                    .map(|w| chord(w[0], w[1]))
                    .fold(0.0, f64::max)
            });
            Ok(BlockCheck {
                k,
                start,
                end,
                threshold: 1.0 / k as f64,
                max_interval,
                max_endpoint,
                max_jump,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedLimit {
    pub alpha: TorusElement,
    /// Phases of the constants `γ_n`, one per block of `X_∞` including the
    /// trailing partial block; `γ_0` has phase 0.
    pub gammas: Vec<f64>,
}

/// Glues `α_s = γ_n·α_n` on `I(X_∞, n)`, fixing each `γ_n` by agreement at
/// the overlap point `n(X_∞, n)` with the previous block's extension.
pub fn merge_limit(alphas: &[TorusElement], x_inf: &SparseSet) -> Result<MergedLimit> {
    if alphas.is_empty() {
        return Err(Error::PreconditionViolation("no sequences to merge".into()));
    }
    let horizon = alphas[0].horizon();
    if x_inf.last() >= horizon {
        return Err(Error::HorizonTooSmall {
            have: horizon,
            need: x_inf.last() + 1,
        });
    }
    let len = alphas.len();
    let e = x_inf.enumeration();
    let mut gammas = vec![0.0];
    for n in 1..e.len() {
        let b = e[n];
        let prev = alphas[alpha_index(n - 1, len)].phase(b)?;
        let cur = alphas[alpha_index(n, len)].phase(b)?;
        gammas.push(gammas[n - 1] + prev - cur);
    }
    let phases = glue(alphas, e, &gammas, horizon)?;
    Ok(MergedLimit {
        alpha: TorusElement::new(phases, TailConvention::EventuallyConstant)?,
        gammas: gammas.into_iter().map(crate::torus_metrics::wrap_phase).collect(),
    })
}

fn glue(alphas: &[TorusElement], e: &[usize], gammas: &[f64], horizon: usize) -> Result<Vec<f64>> {
    let len = alphas.len();
    let mut phases = Vec::with_capacity(horizon);
    for (n, &g) in gammas.iter().enumerate() {
        let end = e.get(n + 1).copied().unwrap_or(horizon);
        let alpha = &alphas[alpha_index(n, len)];
        for i in e[n]..end {
            phases.push(g + alpha.phase(i)?);
        }
    }
    Ok(phases)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStage {
    pub leaf: String,
    pub sparsification: Sparsification,
    pub gammas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub depth: usize,
    pub z_variant: bool,
    pub epsilon: f64,
    pub j0: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTree {
    pub params: TreeParams,
    pub chain: Chain,
    /// Nodes in breadth-first order: the node with label `s` sits at
    /// `2^{|s|} − 1 + value(s)`.
    pub nodes: Vec<TreeNode>,
    pub certificates: Vec<Certificate>,
    pub limits: Vec<LimitStage>,
}

impl CoherenceTree {
    pub fn node(&self, label: &str) -> Option<&TreeNode> {
        let idx = node_index(label)?;
        self.nodes.get(idx)
    }

    pub fn leaves(&self) -> &[TreeNode] {
        let d = self.params.depth;
        &self.nodes[(1 << d) - 1..]
    }

    /// Labels along the path from the root to `leaf`, root first.
    pub fn path(&self, leaf: &str) -> Vec<&TreeNode> {
        (0..=leaf.len()).filter_map(|l| self.node(&leaf[..l])).collect()
    }
}

fn node_index(label: &str) -> Option<usize> {
    let v = if label.is_empty() {
        0
    } else {
        usize::from_str_radix(label, 2).ok()?
    };
    Some((1usize << label.len()) - 1 + v)
}

fn labels(depth: usize) -> Vec<String> {
    (0..=depth)
        .flat_map(|l| (0..1usize << l).map(move |v| if l == 0 { String::new() } else { format!("{v:0l$b}") }))
        .collect()
}

fn coherence_certificate(chain: &Chain, s: &TreeNode, t: &TreeNode, epsilon: f64, j0: usize) -> Result<Certificate> {
    let profile = fx_profile(&s.alpha.ratio(&t.alpha)?, chain.level(s.level), false)?;
    Ok(Certificate::Coherence {
        ancestor: s.label.clone(),
        descendant: t.label.clone(),
        level: s.level,
        verdict: profile.verdict(epsilon, j0),
        max_entry: profile.joint.iter().copied().fold(0.0, f64::max),
        entries: profile.joint.len(),
    })
}

/// Start of the first block of each block size among steps below `depth`.
fn jump_checkpoints(chain: &Chain, depth: usize) -> Result<BTreeMap<usize, usize>> {
    let mut first: BTreeMap<usize, usize> = BTreeMap::new();
    for xi in 0..depth {
        for b in &chain.growth[xi] {
            let start = chain.block_range(xi, b)?.start;
            first.entry(b.m).and_modify(|s| *s = (*s).min(start)).or_insert(start);
        }
    }
    Ok(first)
}

/// Builds the coherent tree of the given depth over `chain`, certifies every
/// ancestor pair, every sibling pair and, for the restricted variant, every
/// node's jump profile, then runs the limit stage along each leaf path.
pub fn build_tree(chain: &Chain, depth: usize, z_variant: bool, epsilon: f64, j0: usize) -> Result<CoherenceTree> {
    if depth > chain.depth() {
        return Err(Error::PreconditionViolation(format!(
            "tree depth {depth} exceeds chain depth {}",
            chain.depth()
        )));
    }
    let horizon = chain.horizon();
    let witnesses = (0..depth)
        .map(|xi| {
            successor_witness(
                chain.level(xi),
                chain.level(xi + 1),
                &chain.growth[xi],
                horizon,
                z_variant,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut nodes: Vec<TreeNode> = Vec::with_capacity((2usize << depth) - 1);
    for label in labels(depth) {
        let alpha = if label.is_empty() {
            TorusElement::one(horizon)
        } else {
            let (parent, bit) = label.split_at(label.len() - 1);
            let p = &nodes[node_index(parent).unwrap()].alpha;
            if bit == "1" {
                p.mul(&witnesses[parent.len()])?
            } else {
                p.clone()
            }
        };
        nodes.push(TreeNode {
            level: label.len(),
            label,
            alpha,
        });
    }

    let mut pairs = Vec::new();
    for (a, s) in nodes.iter().enumerate() {
        for (b, t) in nodes.iter().enumerate() {
            if t.label.len() > s.label.len() && t.label.starts_with(&s.label) {
                pairs.push((a, b));
            }
        }
    }
    let mut certificates = pairs
        .par_iter()
        .map(|&(a, b)| coherence_certificate(chain, &nodes[a], &nodes[b], epsilon, j0))
        .collect::<Result<Vec<_>>>()?;

    for s in nodes.iter().filter(|n| n.level < depth) {
        let left = &nodes[node_index(&format!("{}0", s.label)).unwrap()];
        let right = &nodes[node_index(&format!("{}1", s.label)).unwrap()];
        certificates.push(Certificate::Divergence {
            left: left.label.clone(),
            right: right.label.clone(),
            level: s.level,
            blocks: divergence_blocks(chain, s.level, &left.alpha.ratio(&right.alpha)?)?,
        });
    }

    if z_variant {
        let checkpoints = jump_checkpoints(chain, depth)?;
        for node in &nodes {
            certificates.push(Certificate::JumpBound {
                node: node.label.clone(),
                checkpoints: checkpoints
                    .iter()
                    .map(|(&m, &i0)| JumpCheckpoint {
                        i0,
                        bound: jump_bound(m),
                        observed: max_jump_from(&node.alpha, i0),
                    })
                    .collect(),
            });
        }
    }

    if let Some(bad) = certificates.iter().find(|c| !c.passes()) {
        return Err(Error::CertificateFailure(format!("{} failed: {bad:?}", bad.describe())));
    }

    let options = LimitOptions {
        epsilon,
        j0,
        z_thinning: z_variant,
    };
    let xs = &chain.levels()[..=depth];
    let leaf_labels: Vec<String> = nodes[(1 << depth) - 1..].iter().map(|n| n.label.clone()).collect();
    let limits = leaf_labels
        .par_iter()
        .map(|leaf| {
            let alphas: Vec<TorusElement> = (0..=depth)
                .map(|l| nodes[node_index(&leaf[..l]).unwrap()].alpha.clone())
                .collect();
            let sparsification = sparsify_limit(&alphas, xs, horizon, &options)?;
            let merged = merge_limit(&alphas, &sparsification.x_inf)?;
            Ok(LimitStage {
                leaf: leaf.clone(),
                sparsification,
                gammas: merged.gammas,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(CoherenceTree {
        params: TreeParams {
            depth,
            z_variant,
            epsilon,
            j0,
        },
        chain: chain.clone(),
        nodes,
        certificates,
        limits,
    })
}

/// Outcome of re-deriving a tree document from its raw phases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeVerification {
    pub certificates_checked: usize,
    pub limit_blocks_checked: usize,
    pub failures: Vec<String>,
}

impl TreeVerification {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Recomputes every certificate of a tree document from the stored phases and
/// compares with the recorded values.
pub fn verify_tree(tree: &CoherenceTree) -> Result<TreeVerification> {
    let TreeParams {
        depth,
        z_variant,
        epsilon,
        j0,
    } = tree.params;
    let chain = &tree.chain;
    chain.check()?;
    let mut failures = Vec::new();
    let expected_nodes = (2usize << depth) - 1;
    if tree.nodes.len() != expected_nodes {
        failures.push(format!("expected {expected_nodes} nodes, found {}", tree.nodes.len()));
        return Ok(TreeVerification {
            certificates_checked: 0,
            limit_blocks_checked: 0,
            failures,
        });
    }
    for (label, node) in labels(depth).iter().zip(&tree.nodes) {
        if &node.label != label || node.level != label.len() {
            failures.push(format!("node {} is out of place", show(&node.label)));
        }
    }
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
    for cert in &tree.certificates {
        let ok = match cert {
            Certificate::Coherence {
                ancestor,
                descendant,
                verdict,
                max_entry,
                ..
            } => match (tree.node(ancestor), tree.node(descendant)) {
                (Some(s), Some(t)) if descendant.starts_with(ancestor.as_str()) => {
                    match coherence_certificate(chain, s, t, epsilon, j0)? {
                        Certificate::Coherence {
                            verdict: v,
                            max_entry: m,
                            ..
                        } => v.holds && verdict.holds && close(m, *max_entry),
                        _ => false,
                    }
                }
                _ => false,
            },
            Certificate::Divergence {
                left,
                right,
                level,
                blocks,
            } => match (tree.node(left), tree.node(right)) {
                (Some(l), Some(r)) => {
                    let fresh = divergence_blocks(chain, *level, &l.alpha.ratio(&r.alpha)?)?;
                    fresh.len() == blocks.len()
                        && fresh.iter().zip(blocks).all(|(f, b)| close(f.delta, b.delta))
                        && cert.passes()
                }
                _ => false,
            },
            Certificate::JumpBound { node, checkpoints } => match tree.node(node) {
                Some(n) => checkpoints.iter().all(|c| {
                    let observed = max_jump_from(&n.alpha, c.i0);
                    close(observed, c.observed) && observed <= c.bound + JUMP_SLACK
                }),
                None => false,
            },
        };
        if !ok {
            failures.push(cert.describe());
        }
    }
    let coherence = tree
        .certificates
        .iter()
        .filter(|c| matches!(c, Certificate::Coherence { .. }))
        .count();
    let pairs: usize = (0..depth).map(|l| (1usize << l) * ((2usize << (depth - l)) - 2)).sum();
    if coherence != pairs {
        failures.push(format!("expected {pairs} coherence certificates, found {coherence}"));
    }
    let divergence = tree
        .certificates
        .iter()
        .filter(|c| matches!(c, Certificate::Divergence { .. }))
        .count();
    if divergence != (1usize << depth) - 1 {
        failures.push(format!(
            "expected {} divergence certificates, found {divergence}",
            (1usize << depth) - 1
        ));
    }
    if z_variant {
        let jumps = tree
            .certificates
            .iter()
            .filter(|c| matches!(c, Certificate::JumpBound { .. }))
            .count();
        if jumps != expected_nodes {
            failures.push(format!("expected {expected_nodes} jump certificates, found {jumps}"));
        }
    }

    let mut limit_blocks_checked = 0;
    for stage in &tree.limits {
        let path = tree.path(&stage.leaf);
        if path.len() != depth + 1 {
            failures.push(format!("limit stage for unknown leaf {}", stage.leaf));
            continue;
        }
        let alphas: Vec<TorusElement> = path.iter().map(|n| n.alpha.clone()).collect();
        let xs = &chain.levels()[..=depth];
        let s = &stage.sparsification;
        let checks = check_sparsification(&alphas, xs, &s.x_inf, z_variant)?;
        limit_blocks_checked += checks.len();
        if checks.iter().any(|c| !c.holds()) || checks != s.checks {
            failures.push(format!("sparsification for leaf {}", stage.leaf));
        }
        let merged = merge_limit(&alphas, &s.x_inf)?;
        let drift = merged
            .gammas
            .iter()
            .zip(&stage.gammas)
            .map(|(a, b)| chord(*a, *b))
            .fold(0.0, f64::max);
        if merged.gammas.len() != stage.gammas.len() || drift > 1e-12 {
            failures.push(format!("merge constants for leaf {}", stage.leaf));
        }
    }
    if tree.limits.len() != 1 << depth {
        failures.push(format!(
            "expected {} limit stages, found {}",
            1 << depth,
            tree.limits.len()
        ));
    }
    Ok(TreeVerification {
        certificates_checked: tree.certificates.len(),
        limit_blocks_checked,
        failures,
    })
}
