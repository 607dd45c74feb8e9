//! Positive approximate units `r_i ≥ 0` whose partial sums satisfy
//! `p_{n+1} p_n = p_n`, their witness elements, quasi-unitaries, the
//! conjugation estimate for non-projection units, hypothesis verifiers and
//! the tensor-product construction.
//!
//! Units act on a finite-dimensional Hilbert space. The ambient algebra is
//! either the full matrix algebra or a direct sum of matrix blocks.

use std::ops::Range;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{op_norm, unit_gaussian, CMatrix};
use crate::operator_lab::{BlockStructure, SANDWICH_SLACK};
use crate::torus_metrics::{delta_over, IndexSet, TorusElement};

pub type CVector = DVector<Complex64>;

/// Tolerance for the algebraic identities of matrix-backed units.
pub const UNIT_TOLERANCE: f64 = 1e-12;
const MAX_POWER: usize = 1 << 20;

/// Piecewise-linear tents on a dyadic grid over `[0, count]`:
/// `p_n(x) = clamp(n − x, 0, 1)` and `r_i = p_{i+1} − p_i`, a tent centred at
/// `i` with support `[i − 1, i + 1]` and peak 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TentModel {
    count: usize,
    grid_step: f64,
    grid: Vec<f64>,
    r: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TentWire {
    count: usize,
    grid_step: f64,
    length: f64,
    points: usize,
    /// `[left, peak, right]` of each tent.
    breakpoints: Vec<[f64; 3]>,
}

impl Serialize for TentModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TentWire {
            count: self.count,
            grid_step: self.grid_step,
            length: self.count as f64,
            points: self.grid.len(),
            breakpoints: (0..self.count)
                .map(|i| [i as f64 - 1.0, i as f64, i as f64 + 1.0])
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TentModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = TentWire::deserialize(d)?;
        let model = build_tent_unit(w.count, w.grid_step).map_err(serde::de::Error::custom)?;
        if model.grid_step != w.grid_step || model.grid.len() != w.points {
            return Err(serde::de::Error::custom("grid does not match the tent count and step"));
        }
        Ok(model)
    }
}

impl TentModel {
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn grid_step(&self) -> f64 {
        self.grid_step
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// Samples of `r_i` on the grid.
    pub fn tent(&self, i: usize) -> &[f64] {
        &self.r[i]
    }

    /// Samples of `p_n` on the grid.
    pub fn partial(&self, n: usize) -> Vec<f64> {
        self.grid.iter().map(|&x| (n as f64 - x).clamp(0.0, 1.0)).collect()
    }
}

/// Builds `count` tents. The step is rounded down to a power of two no larger
/// than 1/2 so every grid point and every tent value is exact in binary.
pub fn build_tent_unit(count: usize, grid_step: f64) -> Result<TentModel> {
    if count < 2 {
        return Err(Error::InvalidInput("a tent unit needs at least two tents".into()));
    }
    if !grid_step.is_finite() || grid_step <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "grid step must be positive, got {grid_step}"
        )));
    }
    let step = 2f64.powi(grid_step.min(0.5).log2().floor() as i32);
    let per_unit = (1.0 / step).round() as usize;
    let points = count * per_unit + 1;
    let grid: Vec<f64> = (0..points).map(|k| k as f64 * step).collect();
    let p = |n: usize| -> Vec<f64> { grid.iter().map(|&x| (n as f64 - x).clamp(0.0, 1.0)).collect() };
    let r = (0..count)
        .map(|i| {
            let (hi, lo) = (p(i + 1), p(i));
            hi.iter().zip(&lo).map(|(a, b)| a - b).collect()
        })
        .collect();
    Ok(TentModel {
        count,
        grid_step: step,
        grid,
        r,
    })
}

/// The algebra the unit lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Ambient {
    Full,
    /// Block-diagonal algebra `⊕ M_{d_s}` over the given index ranges.
    DirectSum(Vec<Range<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
enum Storage {
    Diagonal(Vec<Vec<f64>>),
    Dense(Vec<CMatrix>),
}

/// A finite sequence `r_0, …, r_{N−1}` of positive contractions.
#[derive(Debug, Clone, PartialEq)]
pub struct PositiveUnit {
    storage: Storage,
    ambient: Ambient,
    dim: usize,
}

/// Measured defects of the unit identities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitDefects {
    /// `max_n ‖p_{n+1} p_n − p_n‖`.
    pub absorption: f64,
    /// `max_{|i−j|≥2} ‖r_i r_j‖`.
    pub far_products: f64,
    /// Smallest eigenvalue over all `r_i` and `p_n`.
    pub min_eigenvalue: f64,
    /// Largest eigenvalue over all `p_n`.
    pub max_partial: f64,
}

impl UnitDefects {
    pub fn within(&self, tol: f64) -> bool {
        self.absorption <= tol
            && self.far_products <= tol
            && self.min_eigenvalue >= -tol
            && self.max_partial <= 1.0 + tol
    }
}

impl PositiveUnit {
    pub fn from_diagonals(r: Vec<Vec<f64>>) -> Result<Self> {
        let dim = r.first().map(Vec::len).unwrap_or(0);
        if r.is_empty() || dim == 0 || r.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidInput("diagonal unit needs equal nonempty samples".into()));
        }
        Ok(Self {
            storage: Storage::Diagonal(r),
            ambient: Ambient::Full,
            dim,
        })
    }

    pub fn from_dense(r: Vec<CMatrix>) -> Result<Self> {
        let dim = r.first().map(|m| m.nrows()).unwrap_or(0);
        if r.is_empty() || dim == 0 || r.iter().any(|m| m.nrows() != dim || m.ncols() != dim) {
            return Err(Error::InvalidInput(
                "dense unit needs equal nonempty square matrices".into(),
            ));
        }
        Ok(Self {
            storage: Storage::Dense(r),
            ambient: Ambient::Full,
            dim,
        })
    }

    /// Projections onto the blocks of `blocks`, in the full matrix algebra.
    pub fn from_blocks(blocks: &BlockStructure) -> Self {
        let dim = blocks.dim();
        let r = (0..blocks.count())
            .map(|i| {
                let mut v = vec![0.0; dim];
                for k in blocks.range(i) {
                    v[k] = 1.0;
                }
                v
            })
            .collect();
        Self {
            storage: Storage::Diagonal(r),
            ambient: Ambient::Full,
            dim,
        }
    }

    /// Tents acting by multiplication on `ℓ²(grid)`, inside the full matrix
    /// algebra on the grid.
    pub fn from_tents(model: &TentModel) -> Self {
        Self {
            storage: Storage::Diagonal(model.r.clone()),
            ambient: Ambient::Full,
            dim: model.grid.len(),
        }
    }

    pub fn with_ambient(mut self, ambient: Ambient) -> Result<Self> {
        if let Ambient::DirectSum(ranges) = &ambient {
            let mut covered = vec![false; self.dim];
            for r in ranges {
                if r.end > self.dim {
                    return Err(Error::InvalidInput(format!(
                        "summand {r:?} exceeds dimension {}",
                        self.dim
                    )));
                }
                for k in r.clone() {
                    if std::mem::replace(&mut covered[k], true) {
                        return Err(Error::InvalidInput(format!("summands overlap at index {k}")));
                    }
                }
            }
        }
        self.ambient = ambient;
        Ok(self)
    }

    pub fn count(&self) -> usize {
        match &self.storage {
            Storage::Diagonal(r) => r.len(),
            Storage::Dense(r) => r.len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient(&self) -> &Ambient {
        &self.ambient
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.storage, Storage::Diagonal(_))
    }

    /// Diagonal samples of `r_i` when the unit is stored diagonally.
    pub fn diagonal(&self, i: usize) -> Option<&[f64]> {
        match &self.storage {
            Storage::Diagonal(r) => Some(&r[i]),
            Storage::Dense(_) => None,
        }
    }

    pub fn matrix(&self, i: usize) -> CMatrix {
        match &self.storage {
            Storage::Diagonal(r) => diag_matrix(&r[i]),
            Storage::Dense(r) => r[i].clone(),
        }
    }

    /// `p_n = r_0 + … + r_{n−1}` as a matrix.
    pub fn partial_sum(&self, n: usize) -> CMatrix {
        let mut p = CMatrix::zeros(self.dim, self.dim);
        for i in 0..n.min(self.count()) {
            p += self.matrix(i);
        }
        p
    }

    fn partial_diagonal(&self, n: usize) -> Option<Vec<f64>> {
        let Storage::Diagonal(r) = &self.storage else {
            return None;
        };
        let mut p = vec![0.0; self.dim];
        for v in r.iter().take(n) {
            for (a, b) in p.iter_mut().zip(v) {
                *a += b;
            }
        }
        Some(p)
    }

    /// Spectrum of `r_i`.
    pub fn spectrum(&self, i: usize) -> Vec<f64> {
        match &self.storage {
            Storage::Diagonal(r) => r[i].clone(),
            Storage::Dense(r) => r[i].symmetric_eigenvalues().iter().copied().collect(),
        }
    }

    /// `r_i^k v`.
    pub fn apply_power(&self, i: usize, k: usize, v: &CVector) -> CVector {
        match &self.storage {
            Storage::Diagonal(r) => CVector::from_fn(self.dim, |idx, _| v[idx] * r[i][idx].powi(k as i32)),
            Storage::Dense(r) => {
                let mut out = v.clone();
                for _ in 0..k {
                    out = &r[i] * out;
                }
                out
            }
        }
    }

    /// Largest eigenvalue of `r_i` with a unit eigenvector.
    pub fn top_vector(&self, i: usize) -> (f64, CVector) {
        match &self.storage {
            Storage::Diagonal(r) => {
                let (idx, &val) =
                    r[i].iter().enumerate().fold(
                        (0, &f64::NEG_INFINITY),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
                let mut v = CVector::zeros(self.dim);
                v[idx] = Complex64::new(1.0, 0.0);
                (val, v)
            }
            Storage::Dense(r) => {
                let eig = r[i].clone().symmetric_eigen();
                let (idx, &val) = eig
                    .eigenvalues
                    .iter()
                    .enumerate()
                    .fold(
                        (0, &f64::NEG_INFINITY),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
                let v = eig.eigenvectors.column(idx).into_owned();
                let n = v.norm();
                (val, v / Complex64::new(n, 0.0))
            }
        }
    }

    fn summands(&self) -> Vec<Range<usize>> {
        match &self.ambient {
            Ambient::Full => std::iter::once(0..self.dim).collect(),
            Ambient::DirectSum(r) => r.clone(),
        }
    }

    /// Measures the unit identities.
    pub fn defects(&self) -> UnitDefects {
        let n = self.count();
        match &self.storage {
            Storage::Diagonal(r) => {
                let partials: Vec<Vec<f64>> = (0..=n).map(|k| self.partial_diagonal(k).unwrap()).collect();
                let absorption = (0..n)
                    .map(|k| {
                        partials[k + 1]
                            .iter()
                            .zip(&partials[k])
                            .map(|(a, b)| (a * b - b).abs())
                            .fold(0.0, f64::max)
                    })
                    .fold(0.0, f64::max);
                let mut far: f64 = 0.0;
                for i in 0..n {
                    for j in i + 2..n {
                        far = far.max(r[i].iter().zip(&r[j]).map(|(a, b)| (a * b).abs()).fold(0.0, f64::max));
                    }
                }
                let min_eigenvalue = r
                    .iter()
                    .chain(&partials)
                    .flatten()
                    .copied()
                    .fold(f64::INFINITY, f64::min);
                let max_partial = partials.iter().flatten().copied().fold(0.0, f64::max);
                UnitDefects {
                    absorption,
                    far_products: far,
                    min_eigenvalue,
                    max_partial,
                }
            }
            Storage::Dense(r) => {
                let partials: Vec<CMatrix> = (0..=n).map(|k| self.partial_sum(k)).collect();
                let absorption = (0..n)
                    .map(|k| op_norm(&(&partials[k + 1] * &partials[k] - &partials[k])))
                    .fold(0.0, f64::max);
                let mut far: f64 = 0.0;
                for i in 0..n {
                    for j in i + 2..n {
                        far = far.max(op_norm(&(&r[i] * &r[j])));
                    }
                }
                let eig = |m: &CMatrix| m.symmetric_eigenvalues().iter().copied().collect::<Vec<_>>();
                let min_eigenvalue = r.iter().chain(&partials).flat_map(eig).fold(f64::INFINITY, f64::min);
                let max_partial = partials.iter().flat_map(eig).fold(0.0, f64::max);
                UnitDefects {
                    absorption,
                    far_products: far,
                    min_eigenvalue,
                    max_partial,
                }
            }
        }
    }
}

fn diag_matrix(v: &[f64]) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(
        v.len(),
        v.iter().map(|&x| Complex64::new(x, 0.0)),
    ))
}

/// `max_{t ∈ [0,1]} t^k (1 − t) = k^k / (k+1)^{k+1}`.
pub fn interval_power_gap(k: usize) -> f64 {
    let k = k as f64;
    (k / (k + 1.0)).powf(k) / (k + 1.0)
}

/// A positive contraction given by its spectrum or as a matrix.
#[derive(Debug, Clone, Copy)]
pub enum Contraction<'a> {
    /// Spectrum equal to all of `[0, 1]`.
    FullInterval,
    Spectrum(&'a [f64]),
    Matrix(&'a CMatrix),
}

/// `‖r^{k+1} − r^k‖ = max over the spectrum of t^k (1 − t)`.
pub fn power_gap(r: Contraction<'_>, k: usize) -> Result<f64> {
    let spectrum: Vec<f64> = match r {
        Contraction::FullInterval => return Ok(interval_power_gap(k)),
        Contraction::Spectrum(s) => s.to_vec(),
        Contraction::Matrix(m) => {
            if m.nrows() != m.ncols() || op_norm(&(m - m.adjoint())) > UNIT_TOLERANCE {
                return Err(Error::PreconditionViolation("matrix is not Hermitian".into()));
            }
            m.symmetric_eigenvalues().iter().copied().collect()
        }
    };
    if let Some(bad) = spectrum
        .iter()
        .find(|&&t| !(-UNIT_TOLERANCE..=1.0 + UNIT_TOLERANCE).contains(&t))
    {
        return Err(Error::PreconditionViolation(format!(
            "spectral value {bad} lies outside [0, 1]"
        )));
    }
    Ok(spectrum
        .iter()
        .map(|&t| {
            let t = t.clamp(0.0, 1.0);
            t.powi(k as i32) * (1.0 - t)
        })
        .fold(0.0, f64::max))
}

/// Norm of the rank-two operator `x1 y1* − x2 y2*`, after orthonormalizing
/// the left factors so no cancellation happens in a Gram product.
pub fn rank_two_norm(x1: &CVector, y1: &CVector, x2: &CVector, y2: &CVector) -> f64 {
    let n1 = x1.norm();
    if n1 == 0.0 {
        return x2.norm() * y2.norm();
    }
    let e1 = x1 / Complex64::new(n1, 0.0);
    let beta = e1.dotc(x2);
    let w = x2 - &e1 * beta;
    let z1 = y1 * Complex64::new(n1, 0.0) - y2 * beta.conj();
    let wn = w.norm();
    let z2 = y2 * Complex64::new(-wn, 0.0);
    let a = z1.norm_squared();
    let d = z2.norm_squared();
    let b = z1.dotc(&z2).norm();
    let top = 0.5 * (a + d) + (0.25 * (a - d) * (a - d) + b * b).sqrt();
    top.max(0.0).sqrt()
}

/// A rank-one element `a = x y*` with `‖a‖ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOne {
    pub x: CVector,
    pub y: CVector,
}

impl RankOne {
    pub fn norm(&self) -> f64 {
        self.x.norm() * self.y.norm()
    }

    pub fn matrix(&self) -> CMatrix {
        &self.x * self.y.adjoint()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessNorms {
    pub i: usize,
    pub j: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    /// `‖r_i^{k+1} a_0 r_j^{k+1}‖` of the seed element.
    pub seed_corner: f64,
    /// `‖a‖`.
    pub norm: f64,
    /// `‖r_i a r_j‖`.
    pub corner: f64,
    /// `‖r_i a r_j − a‖`.
    pub defect: f64,
}

impl WitnessNorms {
    pub fn certified(&self) -> bool {
        (self.norm - 1.0).abs() <= UNIT_TOLERANCE && self.corner >= 1.0 - self.epsilon && self.defect < self.epsilon
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonWitness {
    pub a: RankOne,
    pub norms: WitnessNorms,
}

/// Smallest `k ≤ k_cap` with `‖r^{k+1} − r^k‖ ≤ δ` on both spectra.
fn power_for(unit: &PositiveUnit, i: usize, j: usize, delta: f64, k_cap: usize) -> Result<Option<usize>> {
    let si = unit.spectrum(i);
    let sj = unit.spectrum(j);
    for k in 1..=k_cap {
        let gap = power_gap(Contraction::Spectrum(&si), k)?.max(power_gap(Contraction::Spectrum(&sj), k)?);
        if gap <= delta {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Witness element for the pair `(i, j)` at tolerance `ε`, following the
/// power recipe: `δ = ε/(3+ε)`, `k` with power gap at most `δ`, seed
/// `a_0 = u v*` from top eigenvectors projected into one summand of the
/// ambient algebra, and `a = r_i^k a_0 r_j^k` renormalized.
pub fn epsilon_witness(unit: &PositiveUnit, i: usize, j: usize, epsilon: f64) -> Result<EpsilonWitness> {
    epsilon_witness_capped(unit, i, j, epsilon, MAX_POWER)
}

pub fn epsilon_witness_capped(
    unit: &PositiveUnit,
    i: usize,
    j: usize,
    epsilon: f64,
    k_cap: usize,
) -> Result<EpsilonWitness> {
    let n = unit.count();
    if i >= n || j >= n {
        return Err(Error::IndexOutOfRange {
            index: i.max(j),
            horizon: n,
        });
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidInput(format!("epsilon must be positive, got {epsilon}")));
    }
    let delta = epsilon / (3.0 + epsilon);
    let Some(k) = power_for(unit, i, j, delta, k_cap)? else {
        return Err(Error::WitnessNotFound { i, j, best: 0.0 });
    };
    let (_, u) = unit.top_vector(i);
    let (_, v) = unit.top_vector(j);
    let mut best: Option<(f64, CVector, CVector)> = None;
    for s in unit.summands() {
        let pu = restrict(&u, &s);
        let pv = restrict(&v, &s);
        let (nu, nv) = (pu.norm(), pv.norm());
        if nu == 0.0 || nv == 0.0 {
            continue;
        }
        let pu = pu / Complex64::new(nu, 0.0);
        let pv = pv / Complex64::new(nv, 0.0);
        let corner = unit.apply_power(i, k + 1, &pu).norm() * unit.apply_power(j, k + 1, &pv).norm();
        if best.as_ref().is_none_or(|b| corner > b.0) {
            best = Some((corner, pu, pv));
        }
    }
    let Some((seed_corner, u0, v0)) = best else {
        return Err(Error::WitnessNotFound { i, j, best: 0.0 });
    };
    if seed_corner < 1.0 - delta {
        return Err(Error::WitnessNotFound {
            i,
            j,
            best: seed_corner,
        });
    }
    let x = unit.apply_power(i, k, &u0);
    let y = unit.apply_power(j, k, &v0);
    let (nx, ny) = (x.norm(), y.norm());
    let a = RankOne {
        x: x / Complex64::new(nx, 0.0),
        y: y / Complex64::new(ny, 0.0),
    };
    let rx = unit.apply_power(i, 1, &a.x);
    let ry = unit.apply_power(j, 1, &a.y);
    let norms = WitnessNorms {
        i,
        j,
        epsilon,
        delta,
        k,
        seed_corner,
        norm: a.norm(),
        corner: rx.norm() * ry.norm(),
        defect: rank_two_norm(&rx, &ry, &a.x, &a.y),
    };
    if !norms.certified() {
        return Err(Error::WitnessNotFound {
            i,
            j,
            best: norms.corner,
        });
    }
    Ok(EpsilonWitness { a, norms })
}

fn restrict(v: &CVector, s: &Range<usize>) -> CVector {
    CVector::from_fn(
        v.len(),
        |k, _| if s.contains(&k) { v[k] } else { Complex64::new(0.0, 0.0) },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuasiUnitaryResidual {
    pub n: usize,
    pub tail_norm: f64,
    /// `max_{i>N} 2|Re(α(i)·conj(α(i+1))) − 1|`.
    pub epsilon_n: f64,
    pub bound: f64,
}

impl QuasiUnitaryResidual {
    pub fn holds(&self) -> bool {
        self.tail_norm <= self.bound + UNIT_TOLERANCE
    }
}

/// `‖Σ_{i>N} 2[Re(α(i)·conj(α(i+1))) − 1] r_i r_{i+1}‖` against `3ε_N`.
pub fn quasi_unitary_residual(alpha: &TorusElement, unit: &PositiveUnit, n: usize) -> Result<QuasiUnitaryResidual> {
    let count = unit.count();
    let mut coeffs = Vec::new();
    for i in n + 1..count.saturating_sub(1) {
        let d = alpha.phase(i)? - alpha.phase(i + 1)?;
        coeffs.push((i, 2.0 * (d.cos() - 1.0)));
    }
    let epsilon_n = coeffs.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    let tail_norm = match &unit.storage {
        Storage::Diagonal(r) => {
            let mut sum = vec![0.0; unit.dim];
            for &(i, c) in &coeffs {
                for (s, (a, b)) in sum.iter_mut().zip(r[i].iter().zip(&r[i + 1])) {
                    *s += c * a * b;
                }
            }
            sum.iter().map(|v| v.abs()).fold(0.0, f64::max)
        }
        Storage::Dense(r) => {
            let mut sum = CMatrix::zeros(unit.dim, unit.dim);
            for &(i, c) in &coeffs {
                sum += (&r[i] * &r[i + 1]) * Complex64::new(c, 0.0);
            }
            op_norm(&sum)
        }
    };
    Ok(QuasiUnitaryResidual {
        n,
        tail_norm,
        epsilon_n,
        bound: 3.0 * epsilon_n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakSandwichReport {
    pub delta: f64,
    pub lower_witness: f64,
    pub sampled_max: f64,
    pub upper: f64,
    /// `(|I| + 2)·ε_probe`.
    pub probe_slack: f64,
    pub subspace_dim: usize,
    pub samples: usize,
    pub seed: u64,
}

impl WeakSandwichReport {
    pub fn holds(&self) -> bool {
        self.delta - self.probe_slack - SANDWICH_SLACK <= self.lower_witness
            && self.lower_witness <= self.upper + SANDWICH_SLACK
            && self.sampled_max <= self.upper + SANDWICH_SLACK
    }
}

/// Compression to the range where `Σ_{i∈I} r_i` acts as the identity.
enum Compression {
    Indices(Vec<usize>),
    Basis(CMatrix),
}

/// Maps a full vector onto the compressed subspace.
type Projector = Box<dyn Fn(&CVector) -> CVector>;

fn compression(unit: &PositiveUnit, set: &IndexSet) -> Compression {
    match &unit.storage {
        Storage::Diagonal(r) => Compression::Indices(
            (0..unit.dim)
                .filter(|&k| (set.indices().iter().map(|&i| r[i][k]).sum::<f64>() - 1.0).abs() <= UNIT_TOLERANCE)
                .collect(),
        ),
        Storage::Dense(r) => {
            let mut sum = CMatrix::zeros(unit.dim, unit.dim);
            for &i in set.indices() {
                sum += &r[i];
            }
            let eig = sum.symmetric_eigen();
            let cols: Vec<usize> = (0..unit.dim)
                .filter(|&c| (eig.eigenvalues[c] - 1.0).abs() <= 1e-9)
                .collect();
            Compression::Basis(CMatrix::from_fn(unit.dim, cols.len(), |row, c| {
                eig.eigenvectors[(row, cols[c])]
            }))
        }
    }
}

/// Checks `Δ_I(α,1) − (|I|+2)ε_probe ≤ ‖u a u* − a‖ ≤ 2Δ_I(α,1)` for the
/// witness elements of every pair in `I`, and the upper bound on random
/// unit-norm elements, with `u = Σ_{i∈I} α(i) r_i` on the compressed space.
pub fn weak_sandwich(
    alpha: &TorusElement,
    unit: &PositiveUnit,
    set: &IndexSet,
    epsilon_probe: f64,
    samples: usize,
    seed: u64,
) -> Result<WeakSandwichReport> {
    if let Some(&bad) = set.indices().iter().find(|&&i| i >= unit.count()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            horizon: unit.count(),
        });
    }
    let one = TorusElement::one(1);
    let delta = delta_over(alpha, &one, set.indices().iter().copied())?.value;
    let comp = compression(unit, set);
    let values: Vec<Complex64> = set.indices().iter().map(|&i| alpha.value(i)).collect::<Result<_>>()?;
    // u on the compressed space, and the map taking full vectors into it
    let (u_diag, u_dense, project): (Option<Vec<Complex64>>, Option<CMatrix>, Projector) = match comp {
        Compression::Indices(idx) => {
            let Storage::Diagonal(r) = &unit.storage else {
                unreachable!()
            };
            let diag = idx
                .iter()
                .map(|&k| {
                    set.indices()
                        .iter()
                        .zip(&values)
                        .map(|(&i, &c)| c * r[i][k])
                        .sum::<Complex64>()
                })
                .collect();
            let idx2 = idx.clone();
            (
                Some(diag),
                None,
                Box::new(move |v: &CVector| CVector::from_fn(idx2.len(), |c, _| v[idx2[c]])),
            )
        }
        Compression::Basis(w) => {
            let mut u = CMatrix::zeros(w.ncols(), w.ncols());
            for (&i, &c) in set.indices().iter().zip(&values) {
                u += (w.adjoint() * unit.matrix(i) * &w) * c;
            }
            let wa = w.adjoint();
            (None, Some(u), Box::new(move |v: &CVector| &wa * v))
        }
    };
    let apply_u = |v: &CVector| -> CVector {
        match (&u_diag, &u_dense) {
            (Some(d), _) => CVector::from_fn(v.len(), |k, _| d[k] * v[k]),
            (_, Some(u)) => u * v,
            _ => unreachable!(),
        }
    };
    let mut lower_witness: f64 = 0.0;
    for &i0 in set.indices() {
        for &j0 in set.indices() {
            let w = epsilon_witness(unit, i0, j0, epsilon_probe)?;
            let x = project(&w.a.x);
            let y = project(&w.a.y);
            lower_witness = lower_witness.max(rank_two_norm(&apply_u(&x), &apply_u(&y), &x, &y));
        }
    }
    let subspace_dim = u_diag
        .as_ref()
        .map(Vec::len)
        .unwrap_or_else(|| u_dense.as_ref().unwrap().nrows());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_max: f64 = 0.0;
    for _ in 0..samples {
        let a = unit_gaussian(&mut rng, subspace_dim, subspace_dim);
        let c = match (&u_diag, &u_dense) {
            (Some(d), _) => CMatrix::from_fn(subspace_dim, subspace_dim, |k, l| {
                (d[k] * d[l].conj() - 1.0) * a[(k, l)]
            }),
            (_, Some(u)) => u * &a * u.adjoint() - &a,
            _ => unreachable!(),
        };
        sampled_max = sampled_max.max(op_norm(&c));
    }
    Ok(WeakSandwichReport {
        delta,
        lower_witness,
        sampled_max,
        upper: 2.0 * delta,
        probe_slack: (set.len() + 2) as f64 * epsilon_probe,
        subspace_dim,
        samples,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HypMode {
    /// Orthogonal projections with nonzero corners `r_i A r_j`.
    HypA,
    /// Positive elements with near-norm-one corners `r_i^k a r_j^k`.
    HypWeak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypVerdict {
    pub mode: HypMode,
    pub holds: bool,
    pub failing_pair: Option<(usize, usize)>,
    pub reason: Option<String>,
    pub pairs_checked: usize,
    /// Powers checked for every pair (HypWeak).
    pub k_max: usize,
    pub defects: UnitDefects,
}

/// Pairs examined by [`hyp_check`] are capped at this many indices.
pub const HYP_PAIR_CAP: usize = 32;

/// Verifies the projection hypothesis or the positive-element hypothesis on
/// all pairs among the first [`HYP_PAIR_CAP`] indices.
pub fn hyp_check(unit: &PositiveUnit, mode: HypMode, epsilon: f64, k_max: usize) -> HypVerdict {
    let defects = unit.defects();
    let n = unit.count().min(HYP_PAIR_CAP);
    let mut verdict = HypVerdict {
        mode,
        holds: true,
        failing_pair: None,
        reason: None,
        pairs_checked: 0,
        k_max,
        defects: defects.clone(),
    };
    let fail = |v: &mut HypVerdict, pair: Option<(usize, usize)>, reason: String| {
        v.holds = false;
        v.failing_pair = pair;
        v.reason = Some(reason);
    };
    if !defects.within(UNIT_TOLERANCE) {
        fail(&mut verdict, None, format!("unit identities fail: {defects:?}"));
        return verdict;
    }
    match mode {
        HypMode::HypA => {
            for i in 0..n {
                let r = unit.matrix(i);
                if op_norm(&(&r * &r - &r)) > UNIT_TOLERANCE {
                    fail(&mut verdict, Some((i, i)), format!("r_{i} is not a projection"));
                    return verdict;
                }
            }
            let ranks: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let r = unit.matrix(i);
                    unit.summands()
                        .iter()
                        .map(|s| s.clone().map(|k| r[(k, k)].re).sum::<f64>())
                        .collect()
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    verdict.pairs_checked += 1;
                    let corner: f64 = ranks[i].iter().zip(&ranks[j]).map(|(a, b)| a * b).sum();
                    if corner < 0.5 {
                        fail(&mut verdict, Some((i, j)), format!("r_{i} A r_{j} = 0"));
                        return verdict;
                    }
                }
            }
        }
        HypMode::HypWeak => {
            for i in 0..n {
                for j in 0..n {
                    verdict.pairs_checked += 1;
                    for k in 1..=k_max {
                        let best = best_corner(unit, i, j, k);
                        if best < 1.0 - epsilon {
                            fail(&mut verdict, Some((i, j)), format!("power {k}: best corner {best}"));
                            return verdict;
                        }
                    }
                    if let Err(e) = epsilon_witness(unit, i, j, epsilon) {
                        fail(&mut verdict, Some((i, j)), e.to_string());
                        return verdict;
                    }
                }
            }
        }
    }
    verdict
}

/// `max ‖r_i^k a_0 r_j^k‖` over rank-one seeds from top eigenvectors restricted
/// to each summand.
fn best_corner(unit: &PositiveUnit, i: usize, j: usize, k: usize) -> f64 {
    let (_, u) = unit.top_vector(i);
    let (_, v) = unit.top_vector(j);
    unit.summands()
        .iter()
        .filter_map(|s| {
            let (pu, pv) = (restrict(&u, s), restrict(&v, s));
            let (nu, nv) = (pu.norm(), pv.norm());
            (nu > 0.0 && nv > 0.0).then(|| {
                unit.apply_power(i, k, &(pu / Complex64::new(nu, 0.0))).norm()
                    * unit.apply_power(j, k, &(pv / Complex64::new(nv, 0.0))).norm()
            })
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceCheck {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorUnit {
    pub unit: PositiveUnit,
    pub slice_checks: Vec<SliceCheck>,
}

/// `s_i = p_{i+1} ⊗ q_{i+1} − p_i ⊗ q_i` on Kronecker products, where `q`
/// lists `q_0, …, q_N` for a unit of `N` elements.
pub fn tensor_unit(unit: &PositiveUnit, q: &[CMatrix], seed: u64) -> Result<TensorUnit> {
    let n = unit.count();
    if q.len() != n + 1 {
        return Err(Error::ConstructionError(format!(
            "need {} factors q_0..q_{n}, got {}",
            n + 1,
            q.len()
        )));
    }
    let qd = q[0].nrows();
    if q.iter().any(|m| m.nrows() != qd || m.ncols() != qd) {
        return Err(Error::ConstructionError(
            "second factors must share one square shape".into(),
        ));
    }
    for w in q.windows(2) {
        let gap = (&w[1] - &w[0])
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if gap < -UNIT_TOLERANCE {
            return Err(Error::ConstructionError("second factors are not increasing".into()));
        }
    }
    let q_diag: Option<Vec<Vec<f64>>> = q
        .iter()
        .map(|m| crate::linalg::is_diagonal(m).then(|| m.diagonal().iter().map(|z| z.re).collect()))
        .collect();
    let product = match (&unit.storage, &q_diag) {
        (Storage::Diagonal(_), Some(qd_vals)) => {
            let partials: Vec<Vec<f64>> = (0..=n).map(|k| unit.partial_diagonal(k).unwrap()).collect();
            let kron = |p: &Vec<f64>, qv: &Vec<f64>| -> Vec<f64> {
                p.iter().flat_map(|a| qv.iter().map(move |b| a * b)).collect()
            };
            let s = (0..n)
                .map(|i| {
                    let hi = kron(&partials[i + 1], &qd_vals[i + 1]);
                    let lo = kron(&partials[i], &qd_vals[i]);
                    hi.iter().zip(&lo).map(|(a, b)| a - b).collect()
                })
                .collect();
            PositiveUnit::from_diagonals(s)?
        }
        _ => {
            let partials: Vec<CMatrix> = (0..=n).map(|k| unit.partial_sum(k)).collect();
            let s = (0..n)
                .map(|i| partials[i + 1].kronecker(&q[i + 1]) - partials[i].kronecker(&q[i]))
                .collect();
            PositiveUnit::from_dense(s)?
        }
    };
    let defects = product.defects();
    if !defects.within(UNIT_TOLERANCE) {
        return Err(Error::ConstructionError(format!(
            "tensor unit fails the unit identities: {defects:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slice_checks = Vec::new();
    for i in 0..n {
        let j = (i + 1).min(n - 1);
        let a = unit_gaussian(&mut rng, unit.dim(), unit.dim());
        if let Some(residual) = slice_identity_residual(unit, &product, q, i, j, 2, &a) {
            if residual > UNIT_TOLERANCE {
                return Err(Error::ConstructionError(format!(
                    "slice identity fails at ({i}, {j}) with residual {residual}"
                )));
            }
            slice_checks.push(SliceCheck { i, j, k: 2, residual });
        }
    }
    Ok(TensorUnit {
        unit: product,
        slice_checks,
    })
}

/// Residual of `(id ⊗ φ)(s_i^k (a ⊗ q_j) s_j^k) = r_i^k a r_j^k`, where `φ` is
/// the vector state of a unit vector fixed by `q_i` (and hence by every later
/// `q`). Returns `None` when `q_i` has no eigenvalue 1.
pub fn slice_identity_residual(
    unit: &PositiveUnit,
    tensor: &PositiveUnit,
    q: &[CMatrix],
    i: usize,
    j: usize,
    k: usize,
    a: &CMatrix,
) -> Option<f64> {
    let eig = q[i].clone().symmetric_eigen();
    let idx = (0..q[i].nrows()).find(|&c| (eig.eigenvalues[c] - 1.0).abs() <= 1e-12)?;
    let e = eig.eigenvectors.column(idx).into_owned();
    let e = &e / Complex64::new(e.norm(), 0.0);
    let power = |m: CMatrix| -> CMatrix {
        let mut out = CMatrix::identity(m.nrows(), m.ncols());
        for _ in 0..k {
            out = &out * &m;
        }
        out
    };
    let si = power(tensor.matrix(i));
    let sj = power(tensor.matrix(j));
    let lhs_full = &si * a.kronecker(&q[j]) * &sj;
    let d = unit.dim();
    let qd = q[0].nrows();
    // (id ⊗ φ)(M)_{rc} = Σ_{st} conj(e_s) M_{(r,s),(c,t)} e_t
    let lhs = CMatrix::from_fn(d, d, |r, c| {
        let mut acc = Complex64::new(0.0, 0.0);
        for s in 0..qd {
            for t in 0..qd {
                acc += e[s].conj() * lhs_full[(r * qd + s, c * qd + t)] * e[t];
            }
        }
        acc
    });
    let rhs = power(unit.matrix(i)) * a * power(unit.matrix(j));
    Some(op_norm(&(lhs - rhs)))
}
