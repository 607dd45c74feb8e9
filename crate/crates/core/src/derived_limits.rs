//! Towers `A_0 ← A_1 ← A_2 ← …` of finitely generated abelian groups, their
//! inverse limits and first derived limits.
//!
//! All arithmetic is exact. `lim¹` is decided through the Mittag-Leffler
//! condition: for a tower of countable groups, `lim¹ = 0` exactly when for
//! every `n` the images `Im(A_m → A_n)` stabilize as `m` grows. Images are
//! compared as integer lattices in Hermite normal form.

use std::fmt;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BigInt>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![BigInt::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = BigInt::one();
        }
        m
    }

    pub fn from_i64(rows: usize, cols: usize, entries: &[i64]) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: entries.iter().map(|&x| BigInt::from(x)).collect(),
        })
    }

    /// Builds a matrix of known shape from its rows.
    pub fn with_shape(rows: usize, cols: usize, data: Vec<Vec<BigInt>>) -> Result<Self> {
        if data.len() != rows || data.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidInput(format!("expected a {rows}x{cols} integer matrix")));
        }
        Ok(Self {
            rows,
            cols,
            data: data.into_iter().flatten().collect(),
        })
    }

    pub fn diagonal(entries: &[BigInt]) -> Self {
        let n = entries.len();
        let mut m = Self::zeros(n, n);
        for (i, e) in entries.iter().enumerate() {
            m.data[i * n + i] = e.clone();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> &BigInt {
        &self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: BigInt) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[BigInt] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<BigInt>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Zero::is_zero)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::InvalidInput(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a.is_zero() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::InvalidInput("shape mismatch in subtraction".into()));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// `[self | other]`.
    pub fn hcat(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(Error::InvalidInput("row mismatch in concatenation".into()));
        }
        let rows = (0..self.rows)
            .map(|r| self.row(r).iter().chain(other.row(r)).cloned().collect())
            .collect();
        Self::with_shape(self.rows, self.cols + other.cols, rows)
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Self {
        let rows = (0..self.rows).map(|r| self.row(r)[range.clone()].to_vec()).collect();
        Self::with_shape(self.rows, range.len(), rows).expect("column range within bounds")
    }

    pub fn pow(&self, t: usize) -> Result<Self> {
        let mut out = Self::identity(self.rows);
        for _ in 0..t {
            out = out.mul(self)?;
        }
        Ok(out)
    }

    /// Determinant by fraction-free Bareiss elimination.
    pub fn det(&self) -> Result<BigInt> {
        if self.rows != self.cols {
            return Err(Error::InvalidInput("determinant of a non-square matrix".into()));
        }
        let n = self.rows;
        let mut a = self.to_rows();
        let mut sign = BigInt::one();
        let mut prev = BigInt::one();
        for k in 0..n {
            if a[k][k].is_zero() {
                match (k + 1..n).find(|&i| !a[i][k].is_zero()) {
                    Some(i) => {
                        a.swap(i, k);
                        sign = -sign;
                    }
                    None => return Ok(BigInt::zero()),
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i][j] = (&a[i][j] * &a[k][k] - &a[i][k] * &a[k][j]) / &prev;
                }
            }
            prev = a[k][k].clone();
        }
        Ok(if n == 0 { BigInt::one() } else { sign * &a[n - 1][n - 1] })
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for c in 0..self.cols {
                self.data.swap(a * self.cols + c, b * self.cols + c);
            }
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a != b {
            for r in 0..self.rows {
                self.data.swap(r * self.cols + a, r * self.cols + b);
            }
        }
    }

    /// `row_dst −= k · row_src`.
    fn sub_row(&mut self, dst: usize, src: usize, k: &BigInt) {
        for c in 0..self.cols {
            let v = k * &self.data[src * self.cols + c];
            self.data[dst * self.cols + c] -= v;
        }
    }

    /// `col_dst −= k · col_src`.
    fn sub_col(&mut self, dst: usize, src: usize, k: &BigInt) {
        for r in 0..self.rows {
            let v = k * &self.data[r * self.cols + src];
            self.data[r * self.cols + dst] -= v;
        }
    }

    fn negate_row(&mut self, r: usize) {
        for c in 0..self.cols {
            let v = -std::mem::take(&mut self.data[r * self.cols + c]);
            self.data[r * self.cols + c] = v;
        }
    }
}

/// JSON entry: a number when it fits in `i64`, a decimal string otherwise.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Small(i64),
    Big(String),
}

impl From<&BigInt> for Entry {
    fn from(x: &BigInt) -> Self {
        x.to_i64()
            .map(Entry::Small)
            .unwrap_or_else(|| Entry::Big(x.to_string()))
    }
}

impl TryFrom<Entry> for BigInt {
    type Error = Error;
    fn try_from(e: Entry) -> Result<BigInt> {
        match e {
            Entry::Small(x) => Ok(x.into()),
            Entry::Big(s) => s
                .parse()
                .map_err(|_| Error::InvalidInput(format!("not an integer: {s:?}"))),
        }
    }
}

fn to_entries(rows: Vec<Vec<BigInt>>) -> Vec<Vec<Entry>> {
    rows.iter().map(|r| r.iter().map(Entry::from).collect()).collect()
}

fn from_entries(rows: Vec<Vec<Entry>>) -> Result<Vec<Vec<BigInt>>> {
    rows.into_iter()
        .map(|r| r.into_iter().map(BigInt::try_from).collect())
        .collect()
}

fn matrix_from_entries(rows: usize, cols: usize, data: Vec<Vec<Entry>>) -> Result<IntMatrix> {
    // a matrix without rows carries no column information
    if rows == 0 && data.is_empty() {
        return Ok(IntMatrix::zeros(0, cols));
    }
    IntMatrix::with_shape(rows, cols, from_entries(data)?)
}

/// `U · M · V = S` with `U`, `V` unimodular and `S` diagonal, `d_1 | d_2 | …`.
#[derive(Debug, Clone, PartialEq)]
pub struct Smith {
    pub u: IntMatrix,
    pub s: IntMatrix,
    pub v: IntMatrix,
}

impl Smith {
    /// Nonzero diagonal entries, in divisibility order.
    pub fn invariants(&self) -> Vec<BigInt> {
        (0..self.s.rows.min(self.s.cols))
            .map(|i| self.s.get(i, i).clone())
            .take_while(|d| !d.is_zero())
            .collect()
    }

    pub fn rank(&self) -> usize {
        self.invariants().len()
    }

    /// Checks `U M V = S`, the diagonal shape and divisibility, and
    /// `|det U| = |det V| = 1`.
    pub fn verify(&self, m: &IntMatrix) -> Result<bool> {
        let product = self.u.mul(m)?.mul(&self.v)?;
        if product != self.s {
            return Ok(false);
        }
        for r in 0..self.s.rows {
            for c in 0..self.s.cols {
                if r != c && !self.s.get(r, c).is_zero() {
                    return Ok(false);
                }
            }
        }
        let d = self.invariants();
        if d.iter().any(|x| !x.is_positive()) || d.windows(2).any(|w| !w[1].is_multiple_of(&w[0])) {
            return Ok(false);
        }
        let trailing = (d.len()..self.s.rows.min(self.s.cols)).all(|i| self.s.get(i, i).is_zero());
        Ok(trailing && self.u.det()?.abs().is_one() && self.v.det()?.abs().is_one())
    }
}

pub fn smith_normal_form(m: &IntMatrix) -> Smith {
    let (rows, cols) = (m.rows, m.cols);
    let mut s = m.clone();
    let mut u = IntMatrix::identity(rows);
    let mut v = IntMatrix::identity(cols);
    for t in 0..rows.min(cols) {
        let pivot = (t..rows)
            .flat_map(|r| (t..cols).map(move |c| (r, c)))
            .filter(|&(r, c)| !s.get(r, c).is_zero())
            .min_by_key(|&(r, c)| s.get(r, c).abs());
        let Some((pr, pc)) = pivot else { break };
        s.swap_rows(t, pr);
        u.swap_rows(t, pr);
        s.swap_cols(t, pc);
        v.swap_cols(t, pc);
        loop {
            let mut changed = false;
            for r in t + 1..rows {
                if s.get(r, t).is_zero() {
                    continue;
                }
                let q = s.get(r, t) / s.get(t, t);
                s.sub_row(r, t, &q);
                u.sub_row(r, t, &q);
                if !s.get(r, t).is_zero() {
                    s.swap_rows(t, r);
                    u.swap_rows(t, r);
                    changed = true;
                }
            }
            for c in t + 1..cols {
                if s.get(t, c).is_zero() {
                    continue;
                }
                let q = s.get(t, c) / s.get(t, t);
                s.sub_col(c, t, &q);
                v.sub_col(c, t, &q);
                if !s.get(t, c).is_zero() {
                    s.swap_cols(t, c);
                    v.swap_cols(t, c);
                    changed = true;
                }
            }
            if changed {
                continue;
            }
            let d = s.get(t, t).clone();
            let offender = (t + 1..rows).find(|&r| (t + 1..cols).any(|c| !s.get(r, c).is_multiple_of(&d)));
            match offender {
                Some(r) => {
                    // row_t += row_r puts a non-multiple into row t
                    let minus_one = -BigInt::one();
                    s.sub_row(t, r, &minus_one);
                    u.sub_row(t, r, &minus_one);
                }
                None => break,
            }
        }
        if s.get(t, t).is_negative() {
            s.negate_row(t);
            u.negate_row(t);
        }
    }
    Smith { u, s, v }
}

/// Row-style Hermite normal form of the lattice spanned by the rows of `m`:
/// positive pivots, entries above each pivot reduced into `[0, pivot)`, zero
/// rows dropped. Two generating sets span the same lattice exactly when their
/// forms are equal.
pub fn hermite_rows(m: &IntMatrix) -> IntMatrix {
    let mut a = m.clone();
    let mut pr = 0;
    for col in 0..a.cols {
        if pr == a.rows {
            break;
        }
        while let Some(best) = (pr..a.rows)
            .filter(|&r| !a.get(r, col).is_zero())
            .min_by_key(|&r| a.get(r, col).abs())
        {
            a.swap_rows(pr, best);
            let mut done = true;
            for r in pr + 1..a.rows {
                if a.get(r, col).is_zero() {
                    continue;
                }
                let q = a.get(r, col) / a.get(pr, col);
                a.sub_row(r, pr, &q);
                done &= a.get(r, col).is_zero();
            }
            if done {
                break;
            }
        }
        if a.get(pr, col).is_zero() {
            continue;
        }
        if a.get(pr, col).is_negative() {
            a.negate_row(pr);
        }
        for r in 0..pr {
            let q = a.get(r, col).div_floor(a.get(pr, col));
            a.sub_row(r, pr, &q);
        }
        pr += 1;
    }
    let rows = (0..pr).map(|r| a.row(r).to_vec()).collect();
    IntMatrix::with_shape(pr, a.cols, rows).expect("hermite rows keep their width")
}

/// A subgroup of `Z^dim`, stored as its Hermite basis (one row per vector).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lattice {
    basis: IntMatrix,
}

impl Lattice {
    pub fn zero(dim: usize) -> Self {
        Self {
            basis: IntMatrix::zeros(0, dim),
        }
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            basis: IntMatrix::identity(dim),
        }
    }

    /// Lattice spanned by the columns of `m`.
    pub fn from_columns(m: &IntMatrix) -> Self {
        Self {
            basis: hermite_rows(&m.transpose()),
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.cols
    }

    pub fn rank(&self) -> usize {
        self.basis.rows
    }

    pub fn basis(&self) -> &IntMatrix {
        &self.basis
    }

    /// Basis vectors as the columns of a matrix.
    pub fn basis_columns(&self) -> IntMatrix {
        self.basis.transpose()
    }

    pub fn sum(&self, other: &Self) -> Self {
        let mut rows = self.basis.to_rows();
        rows.extend(other.basis.to_rows());
        let stacked = IntMatrix::with_shape(rows.len(), self.dim(), rows).expect("lattices share a dimension");
        Self {
            basis: hermite_rows(&stacked),
        }
    }

    pub fn contains(&self, other: &Self) -> bool {
        &self.sum(other) == self
    }

    pub fn is_standard(&self) -> bool {
        self.basis == IntMatrix::identity(self.dim())
    }

    /// `[Z^dim : L]` for full-rank lattices.
    pub fn index(&self) -> Option<BigInt> {
        (self.rank() == self.dim()).then(|| (0..self.dim()).map(|i| self.basis.get(i, i).clone()).product())
    }
}

/// Columns spanning `{x : m x = 0}`.
pub fn integer_kernel(m: &IntMatrix) -> IntMatrix {
    let smith = smith_normal_form(m);
    smith.v.columns(smith.rank()..m.cols)
}

/// An integer solution of `m x = b`, if one exists.
pub fn solve(m: &IntMatrix, b: &[BigInt]) -> Option<Vec<BigInt>> {
    if b.len() != m.rows {
        return None;
    }
    let smith = smith_normal_form(m);
    let d = smith.invariants();
    let col = IntMatrix::with_shape(b.len(), 1, b.iter().map(|x| vec![x.clone()]).collect()).ok()?;
    let ub = smith.u.mul(&col).ok()?;
    let mut y = vec![BigInt::zero(); m.cols];
    for i in 0..m.rows {
        let v = ub.get(i, 0);
        if i < d.len() {
            let (q, r) = v.div_rem(&d[i]);
            if !r.is_zero() {
                return None;
            }
            y[i] = q;
        } else if !v.is_zero() {
            return None;
        }
    }
    Some(
        (0..m.cols)
            .map(|r| (0..m.cols).map(|c| smith.v.get(r, c) * &y[c]).sum())
            .collect(),
    )
}

/// Integer `X` with `m X = b`, column by column.
pub fn solve_matrix(m: &IntMatrix, b: &IntMatrix) -> Option<IntMatrix> {
    let mut cols = Vec::with_capacity(b.cols);
    for c in 0..b.cols {
        let col: Vec<BigInt> = (0..b.rows).map(|r| b.get(r, c).clone()).collect();
        cols.push(solve(m, &col)?);
    }
    let rows = (0..m.cols)
        .map(|r| cols.iter().map(|c| c[r].clone()).collect())
        .collect();
    IntMatrix::with_shape(m.cols, b.cols, rows).ok()
}

/// Free rank and torsion coefficients `t_1 | t_2 | …` with every `t_i > 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub free_rank: usize,
    pub torsion: Vec<BigInt>,
}

#[derive(Serialize, Deserialize)]
struct CanonicalWire {
    free_rank: usize,
    torsion: Vec<Entry>,
}

impl Serialize for Canonical {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CanonicalWire {
            free_rank: self.free_rank,
            torsion: self.torsion.iter().map(Entry::from).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Canonical {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = CanonicalWire::deserialize(d)?;
        let torsion = w
            .torsion
            .into_iter()
            .map(BigInt::try_from)
            .collect::<Result<_>>()
            .map_err(serde::de::Error::custom)?;
        Ok(Self {
            free_rank: w.free_rank,
            torsion,
        })
    }
}

impl Canonical {
    pub fn is_trivial(&self) -> bool {
        self.free_rank == 0 && self.torsion.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.free_rank == 0
    }

    pub fn order(&self) -> Option<BigInt> {
        self.is_finite().then(|| self.torsion.iter().product())
    }
}

impl fmt::Display for Canonical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_trivial() {
            return write!(f, "0");
        }
        let mut parts = Vec::new();
        match self.free_rank {
            0 => {}
            1 => parts.push("Z".to_string()),
            r => parts.push(format!("Z^{r}")),
        }
        parts.extend(self.torsion.iter().map(|t| format!("Z/{t}")));
        write!(f, "{}", parts.join(" + "))
    }
}

/// `Z^rank` modulo the span of the relation columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AbGroup {
    rank: usize,
    relations: IntMatrix,
}

#[derive(Serialize, Deserialize)]
struct GroupWire {
    rank: usize,
    /// Relation vectors, each of length `rank`.
    #[serde(default)]
    relations: Vec<Vec<Entry>>,
}

impl Serialize for AbGroup {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GroupWire {
            rank: self.rank,
            relations: to_entries(self.relations.transpose().to_rows()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for AbGroup {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = GroupWire::deserialize(d)?;
        let cols = w.relations.len();
        let rel = matrix_from_entries(cols, w.rank, w.relations).map_err(serde::de::Error::custom)?;
        AbGroup::new(w.rank, rel.transpose()).map_err(serde::de::Error::custom)
    }
}

impl AbGroup {
    pub fn new(rank: usize, relations: IntMatrix) -> Result<Self> {
        if relations.rows != rank {
            return Err(Error::InvalidInput(format!(
                "relations have {} rows for a group of rank {rank}",
                relations.rows
            )));
        }
        Ok(Self { rank, relations })
    }

    pub fn free(rank: usize) -> Self {
        Self {
            rank,
            relations: IntMatrix::zeros(rank, 0),
        }
    }

    pub fn trivial() -> Self {
        Self::free(0)
    }

    pub fn cyclic(order: impl Into<BigInt>) -> Self {
        Self {
            rank: 1,
            relations: IntMatrix::diagonal(&[order.into()]),
        }
    }

    pub fn from_canonical(c: &Canonical) -> Self {
        let rank = c.free_rank + c.torsion.len();
        let mut relations = IntMatrix::zeros(rank, c.torsion.len());
        for (k, t) in c.torsion.iter().enumerate() {
            relations.set(c.free_rank + k, k, t.clone());
        }
        Self { rank, relations }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn relations(&self) -> &IntMatrix {
        &self.relations
    }

    pub fn relation_lattice(&self) -> Lattice {
        Lattice::from_columns(&self.relations)
    }

    pub fn is_free(&self) -> bool {
        self.relations.is_zero()
    }

    pub fn canonical(&self) -> Canonical {
        let inv = smith_normal_form(&self.relations).invariants();
        Canonical {
            free_rank: self.rank - inv.len(),
            torsion: inv.into_iter().filter(|d| !d.is_one()).collect(),
        }
    }
}

fn check_shape(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<()> {
    if f.rows != to.rank || f.cols != from.rank {
        return Err(Error::InvalidInput(format!(
            "a map Z^{} -> Z^{} needs a {}x{} matrix, got {}x{}",
            from.rank, to.rank, to.rank, from.rank, f.rows, f.cols
        )));
    }
    Ok(())
}

/// `f` maps the relations of `from` into those of `to`.
pub fn is_well_defined(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<bool> {
    check_shape(f, from, to)?;
    Ok(to
        .relation_lattice()
        .contains(&Lattice::from_columns(&f.mul(&from.relations)?)))
}

pub fn is_surjective(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<bool> {
    check_shape(f, from, to)?;
    Ok(Lattice::from_columns(f).sum(&to.relation_lattice()).is_standard())
}

/// `{x ∈ Z^{rank(from)} : f x ∈ relations(to)}`.
pub fn kernel_lattice(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<Lattice> {
    check_shape(f, from, to)?;
    let k = integer_kernel(&f.hcat(&to.relations)?);
    let rows = (0..from.rank).map(|r| k.row(r).to_vec()).collect();
    Ok(Lattice::from_columns(&IntMatrix::with_shape(from.rank, k.cols, rows)?))
}

pub fn is_injective(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<bool> {
    Ok(from.relation_lattice().contains(&kernel_lattice(f, from, to)?))
}

pub fn is_isomorphism(f: &IntMatrix, from: &AbGroup, to: &AbGroup) -> Result<bool> {
    Ok(is_surjective(f, from, to)? && is_injective(f, from, to)?)
}

/// A tower `A_0 ← A_1 ← …` with `bonds[n]: A_{n+1} → A_n`. With a periodic
/// tail, every level past the last listed one equals the last level and every
/// further bond is `tail`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tower {
    levels: Vec<AbGroup>,
    bonds: Vec<IntMatrix>,
    tail: Option<IntMatrix>,
}

#[derive(Serialize, Deserialize)]
struct TowerWire {
    levels: Vec<AbGroup>,
    #[serde(default)]
    bonds: Vec<Vec<Vec<Entry>>>,
    #[serde(default)]
    tail: Option<Vec<Vec<Entry>>>,
}

impl Serialize for Tower {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TowerWire {
            levels: self.levels.clone(),
            bonds: self.bonds.iter().map(|b| to_entries(b.to_rows())).collect(),
            tail: self.tail.as_ref().map(|t| to_entries(t.to_rows())),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Tower {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = TowerWire::deserialize(d)?;
        Tower::from_wire(w).map_err(serde::de::Error::custom)
    }
}

impl Tower {
    fn from_wire(w: TowerWire) -> Result<Self> {
        if w.levels.is_empty() {
            return Err(Error::InvalidInput("a tower needs at least one level".into()));
        }
        if w.bonds.len() + 1 != w.levels.len() {
            return Err(Error::InvalidInput(format!(
                "{} levels need {} bonds, got {}",
                w.levels.len(),
                w.levels.len() - 1,
                w.bonds.len()
            )));
        }
        let bonds = w
            .bonds
            .into_iter()
            .enumerate()
            .map(|(n, b)| matrix_from_entries(w.levels[n].rank, w.levels[n + 1].rank, b))
            .collect::<Result<_>>()?;
        let last = w.levels.last().unwrap().rank;
        let tail = w.tail.map(|t| matrix_from_entries(last, last, t)).transpose()?;
        Tower::new(w.levels, bonds, tail)
    }

    pub fn new(levels: Vec<AbGroup>, bonds: Vec<IntMatrix>, tail: Option<IntMatrix>) -> Result<Self> {
        if levels.is_empty() || bonds.len() + 1 != levels.len() {
            return Err(Error::InvalidInput(
                "a tower needs one bond between consecutive levels".into(),
            ));
        }
        for (n, b) in bonds.iter().enumerate() {
            if !is_well_defined(b, &levels[n + 1], &levels[n])? {
                return Err(Error::InvalidInput(format!(
                    "bond {} -> {n} does not respect relations",
                    n + 1
                )));
            }
        }
        if let Some(t) = &tail {
            let last = levels.last().unwrap();
            if !is_well_defined(t, last, last)? {
                return Err(Error::InvalidInput("tail bond does not respect relations".into()));
            }
        }
        Ok(Self { levels, bonds, tail })
    }

    /// Every level `g`, every bond the identity.
    pub fn constant(g: AbGroup) -> Self {
        let id = IntMatrix::identity(g.rank);
        Self {
            levels: vec![g],
            bonds: Vec::new(),
            tail: Some(id),
        }
    }

    /// `Z^r ← Z^r ← …` with every bond `m`.
    pub fn periodic_free(m: IntMatrix) -> Result<Self> {
        if m.rows != m.cols {
            return Err(Error::InvalidInput("a periodic bond must be square".into()));
        }
        Ok(Self {
            levels: vec![AbGroup::free(m.rows)],
            bonds: Vec::new(),
            tail: Some(m),
        })
    }

    /// `Z/p ← Z/p^2 ← … ← Z/p^levels` with reduction bonds.
    pub fn reductions(p: u64, levels: usize) -> Result<Self> {
        if p < 2 || levels == 0 {
            return Err(Error::InvalidInput("reduction towers need p ≥ 2 and a level".into()));
        }
        let groups = (1..=levels)
            .map(|n| AbGroup::cyclic(BigInt::from(p).pow(n as u32)))
            .collect();
        let bonds = vec![IntMatrix::identity(1); levels - 1];
        Self::new(groups, bonds, None)
    }

    pub fn listed_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn tail(&self) -> Option<&IntMatrix> {
        self.tail.as_ref()
    }

    /// Number of levels available for a truncation at `depth`.
    pub fn available(&self, depth: usize) -> usize {
        if self.tail.is_some() {
            depth
        } else {
            depth.min(self.levels.len())
        }
    }

    pub fn level(&self, n: usize) -> Option<&AbGroup> {
        match self.levels.get(n) {
            Some(g) => Some(g),
            None => self.tail.as_ref().map(|_| self.levels.last().unwrap()),
        }
    }

    /// `A_{n+1} → A_n`.
    pub fn bond(&self, n: usize) -> Option<&IntMatrix> {
        match self.bonds.get(n) {
            Some(b) => Some(b),
            None if n + 1 >= self.levels.len() => self.tail.as_ref(),
            None => None,
        }
    }

    /// The composite `A_m → A_n` for `m ≥ n`.
    pub fn composite(&self, n: usize, m: usize) -> Result<IntMatrix> {
        let missing = |k: usize| Error::IndexOutOfRange {
            index: k,
            horizon: self.levels.len(),
        };
        let mut out = IntMatrix::identity(self.level(n).ok_or_else(|| missing(n))?.rank);
        for k in n..m {
            out = out.mul(self.bond(k).ok_or_else(|| missing(k + 1))?)?;
        }
        Ok(out)
    }

    /// `Im(A_m → A_n)` as a lattice containing the relations of `A_n`.
    pub fn image(&self, n: usize, m: usize) -> Result<Lattice> {
        let rel = self.level(n).ok_or(Error::IndexOutOfRange {
            index: n,
            horizon: self.levels.len(),
        })?;
        Ok(Lattice::from_columns(&self.composite(n, m)?).sum(&rel.relation_lattice()))
    }

    fn all_finite(&self) -> bool {
        self.levels.iter().all(|g| g.canonical().is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimReport {
    pub depth: usize,
    pub truncated_lim: AbGroup,
    pub canonical: Canonical,
    pub stabilized: bool,
    /// The value is the limit of the whole tower, decided from its periodic tail.
    pub exact: bool,
}

/// `lim` over the truncation of depth `depth`, which is the top level since
/// threads are determined downward. For a free periodic tail with injective
/// bond `M` the genuine limit `∩_t Im(M^t)` is reported when it is decided.
pub fn lim_tower(tower: &Tower, depth: usize) -> Result<LimReport> {
    if depth == 0 {
        return Err(Error::InvalidInput("depth must be positive".into()));
    }
    let exact = |g: AbGroup| LimReport {
        depth,
        canonical: g.canonical(),
        truncated_lim: g,
        stabilized: true,
        exact: true,
    };
    if let Some(m) = &tower.tail {
        let a = tower.levels.last().unwrap();
        if is_isomorphism(m, a, a)? {
            return Ok(exact(AbGroup::from_canonical(&a.canonical())));
        }
        if a.is_free() && !m.det()?.is_zero() && a.rank == 1 {
            // |m| ≥ 2 here, and ∩ m^t Z = 0
            return Ok(exact(AbGroup::trivial()));
        }
    }
    let top = tower.available(depth) - 1;
    let g = tower.level(top).unwrap().clone();
    let stabilized = top >= 1 && {
        let b = tower.bond(top - 1).unwrap();
        is_isomorphism(b, &g, tower.level(top - 1).unwrap())?
    };
    let canonical = g.canonical();
    Ok(LimReport {
        depth,
        truncated_lim: AbGroup::from_canonical(&canonical),
        canonical,
        stabilized,
        exact: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Lim1Verdict {
    Zero,
    Nonzero,
    Undetermined,
}

/// Descending images `Im(A_m → A_n)` for `m = n, n+1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageChain {
    pub level: usize,
    pub images: Vec<Lattice>,
    /// First `m` with `Im(A_{m+1} → A_n) = Im(A_m → A_n)`.
    pub stabilized_at: Option<usize>,
}

#[derive(Serialize)]
struct ImageWire {
    from_level: usize,
    basis: Vec<Vec<Entry>>,
    index: Option<String>,
}

#[derive(Serialize)]
struct ChainWire {
    level: usize,
    stabilized_at: Option<usize>,
    images: Vec<ImageWire>,
}

impl Serialize for ImageChain {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ChainWire {
            level: self.level,
            stabilized_at: self.stabilized_at,
            images: self
                .images
                .iter()
                .enumerate()
                .map(|(k, l)| ImageWire {
                    from_level: self.level + k,
                    basis: to_entries(l.basis.to_rows()),
                    index: l.index().map(|i| i.to_string()),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl ImageChain {
    /// Indices `[A_n-lattice : image]` along the chain, when finite.
    pub fn indices(&self) -> Vec<Option<BigInt>> {
        self.images.iter().map(Lattice::index).collect()
    }

    pub fn strictly_descending(&self) -> bool {
        self.images.windows(2).all(|w| w[0] != w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lim1Report {
    pub verdict: Lim1Verdict,
    pub reason: String,
    pub evidence: Vec<ImageChain>,
}

fn image_chain(tower: &Tower, n: usize, last: usize) -> Result<ImageChain> {
    let images: Vec<Lattice> = (n..=last.max(n)).map(|m| tower.image(n, m)).collect::<Result<_>>()?;
    let stabilized_at = images.windows(2).position(|w| w[0] == w[1]).map(|k| n + k);
    Ok(ImageChain {
        level: n,
        images,
        stabilized_at,
    })
}

/// Mittag-Leffler analysis to depth `depth`.
///
/// Finite levels force stabilization. For a periodic tail the images at the
/// first tail level are `Im(M^t)`: once two consecutive ones agree they agree
/// forever, and when `M` is injective on a free group a single strict step
/// propagates to an infinite strict descent, so the condition fails.
pub fn lim1_tower(tower: &Tower, depth: usize) -> Result<Lim1Report> {
    let depth = depth.max(1);
    let n0 = tower.levels.len() - 1;
    let last = if tower.tail.is_some() { n0 + depth } else { n0 };
    let evidence: Vec<ImageChain> = (0..=n0).map(|n| image_chain(tower, n, last)).collect::<Result<_>>()?;
    let report = |verdict, reason: &str| Lim1Report {
        verdict,
        reason: reason.into(),
        evidence: evidence.clone(),
    };
    if tower.all_finite() {
        return Ok(report(Lim1Verdict::Zero, "every level is finite"));
    }
    match &tower.tail {
        Some(m) => {
            let chain = &evidence[n0];
            if chain.stabilized_at.is_some() {
                return Ok(report(Lim1Verdict::Zero, "images stabilize under the periodic bond"));
            }
            let a = &tower.levels[n0];
            if a.is_free() && !m.det()?.is_zero() && chain.images.len() >= 2 && chain.images[0] != chain.images[1] {
                return Ok(report(
                    Lim1Verdict::Nonzero,
                    "images strictly descend and the injective periodic bond keeps them descending",
                ));
            }
            Ok(report(
                Lim1Verdict::Undetermined,
                "image chain has not stabilized at this depth",
            ))
        }
        None => {
            let full = evidence.iter().all(|c| {
                let g = &tower.levels[c.level];
                c.images.iter().all(|l| l == &Lattice::standard(g.rank))
            });
            if full {
                Ok(report(Lim1Verdict::Zero, "every image is the whole level"))
            } else {
                Ok(report(Lim1Verdict::Undetermined, "finite data without a periodic tail"))
            }
        }
    }
}

/// For towers indexed by the naturals, every partial thread extends exactly
/// when every bond is surjective.
pub fn flasque_check(tower: &Tower) -> Result<bool> {
    for (n, b) in tower.bonds.iter().enumerate() {
        if !is_surjective(b, &tower.levels[n + 1], &tower.levels[n])? {
            return Ok(false);
        }
    }
    match &tower.tail {
        Some(t) => {
            let a = tower.levels.last().unwrap();
            is_surjective(t, a, a)
        }
        None => Ok(true),
    }
}

/// Short exact sequences `0 → F_n → T_n → G_n → 0` compatible with the bonds,
/// for `n < depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct SesTower {
    f: Tower,
    t: Tower,
    g: Tower,
    iota: Vec<IntMatrix>,
    sigma: Vec<IntMatrix>,
}

#[derive(Serialize, Deserialize)]
struct SesWire {
    f: Tower,
    t: Tower,
    g: Tower,
    iota: Vec<Vec<Vec<Entry>>>,
    sigma: Vec<Vec<Vec<Entry>>>,
}

impl Serialize for SesTower {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SesWire {
            f: self.f.clone(),
            t: self.t.clone(),
            g: self.g.clone(),
            iota: self.iota.iter().map(|m| to_entries(m.to_rows())).collect(),
            sigma: self.sigma.iter().map(|m| to_entries(m.to_rows())).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SesTower {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = SesWire::deserialize(d)?;
        let rank = |t: &Tower, n: usize| {
            t.level(n)
                .map(|g| g.rank)
                .ok_or_else(|| serde::de::Error::custom(format!("missing level {n}")))
        };
        let mut iota = Vec::new();
        for (n, m) in w.iota.into_iter().enumerate() {
            iota.push(matrix_from_entries(rank(&w.t, n)?, rank(&w.f, n)?, m).map_err(serde::de::Error::custom)?);
        }
        let mut sigma = Vec::new();
        for (n, m) in w.sigma.into_iter().enumerate() {
            sigma.push(matrix_from_entries(rank(&w.g, n)?, rank(&w.t, n)?, m).map_err(serde::de::Error::custom)?);
        }
        SesTower::new(w.f, w.t, w.g, iota, sigma).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelExactness {
    pub level: usize,
    pub maps_well_defined: bool,
    pub injective: bool,
    pub surjective: bool,
    pub image_is_kernel: bool,
    pub squares_commute: bool,
}

impl LevelExactness {
    pub fn exact(&self) -> bool {
        self.maps_well_defined && self.injective && self.surjective && self.image_is_kernel && self.squares_commute
    }
}

impl SesTower {
    pub fn new(f: Tower, t: Tower, g: Tower, iota: Vec<IntMatrix>, sigma: Vec<IntMatrix>) -> Result<Self> {
        if iota.is_empty() || iota.len() != sigma.len() {
            return Err(Error::InvalidSes(
                "need one inclusion and one quotient map per level".into(),
            ));
        }
        let ses = Self { f, t, g, iota, sigma };
        for n in 0..ses.depth() {
            let e = ses.level_exactness(n).map_err(|e| Error::InvalidSes(e.to_string()))?;
            if !e.exact() {
                return Err(Error::InvalidSes(format!("level {n} fails: {e:?}")));
            }
        }
        Ok(ses)
    }

    pub fn depth(&self) -> usize {
        self.iota.len()
    }

    pub fn towers(&self) -> (&Tower, &Tower, &Tower) {
        (&self.f, &self.t, &self.g)
    }

    fn groups(&self, n: usize) -> Result<(&AbGroup, &AbGroup, &AbGroup)> {
        fn get<'a>(t: &'a Tower, name: &str, n: usize) -> Result<&'a AbGroup> {
            t.level(n)
                .ok_or_else(|| Error::InvalidSes(format!("{name} has no level {n}")))
        }
        Ok((get(&self.f, "F", n)?, get(&self.t, "T", n)?, get(&self.g, "G", n)?))
    }

    pub fn level_exactness(&self, n: usize) -> Result<LevelExactness> {
        let (f, t, g) = self.groups(n)?;
        let (iota, sigma) = (&self.iota[n], &self.sigma[n]);
        let maps_well_defined = is_well_defined(iota, f, t)? && is_well_defined(sigma, t, g)?;
        let injective = is_injective(iota, f, t)?;
        let surjective = is_surjective(sigma, t, g)?;
        let image = Lattice::from_columns(iota).sum(&t.relation_lattice());
        let image_is_kernel = image == kernel_lattice(sigma, t, g)?;
        let squares_commute = if n + 1 < self.depth() {
            self.groups(n + 1)?;
            let missing = || Error::InvalidSes(format!("missing bond at level {n}"));
            let (bf, bt, bg) = (
                self.f.bond(n).ok_or_else(missing)?,
                self.t.bond(n).ok_or_else(missing)?,
                self.g.bond(n).ok_or_else(missing)?,
            );
            let left = bt.mul(&self.iota[n + 1])?.sub(&iota.mul(bf)?)?;
            let right = bg.mul(&self.sigma[n + 1])?.sub(&sigma.mul(bt)?)?;
            t.relation_lattice().contains(&Lattice::from_columns(&left))
                && g.relation_lattice().contains(&Lattice::from_columns(&right))
        } else {
            true
        };
        Ok(LevelExactness {
            level: n,
            maps_well_defined,
            injective,
            surjective,
            image_is_kernel,
            squares_commute,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SixTermCase {
    /// `lim¹ F = 0`: `0 → lim F → lim T → lim G → 0` is exact.
    ExactLimits,
    /// `lim¹ T = 0 ≠ lim¹ F`: the map `lim T → lim G` is not onto.
    DiagonalNotSurjective,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SixTermReport {
    pub depth: usize,
    pub lim_f: LimReport,
    pub lim_t: LimReport,
    pub lim_g: LimReport,
    pub lim1_f: Lim1Report,
    pub lim1_t: Lim1Report,
    pub levels: Vec<LevelExactness>,
    /// Truncated `lim G` at depths `1..=depth`.
    pub lim_g_truncations: Vec<Canonical>,
    pub case: SixTermCase,
    pub holds: bool,
    pub detail: String,
}

/// Checks the six-term sequence `0 → lim F → lim T → lim G → lim¹F → lim¹T`
/// at tower scale.
///
/// With `lim¹F = 0` every truncation `0 → F_k → T_k → G_k → 0` must be exact.
/// With `lim¹T = 0` and `lim¹F ≠ 0`, exactness identifies `lim G / im(lim T)`
/// with `lim¹F`, and the evidence is a stable `lim T` against truncations of
/// `lim G` that never stabilize.
pub fn six_term_check(ses: &SesTower, depth: usize) -> Result<SixTermReport> {
    let depth = depth.clamp(1, ses.depth());
    let levels: Vec<LevelExactness> = (0..depth).map(|n| ses.level_exactness(n)).collect::<Result<_>>()?;
    let all_exact = levels.iter().all(LevelExactness::exact);
    let lim_f = lim_tower(&ses.f, depth)?;
    let lim_t = lim_tower(&ses.t, depth)?;
    let lim_g = lim_tower(&ses.g, depth)?;
    let lim1_f = lim1_tower(&ses.f, depth)?;
    let lim1_t = lim1_tower(&ses.t, depth)?;
    let lim_g_truncations: Vec<Canonical> = (1..=depth)
        .map(|k| lim_tower(&ses.g, k).map(|r| r.canonical))
        .collect::<Result<_>>()?;
    let g_grows = lim_g_truncations.windows(2).all(|w| w[0] != w[1]) && lim_g_truncations.len() >= 2;
    let (case, holds, detail) = match (lim1_f.verdict, lim1_t.verdict) {
        (Lim1Verdict::Zero, _) => (
            SixTermCase::ExactLimits,
            all_exact,
            format!("every truncation exact: {all_exact}"),
        ),
        (Lim1Verdict::Nonzero, Lim1Verdict::Zero) => {
            let ok = all_exact && lim_t.stabilized && !lim_g.stabilized && g_grows;
            (
                SixTermCase::DiagonalNotSurjective,
                ok,
                format!(
                    "lim T = {} is stable while truncated lim G keeps growing ({} at depth {depth}); \
                     the cokernel of lim T -> lim G is lim^1 F, which is nonzero",
                    lim_t.canonical, lim_g.canonical
                ),
            )
        }
        _ => (
            SixTermCase::Inconclusive,
            all_exact,
            "derived limits undetermined at this depth".into(),
        ),
    };
    Ok(SixTermReport {
        depth,
        lim_f,
        lim_t,
        lim_g,
        lim1_f,
        lim1_t,
        levels,
        lim_g_truncations,
        case,
        holds,
        detail,
    })
}

/// Default number of levels in [`build_paper_model`].
pub const PAPER_MODEL_LEVELS: usize = 16;

/// `0 → F_n → T_n → G_n → 0` with `F_n = Z` and bonds `×2`, `T_n = Z` with
/// identity bonds, `G_n = Z/2^{n+1}` with reduction bonds, `ι_n = ×2^{n+1}`.
pub fn build_paper_model() -> SesTower {
    build_paper_model_with(PAPER_MODEL_LEVELS).expect("the 2-adic model is exact")
}

pub fn build_paper_model_with(levels: usize) -> Result<SesTower> {
    let f = Tower::periodic_free(IntMatrix::from_i64(1, 1, &[2])?)?;
    let t = Tower::constant(AbGroup::free(1));
    let g = Tower::reductions(2, levels)?;
    let iota = (0..levels)
        .map(|n| IntMatrix::diagonal(&[BigInt::from(2).pow(n as u32 + 1)]))
        .collect();
    let sigma = vec![IntMatrix::identity(1); levels];
    SesTower::new(f, t, g, iota, sigma)
}

fn random_triangular(rng: &mut impl Rng, r: usize, max_diag: i64) -> IntMatrix {
    let mut m = IntMatrix::zeros(r, r);
    for i in 0..r {
        m.set(i, i, BigInt::from(rng.random_range(1..=max_diag)));
        for j in i + 1..r {
            m.set(i, j, BigInt::from(rng.random_range(-2..=2)));
        }
    }
    m
}

/// A random sequence of finite groups `0 → K_n/L_n → Z^r/L_n → Z^r/K_n → 0`
/// with `L_n ⊆ K_n` full rank, `L_{n+1} ⊆ L_n` and `K_{n+1} ⊆ K_n`.
pub fn random_finite_ses(rng: &mut impl Rng, depth: usize) -> Result<SesTower> {
    let r = rng.random_range(1..=3usize);
    let mut k = random_triangular(rng, r, 3);
    let mut l = k.mul(&random_triangular(rng, r, 3))?;
    let (mut ks, mut ls) = (Vec::new(), Vec::new());
    for _ in 0..depth.max(1) {
        ks.push(k.clone());
        ls.push(l.clone());
        let l_next = l.mul(&random_triangular(rng, r, 2))?;
        let k_next = Lattice::from_columns(&k.mul(&random_triangular(rng, r, 2))?)
            .sum(&Lattice::from_columns(&l_next))
            .basis_columns();
        k = k_next;
        l = l_next;
    }
    let n = ks.len();
    let quotient = |rel: &IntMatrix| AbGroup::new(r, rel.clone());
    let t_levels: Vec<AbGroup> = ls.iter().map(quotient).collect::<Result<_>>()?;
    let g_levels: Vec<AbGroup> = ks.iter().map(quotient).collect::<Result<_>>()?;
    let f_levels: Vec<AbGroup> = ks
        .iter()
        .zip(&ls)
        .map(|(k, l)| {
            let coords = solve_matrix(k, l).ok_or_else(|| Error::ConstructionError("L is not inside K".into()))?;
            AbGroup::new(r, coords)
        })
        .collect::<Result<_>>()?;
    let f_bonds = (0..n - 1)
        .map(|i| solve_matrix(&ks[i], &ks[i + 1]).ok_or_else(|| Error::ConstructionError("K does not descend".into())))
        .collect::<Result<_>>()?;
    let id = vec![IntMatrix::identity(r); n - 1];
    let f = Tower::new(f_levels, f_bonds, None)?;
    let t = Tower::new(t_levels, id.clone(), None)?;
    let g = Tower::new(g_levels, id, None)?;
    SesTower::new(f, t, g, ks, vec![IntMatrix::identity(r); n])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn big(x: i64) -> BigInt {
        BigInt::from(x)
    }

    #[test]
    fn smith_of_identity() {
        let m = IntMatrix::identity(3);
        let s = smith_normal_form(&m);
        assert_eq!(s.s, m);
        assert!(s.verify(&m).unwrap());
    }

    #[test]
    fn smith_of_diagonal_pair() {
        let m = IntMatrix::from_i64(2, 2, &[2, 0, 0, 3]).unwrap();
        let s = smith_normal_form(&m);
        assert_eq!(s.invariants(), vec![big(1), big(6)]);
        assert!(s.verify(&m).unwrap());
    }

    #[test]
    fn smith_of_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let entries: Vec<i64> = (0..25).map(|_| rng.random_range(-40..=40)).collect();
            let m = IntMatrix::from_i64(5, 5, &entries).unwrap();
            let s = smith_normal_form(&m);
            assert!(s.verify(&m).unwrap());
            assert_eq!(s.invariants().iter().product::<BigInt>(), m.det().unwrap().abs());
        }
        let m = IntMatrix::from_i64(2, 3, &[4, 6, 8, 6, 9, 12]).unwrap();
        let s = smith_normal_form(&m);
        assert!(s.verify(&m).unwrap());
        assert_eq!(s.invariants(), vec![big(1)]);
    }

    #[test]
    fn determinant() {
        let m = IntMatrix::from_i64(3, 3, &[0, 2, 1, 3, 0, 1, 1, 1, 1]).unwrap();
        assert_eq!(m.det().unwrap(), big(-1));
    }

    #[test]
    fn hermite_is_canonical() {
        let a = IntMatrix::from_i64(2, 2, &[2, 0, 0, 2]).unwrap();
        let b = IntMatrix::from_i64(3, 2, &[2, 2, 0, 2, 4, 6]).unwrap();
        assert_eq!(hermite_rows(&a), hermite_rows(&b));
        assert_eq!(Lattice::from_columns(&a).index(), Some(big(4)));
    }

    #[test]
    fn kernels_and_solutions() {
        let m = IntMatrix::from_i64(1, 3, &[2, 4, 6]).unwrap();
        let k = integer_kernel(&m);
        assert_eq!(k.cols(), 2);
        assert!(m.mul(&k).unwrap().is_zero());
        assert!(solve(&m, &[big(3)]).is_none());
        let x = solve(&m, &[big(8)]).unwrap();
        assert_eq!(&x[0] * 2 + &x[1] * 4 + &x[2] * 6, big(8));
    }

    #[test]
    fn canonical_forms() {
        let g = AbGroup::new(2, IntMatrix::from_i64(2, 2, &[2, 0, 0, 3]).unwrap()).unwrap();
        let c = g.canonical();
        assert_eq!(
            c,
            Canonical {
                free_rank: 0,
                torsion: vec![big(6)]
            }
        );
        assert_eq!(AbGroup::from_canonical(&c).canonical(), c);
        assert_eq!(AbGroup::free(2).canonical().to_string(), "Z^2");
        assert_eq!(AbGroup::trivial().canonical().to_string(), "0");
    }

    #[test]
    fn constant_tower() {
        let t = Tower::constant(AbGroup::free(1));
        let lim = lim_tower(&t, 5).unwrap();
        assert_eq!(lim.canonical, AbGroup::free(1).canonical());
        assert!(lim.stabilized && lim.exact);
        assert_eq!(lim1_tower(&t, 5).unwrap().verdict, Lim1Verdict::Zero);
        assert!(flasque_check(&t).unwrap());
    }

    #[test]
    fn doubling_tower() {
        let t = Tower::periodic_free(IntMatrix::from_i64(1, 1, &[2]).unwrap()).unwrap();
        let lim = lim_tower(&t, 8).unwrap();
        assert!(lim.canonical.is_trivial() && lim.stabilized);
        let l1 = lim1_tower(&t, 8).unwrap();
        assert_eq!(l1.verdict, Lim1Verdict::Nonzero);
        let idx: Vec<BigInt> = l1.evidence[0].indices().into_iter().map(Option::unwrap).collect();
        assert_eq!(idx, (0..=8).map(|t| BigInt::from(2).pow(t)).collect::<Vec<_>>());
        assert!(l1.evidence[0].strictly_descending());
        assert!(!flasque_check(&t).unwrap());
    }

    #[test]
    fn reduction_tower() {
        let t = Tower::reductions(2, 10).unwrap();
        for k in 1..=10 {
            let lim = lim_tower(&t, k).unwrap();
            assert_eq!(lim.canonical.torsion, vec![BigInt::from(2).pow(k as u32)]);
            assert!(!lim.stabilized);
        }
        assert_eq!(lim1_tower(&t, 10).unwrap().verdict, Lim1Verdict::Zero);
        assert!(flasque_check(&t).unwrap());
    }

    #[test]
    fn ill_defined_bond_is_rejected() {
        let err = Tower::new(
            vec![AbGroup::cyclic(3), AbGroup::cyclic(2)],
            vec![IntMatrix::identity(1)],
            None,
        );
        assert!(err.is_err());
    }

    #[test]
    fn two_adic_model() {
        let ses = build_paper_model();
        let e0 = ses.level_exactness(0).unwrap();
        assert!(e0.exact());
        let report = six_term_check(&ses, 12).unwrap();
        assert!(report.lim_f.canonical.is_trivial());
        assert_eq!(report.lim_t.canonical, AbGroup::free(1).canonical());
        assert!(flasque_check(ses.towers().1).unwrap());
        assert_eq!(report.lim1_t.verdict, Lim1Verdict::Zero);
        assert_eq!(report.lim1_f.verdict, Lim1Verdict::Nonzero);
        assert_eq!(report.case, SixTermCase::DiagonalNotSurjective);
        assert!(report.holds, "{}", report.detail);
    }

    #[test]
    fn identity_inclusion() {
        let t = Tower::constant(AbGroup::free(2));
        let g = Tower::constant(AbGroup::trivial());
        let ses = SesTower::new(
            t.clone(),
            t,
            g,
            vec![IntMatrix::identity(2); 4],
            vec![IntMatrix::zeros(0, 2); 4],
        )
        .unwrap();
        let report = six_term_check(&ses, 4).unwrap();
        assert_eq!(report.case, SixTermCase::ExactLimits);
        assert!(report.holds);
        assert_eq!(report.lim1_t.verdict, Lim1Verdict::Zero);
    }

    #[test]
    fn invalid_ses_is_rejected() {
        let t = Tower::constant(AbGroup::free(1));
        let g = Tower::reductions(2, 2).unwrap();
        let iota = vec![IntMatrix::identity(1); 2];
        let sigma = vec![IntMatrix::identity(1); 2];
        assert!(matches!(
            SesTower::new(t.clone(), t, g, iota, sigma),
            Err(Error::InvalidSes(_))
        ));
    }

    #[test]
    fn random_finite_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let ses = random_finite_ses(&mut rng, 4).unwrap();
            let report = six_term_check(&ses, 4).unwrap();
            assert_eq!(report.lim1_f.verdict, Lim1Verdict::Zero);
            assert!(report.holds);
        }
    }

    #[test]
    fn json_roundtrip() {
        let ses = build_paper_model_with(4).unwrap();
        let json = serde_json::to_string(&ses).unwrap();
        let back: SesTower = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ses);
        let tower: Tower = serde_json::from_str(r#"{"levels":[{"rank":1}],"tail":[[1]]}"#).unwrap();
        assert_eq!(tower, Tower::constant(AbGroup::free(1)));
        let huge = Tower::periodic_free(IntMatrix::diagonal(&[BigInt::from(2).pow(80)])).unwrap();
        let back: Tower = serde_json::from_str(&serde_json::to_string(&huge).unwrap()).unwrap();
        assert_eq!(back, huge);
    }
}
