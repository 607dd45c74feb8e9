//! Dense complex matrices: operator norms, seeded random draws and the
//! plain-text matrix format.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest dimension handled by a dense Hermitian eigen-solve; larger
/// matrices fall back to power iteration.
pub const DENSE_NORM_LIMIT: usize = 512;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 10_000;

pub fn is_diagonal(m: &CMatrix) -> bool {
    m.iter().enumerate().all(|(idx, z)| {
        let (r, c) = (idx % m.nrows(), idx / m.nrows());
        r == c || *z == Complex64::new(0.0, 0.0)
    })
}

pub fn is_zero(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

/// Operator (spectral) norm. Diagonal matrices return `max |m_kk|` exactly.
pub fn op_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if is_diagonal(m) {
        return (0..m.nrows().min(m.ncols()))
            .map(|k| m[(k, k)].norm())
            .fold(0.0, f64::max);
    }
    let gram = if m.ncols() <= m.nrows() {
        m.adjoint() * m
    } else {
        m * m.adjoint()
    };
    if gram.nrows() <= DENSE_NORM_LIMIT {
        let top = gram.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
        top.max(0.0).sqrt()
    } else {
        power_norm(&gram).sqrt()
    }
}

/// Top eigenvalue of a positive semidefinite matrix by power iteration,
/// clamped by the row-sum bound.
fn power_norm(gram: &CMatrix) -> f64 {
    let n = gram.nrows();
    let row_bound = gram
        .row_iter()
        .map(|r| r.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut v = nalgebra::DVector::from_fn(n, |i, _| Complex64::new(1.0 + (i % 7) as f64 * 1e-3, 0.0));
    v /= Complex64::new(v.norm(), 0.0);
    let mut lambda = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = gram * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / Complex64::new(next, 0.0);
        if (next - lambda).abs() <= POWER_TOL * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.min(row_bound)
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Matrix with independent standard complex Gaussian entries.
pub fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    DMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    })
}

/// Complex Gaussian matrix rescaled to operator norm 1.
pub fn unit_gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> CMatrix {
    let m = gaussian(rng, rows, cols);
    let n = op_norm(&m);
    m / Complex64::new(n, 0.0)
}

fn format_entry(z: &Complex64) -> String {
    let sign = if z.im.is_sign_negative() { '-' } else { '+' };
    format!("{:?}{sign}{:?}j", z.re, z.im.abs())
}

/// One row per line, comma-separated `re+imj` entries.
pub fn format_matrix(m: &CMatrix) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format_entry(&m[(r, c)])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn parse_entry(token: &str, line: usize) -> Result<Complex64> {
    let bad = || Error::InvalidInput(format!("line {line}: cannot parse entry {token:?}"));
    let t = token.trim();
    let Some(body) = t.strip_suffix('j') else {
        return t.parse::<f64>().map(|re| Complex64::new(re, 0.0)).map_err(|_| bad());
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&i| (bytes[i] == b'+' || bytes[i] == b'-') && !matches!(bytes[i - 1], b'e' | b'E'))
        .ok_or_else(bad)?;
    let re: f64 = body[..split].parse().map_err(|_| bad())?;
    let im: f64 = body[split..].parse().map_err(|_| bad())?;
    if !re.is_finite() || !im.is_finite() {
        return Err(bad());
    }
    Ok(Complex64::new(re, im))
}

/// Parses the text format produced by [`format_matrix`]. Blank lines are
/// ignored; every row must have the same length.
pub fn parse_matrix(text: &str) -> Result<CMatrix> {
    let mut rows: Vec<Vec<Complex64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| parse_entry(t, idx + 1))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::InvalidInput(format!(
                    "line {}: expected {} entries, found {}",
                    idx + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty matrix file".into()));
    }
    let cols = rows[0].len();
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_norm_is_exact() {
        let m = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
            Complex64::new(0.3, 0.4),
            Complex64::new(-0.2, 0.0),
        ]));
        assert_eq!(op_norm(&m), 0.5);
    }

    #[test]
    fn norm_matches_singular_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (r, c) in [(5, 5), (7, 3), (2, 9), (40, 40)] {
            let m = gaussian(&mut rng, r, c);
            let svd = m.clone().singular_values().iter().copied().fold(0.0, f64::max);
            assert!((op_norm(&m) - svd).abs() < 1e-9 * svd.max(1.0));
        }
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = gaussian(&mut rng, 30, 30);
        let g = m.adjoint() * &m;
        let dense = g.symmetric_eigenvalues().iter().copied().fold(0.0, f64::max);
        assert!((power_norm(&g) - dense).abs() < 1e-8 * dense);
    }

    #[test]
    fn text_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = gaussian(&mut rng, 3, 4);
        m[(0, 0)] = Complex64::new(1e-7, -2.5e-12);
        m[(1, 1)] = Complex64::new(-0.0, -0.0);
        let back = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn parse_forms() {
        let m = parse_matrix("1,2.5-1j\n-3e-2+4E+1j, 0+0j\n").unwrap();
        assert_eq!(m[(0, 1)], Complex64::new(2.5, -1.0));
        assert_eq!(m[(1, 0)], Complex64::new(-0.03, 40.0));
        assert!(parse_matrix("1,2\n3\n").is_err());
        assert!(parse_matrix("1+xj").is_err());
        assert!(parse_matrix("\n").is_err());
    }
}
