//! Dense and sparse linear-algebra helpers shared by the solver modules.

pub mod arnoldi;
pub mod care;
pub mod schur;
pub mod sparse;

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{c64, Mat};

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub fn to_complex(a: &Mat<f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

pub fn real_part(a: &CMat) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].re)
}

pub fn imag_part(a: &CMat) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].im)
}

pub fn max_abs_imag(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].im.abs());
        }
    }
    m
}

pub fn col(a: &Mat<f64>, j: usize) -> Vec<f64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn ccol(a: &CMat, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn from_cols(nrows: usize, cols: &[Vec<f64>]) -> Mat<f64> {
    Mat::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

pub fn from_ccols(nrows: usize, cols: &[Vec<c64>]) -> CMat {
    Mat::from_fn(nrows, cols.len(), |i, j| cols[j][i])
}

pub fn matvec(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.ncols(), x.len());
    let y = a * faer::ColRef::from_slice(x);
    y.iter().copied().collect()
}

pub fn matvec_t(a: &Mat<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.nrows(), x.len());
    let y = a.transpose() * faer::ColRef::from_slice(x);
    y.iter().copied().collect()
}

pub fn cmatvec(a: &CMat, x: &[c64]) -> Vec<c64> {
    assert_eq!(a.ncols(), x.len());
    let mut y = vec![c64::new(0.0, 0.0); a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += a[(i, j)] * xj;
        }
    }
    y
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ a_i conj(b_i)`.
pub fn cdot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cnorm2(a: &[c64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro(a: &Mat<f64>) -> f64 {
    a.norm_l2()
}

pub fn cfro(a: &CMat) -> f64 {
    a.norm_l2()
}

pub fn identity(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

pub fn cidentity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })
}

/// Eigenvalues of a real matrix.
pub fn eigenvalues(a: &Mat<f64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Eigenvalues and right eigenvectors of a real matrix.
pub fn eig(a: &Mat<f64>) -> Result<(Vec<c64>, CMat)> {
    if a.nrows() == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let evd = a.eigen().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let n = a.nrows();
    let vals = (0..n).map(|i| evd.S()[i]).collect();
    Ok((vals, evd.U().to_owned()))
}

pub fn ceigenvalues(a: &CMat) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    a.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Largest real part, or `-inf` for an empty spectrum.
pub fn abscissa(eigs: &[c64]) -> f64 {
    eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Sorts by descending real part, ties broken by descending imaginary part.
pub fn sort_rightmost(eigs: &mut [c64]) {
    eigs.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.im.partial_cmp(&a.im).unwrap_or(std::cmp::Ordering::Equal))
    });
}

/// Distance between two equally sized multisets of complex numbers under a
/// greedy nearest-pair matching. Returns `inf` on a size mismatch.
pub fn set_distance(a: &[c64], b: &[c64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let n = a.len();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            pairs.push(((x - y).norm(), i, j));
        }
    }
    pairs.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut used_a = vec![false; n];
    let mut used_b = vec![false; n];
    let mut worst: f64 = 0.0;
    let mut matched = 0;
    for (d, i, j) in pairs {
        if used_a[i] || used_b[j] {
            continue;
        }
        used_a[i] = true;
        used_b[j] = true;
        worst = worst.max(d);
        matched += 1;
        if matched == n {
            break;
        }
    }
    worst
}

/// Singular values of a complex matrix, nonincreasing.
pub fn csingular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::Eigen(format!("svd: {e:?}")))
}

pub fn singular_values(a: &Mat<f64>) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    a.singular_values().map_err(|e| Error::Eigen(format!("svd: {e:?}")))
}

/// Number of singular values above `rel_tol * σ_1`.
pub fn numerical_rank(sv: &[f64], rel_tol: f64) -> usize {
    match sv.first() {
        Some(&s1) if s1 > 0.0 => sv.iter().filter(|&&s| s > rel_tol * s1).count(),
        _ => 0,
    }
}

/// Solves `a x = b` for complex dense matrices.
pub fn csolve(a: &CMat, b: &CMat) -> CMat {
    a.partial_piv_lu().solve(b)
}

pub fn cinverse(a: &CMat) -> CMat {
    a.partial_piv_lu().inverse()
}

/// 2-norm condition number.
pub fn ccond(a: &CMat) -> Result<f64> {
    let sv = csingular_values(a)?;
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => Ok(hi / lo),
        (Some(_), Some(_)) => Ok(f64::INFINITY),
        _ => Ok(1.0),
    }
}

/// Solves the small Sylvester equation `a x + x b = c` through its
/// Kronecker form.
pub fn sylvester_small(a: &CMat, b: &CMat, c: &CMat) -> CMat {
    let m = a.nrows();
    let n = b.nrows();
    let big = Mat::from_fn(m * n, m * n, |r, s| {
        let (i, j) = (r % m, r / m);
        let (k, l) = (s % m, s / m);
        let mut v = c64::new(0.0, 0.0);
        if j == l {
            v += a[(i, k)];
        }
        if i == k {
            v += b[(l, j)];
        }
        v
    });
    let rhs = Mat::from_fn(m * n, 1, |r, _| c[(r % m, r / m)]);
    let x = csolve(&big, &rhs);
    Mat::from_fn(m, n, |i, j| x[(i + m * j, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_distance_matches_permutations() {
        let a = vec![c64::new(1.0, 2.0), c64::new(1.0, -2.0), c64::new(-3.0, 0.0)];
        let b = vec![c64::new(-3.0, 1e-9), c64::new(1.0, 2.0), c64::new(1.0, -2.0)];
        assert!(set_distance(&a, &b) < 1e-8);
        assert!(set_distance(&a, &b[..2]).is_infinite());
    }

    #[test]
    fn small_sylvester() {
        let a = Mat::from_fn(2, 2, |i, j| c64::new((i + 2 * j) as f64 + 1.0, (i as f64) - 0.5));
        let b = Mat::from_fn(3, 3, |i, j| c64::new(if i == j { 5.0 } else { 0.3 }, j as f64 * 0.1));
        let c = Mat::from_fn(2, 3, |i, j| c64::new(i as f64, j as f64));
        let x = sylvester_small(&a, &b, &c);
        let r = &a * &x + &x * &b - &c;
        assert!(r.norm_l2() < 1e-10);
    }
}
