//! Compressed-row matrices for stencil operators. Factorizations go
//! through faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Csr {
    /// Builds from `(row, col, value)` triplets, summing duplicates and
    /// dropping exact zeros.
    pub fn from_triplets(nrows: usize, ncols: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(trip.len());
        for (r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        let keep: Vec<bool> = vals.iter().map(|v| *v != 0.0).collect();
        let mut k = 0;
        let mut c2 = Vec::with_capacity(cols.len());
        let mut v2 = Vec::with_capacity(vals.len());
        for idx in 0..cols.len() {
            if keep[idx] {
                row_ptr[rows_of[idx] + 1] += 1;
                c2.push(cols[idx]);
                v2.push(vals[idx]);
                k += 1;
            }
        }
        debug_assert_eq!(k, c2.len());
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            cols: c2,
            vals: v2,
        }
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self::from_triplets(nrows, ncols, Vec::new())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out.push((r, c, v));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec shape");
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows, "matvec_t shape");
        let mut out = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[c] += v * y[r];
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(
            self.ncols,
            self.nrows,
            self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect(),
        )
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Csr, b: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| (r, c, a * v)).collect();
        t.extend(other.triplets().into_iter().map(|(r, c, v)| (r, c, b * v)));
        Self::from_triplets(self.nrows, self.ncols, t)
    }

    /// Columns `range` as a new matrix.
    pub fn columns(&self, range: std::ops::Range<usize>) -> Self {
        let t = self
            .triplets()
            .into_iter()
            .filter(|&(_, c, _)| range.contains(&c))
            .map(|(r, c, v)| (r, c - range.start, v))
            .collect();
        Self::from_triplets(self.nrows, range.len(), t)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// `self * b` for a dense `b`.
    pub fn mul_dense(&self, b: &Mat<f64>) -> Mat<f64> {
        assert_eq!(self.ncols, b.nrows());
        let mut out = Mat::zeros(self.nrows, b.ncols());
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                for k in 0..b.ncols() {
                    out[(r, k)] += v * b[(c, k)];
                }
            }
        }
        out
    }

    pub fn norm_1(&self) -> f64 {
        let mut colsum = vec![0.0; self.ncols];
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                colsum[c] += v.abs();
            }
        }
        colsum.into_iter().fold(0.0, f64::max)
    }

    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let trip: Vec<Triplet<usize, usize, f64>> = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| Triplet::new(r, c, v))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trip)
            .map_err(|e| Error::Solve(format!("sparse assembly: {e:?}")))
    }

    /// Writes the coordinate text format: `rows cols nnz`, then `i j value`.
    pub fn write_coordinate(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for (r, c, v) in self.triplets() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

/// Sparse LU factorization with solves against dense right-hand sides.
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl SparseLu {
    pub fn new(a: &Csr) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Shape("LU of a non-square matrix".into()));
        }
        let lu = a
            .to_faer()?
            .sp_lu()
            .map_err(|e| Error::Solve(format!("sparse LU: {e:?}")))?;
        Ok(Self { n: a.nrows(), lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Mat::from_fn(self.n, 1, |i, _| b[i]);
        let x = self.lu.solve_transpose(&rhs);
        (0..self.n).map(|i| x[(i, 0)]).collect()
    }

    pub fn solve_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        self.lu.solve(b)
    }
}

/// Estimate of the 1-norm condition number `‖A‖₁ ‖A⁻¹‖₁` by Hager's method.
pub fn condest_1(a: &Csr, lu: &SparseLu) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut x = vec![1.0 / n as f64; n];
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&x);
        let ynorm: f64 = y.iter().map(|v| v.abs()).sum();
        if !ynorm.is_finite() {
            return f64::INFINITY;
        }
        let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let z = lu.solve_transpose(&xi);
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
        if ynorm <= est || zmax <= ztx {
            est = est.max(ynorm);
            break;
        }
        est = ynorm;
        x = vec![0.0; n];
        x[jmax] = 1.0;
    }
    a.norm_1() * est
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::DenseSolveCore;

    #[test]
    fn duplicates_are_summed() {
        let a = Csr::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.matvec(&[1.0, 0.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn lu_solves_and_condest_is_sane() {
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        let a = Csr::from_triplets(n, n, t);
        let lu = SparseLu::new(&a).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let x = lu.solve(&b);
        let r = a.matvec(&x);
        for i in 0..n {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
        let exact = {
            let d = a.to_dense();
            let inv = d.partial_piv_lu().inverse();
            let mut m: f64 = 0.0;
            for j in 0..n {
                m = m.max((0..n).map(|i| inv[(i, j)].abs()).sum());
            }
            m * a.norm_1()
        };
        let est = condest_1(&a, &lu);
        assert!(est <= exact * (1.0 + 1e-10) && est >= exact / 3.0, "{est} vs {exact}");
    }
}
