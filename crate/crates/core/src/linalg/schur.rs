//! Ordered complex Schur form of a real matrix and the spectral projector
//! onto a selected group of eigenvalues.
//!
//! The real Schur form comes from nalgebra. Its 2x2 blocks are split by a
//! unitary rotation, then the selected diagonal entries are bubbled to the
//! top by adjacent Givens swaps.

use faer::{c64, Mat};
use nalgebra::DMatrix;

use super::CMat;
use crate::error::{Error, Result};

/// `a = q t qᴴ` with `t` upper triangular and the `k` selected eigenvalues
/// leading the diagonal.
pub struct OrderedSchur {
    pub q: CMat,
    pub t: CMat,
    pub k: usize,
}

impl OrderedSchur {
    pub fn eigenvalues(&self) -> Vec<c64> {
        (0..self.t.nrows()).map(|i| self.t[(i, i)]).collect()
    }

    /// Spectral projector onto the leading invariant subspace along the
    /// trailing one: `q [[I, -y], [0, 0]] qᴴ` with `t11 y - y t22 = -t12`.
    pub fn projector(&self) -> CMat {
        let n = self.t.nrows();
        let k = self.k;
        let m = n - k;
        let zero = c64::new(0.0, 0.0);
        // y is k x m, solved column by column
        let mut y = Mat::<c64>::zeros(k, m);
        for j in 0..m {
            let shift = self.t[(k + j, k + j)];
            let mut rhs: Vec<c64> = (0..k).map(|i| -self.t[(i, k + j)]).collect();
            for l in 0..j {
                let t_lj = self.t[(k + l, k + j)];
                if t_lj != zero {
                    for i in 0..k {
                        rhs[i] += y[(i, l)] * t_lj;
                    }
                }
            }
            // (t11 - shift) is upper triangular
            for i in (0..k).rev() {
                let mut s = rhs[i];
                for c in i + 1..k {
                    s -= self.t[(i, c)] * y[(c, j)];
                }
                y[(i, j)] = s / (self.t[(i, i)] - shift);
            }
        }
        // r = q1ᴴ - y q2ᴴ  (k x n)
        let mut r = Mat::<c64>::zeros(k, n);
        for i in 0..k {
            for c in 0..n {
                let mut s = self.q[(c, i)].conj();
                for l in 0..m {
                    s -= y[(i, l)] * self.q[(c, k + l)].conj();
                }
                r[(i, c)] = s;
            }
        }
        let q1 = self.q.subcols(0, k).to_owned();
        &q1 * &r
    }
}

/// Computes the ordered Schur form, moving eigenvalues for which `select`
/// holds to the leading block.
pub fn ordered_schur(a: &Mat<f64>, select: impl Fn(c64) -> bool) -> Result<OrderedSchur> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape("Schur of a non-square matrix".into()));
    }
    let dm = DMatrix::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let schur = nalgebra::linalg::Schur::try_new(dm, f64::EPSILON, 100 * n.max(10))
        .ok_or_else(|| Error::Eigen("real Schur iteration did not converge".into()))?;
    let (qr, tr) = schur.unpack();
    let mut q = Mat::from_fn(n, n, |i, j| c64::new(qr[(i, j)], 0.0));
    let mut t = Mat::from_fn(n, n, |i, j| c64::new(tr[(i, j)], 0.0));
    split_real_blocks(&mut t, &mut q);
    let mut k = 0;
    for i in 0..n {
        if select(t[(i, i)]) {
            let mut pos = i;
            while pos > k {
                swap_adjacent(&mut t, &mut q, pos - 1);
                pos -= 1;
            }
            k += 1;
        }
    }
    Ok(OrderedSchur { q, t, k })
}

fn split_real_blocks(t: &mut CMat, q: &mut CMat) {
    let n = t.nrows();
    let mut k = 0;
    while k + 1 < n {
        let sub = t[(k + 1, k)].norm();
        let scale = t[(k, k)].norm() + t[(k + 1, k + 1)].norm();
        if sub <= f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
            t[(k + 1, k)] = c64::new(0.0, 0.0);
            k += 1;
            continue;
        }
        let (a, b, c, d) = (t[(k, k)], t[(k, k + 1)], t[(k + 1, k)], t[(k + 1, k + 1)]);
        let tr = a + d;
        let det = a * d - b * c;
        let disc = (tr * tr / 4.0 - det).sqrt();
        let lambda = tr / 2.0 + disc;
        // eigenvector of the block for lambda
        let v1 = [b, lambda - a];
        let v2 = [lambda - d, c];
        let n1 = (v1[0].norm_sqr() + v1[1].norm_sqr()).sqrt();
        let n2 = (v2[0].norm_sqr() + v2[1].norm_sqr()).sqrt();
        let (x, nx) = if n1 >= n2 { (v1, n1) } else { (v2, n2) };
        let x = [x[0] / nx, x[1] / nx];
        // unitary g = [x, x_perp]
        let g = [[x[0], -x[1].conj()], [x[1], x[0].conj()]];
        // t <- gᴴ t g on rows/cols k, k+1
        for j in 0..n {
            let r0 = t[(k, j)];
            let r1 = t[(k + 1, j)];
            t[(k, j)] = g[0][0].conj() * r0 + g[1][0].conj() * r1;
            t[(k + 1, j)] = g[0][1].conj() * r0 + g[1][1].conj() * r1;
        }
        for i in 0..n {
            let c0 = t[(i, k)];
            let c1 = t[(i, k + 1)];
            t[(i, k)] = c0 * g[0][0] + c1 * g[1][0];
            t[(i, k + 1)] = c0 * g[0][1] + c1 * g[1][1];
            let q0 = q[(i, k)];
            let q1 = q[(i, k + 1)];
            q[(i, k)] = q0 * g[0][0] + q1 * g[1][0];
            q[(i, k + 1)] = q0 * g[0][1] + q1 * g[1][1];
        }
        t[(k + 1, k)] = c64::new(0.0, 0.0);
        k += 2;
    }
}

/// Plane rotation with real cosine: `[c s; -s̄ c] [f; g] = [r; 0]`.
fn givens(f: c64, g: c64) -> (f64, c64) {
    let zero = c64::new(0.0, 0.0);
    if g == zero {
        return (1.0, zero);
    }
    if f == zero {
        return (0.0, g.conj() / g.norm());
    }
    let f1 = f.norm();
    let g1 = g.norm();
    let d = f1.hypot(g1);
    (f1 / d, (f / f1) * g.conj() / d)
}

/// Swaps the diagonal entries at `k` and `k + 1` of an upper triangular `t`.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, k: usize) {
    let n = t.nrows();
    let t11 = t[(k, k)];
    let t22 = t[(k + 1, k + 1)];
    let (c, s) = givens(t[(k, k + 1)], t22 - t11);
    for j in k + 2..n {
        let x = t[(k, j)];
        let y = t[(k + 1, j)];
        t[(k, j)] = x * c + s * y;
        t[(k + 1, j)] = y * c - s.conj() * x;
    }
    let sc = s.conj();
    for i in 0..k {
        let x = t[(i, k)];
        let y = t[(i, k + 1)];
        t[(i, k)] = x * c + sc * y;
        t[(i, k + 1)] = y * c - sc.conj() * x;
    }
    t[(k, k)] = t22;
    t[(k + 1, k + 1)] = t11;
    for i in 0..n {
        let x = q[(i, k)];
        let y = q[(i, k + 1)];
        q[(i, k)] = x * c + sc * y;
        q[(i, k + 1)] = y * c - sc.conj() * x;
    }
}
