//! Shift-invert Arnoldi for the rightmost eigenvalues of a large real
//! operator.
//!
//! The caller supplies `x ↦ (A - σ)⁻¹ x` for a real shift `σ` placed at or to
//! the right of the wanted eigenvalues. Ritz values `μ` of the inverted
//! operator map back to `λ = σ + 1/μ`. Restarts are explicit: when too few
//! Ritz pairs converge the Krylov dimension is doubled and the run repeated.

use faer::{c64, Mat};

use super::{cnorm2, CMat};
use crate::error::{Error, Result};

pub trait ShiftInvertOp {
    fn dim(&self) -> usize;
    fn shift(&self) -> f64;
    /// `(A - σ)⁻¹ x`.
    fn solve(&self, x: &[f64]) -> Vec<f64>;
    /// `A x`, used for the residual check of the returned pairs.
    fn apply(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone)]
pub struct ArnoldiOptions {
    pub n_wanted: usize,
    pub krylov_dim: usize,
    pub max_krylov_dim: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            n_wanted: 8,
            krylov_dim: 60,
            max_krylov_dim: 480,
            tol: 1e-8,
            seed: 1,
        }
    }
}

pub struct ArnoldiResult {
    pub values: Vec<c64>,
    pub vectors: CMat,
    pub residuals: Vec<f64>,
    pub krylov_dim: usize,
}

fn start_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
    (0..n)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
        .collect()
}

/// Returns up to `n_wanted` eigenpairs with the largest real parts among the
/// converged Ritz pairs.
pub fn rightmost_eigenpairs(op: &dyn ShiftInvertOp, opts: &ArnoldiOptions) -> Result<ArnoldiResult> {
    let n = op.dim();
    let mut m = opts.krylov_dim.max(2 * opts.n_wanted + 10).min(n);
    loop {
        let res = arnoldi_once(op, m, opts)?;
        let enough = res.values.len() >= opts.n_wanted.min(n);
        if enough || m >= opts.max_krylov_dim.min(n) {
            if !enough {
                return Err(Error::Eigen(format!(
                    "Arnoldi converged {} of {} wanted eigenpairs at Krylov dimension {m}",
                    res.values.len(),
                    opts.n_wanted
                )));
            }
            return Ok(res);
        }
        m = (2 * m).min(opts.max_krylov_dim).min(n);
    }
}

fn arnoldi_once(op: &dyn ShiftInvertOp, m: usize, opts: &ArnoldiOptions) -> Result<ArnoldiResult> {
    let n = op.dim();
    // one application maps the start vector into the operator's range
    // (for saddle-point operators this removes the gradient component)
    let mut v0 = op.solve(&start_vector(n, opts.seed));
    let nv = super::norm2(&v0);
    if nv == 0.0 {
        return Err(Error::Eigen("degenerate Arnoldi start vector".into()));
    }
    v0.iter_mut().for_each(|x| *x /= nv);
    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut h = Mat::<f64>::zeros(m + 1, m);
    let mut steps = m;
    for j in 0..m {
        let mut w = op.solve(&basis[j]);
        for _ in 0..2 {
            for (i, vi) in basis.iter().enumerate() {
                let c = super::dot(&w, vi);
                h[(i, j)] += c;
                w.iter_mut().zip(vi).for_each(|(a, b)| *a -= c * b);
            }
        }
        let beta = super::norm2(&w);
        h[(j + 1, j)] = beta;
        if beta < 1e-14 {
            steps = j + 1;
            break;
        }
        w.iter_mut().for_each(|x| *x /= beta);
        basis.push(w);
    }
    let hm = h.submatrix(0, 0, steps, steps).to_owned();
    let evd = hm
        .eigen()
        .map_err(|e| Error::Eigen(format!("Hessenberg eigensolve: {e:?}")))?;
    let sigma = op.shift();
    let mut found: Vec<(c64, Vec<c64>, f64)> = Vec::new();
    for i in 0..steps {
        let mu = evd.S()[i];
        if mu.norm() < 1e-300 {
            continue;
        }
        let lambda = c64::new(sigma, 0.0) + c64::new(1.0, 0.0) / mu;
        let y: Vec<c64> = (0..steps).map(|r| evd.U()[(r, i)]).collect();
        let mut x = vec![c64::new(0.0, 0.0); n];
        for (r, yr) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&basis[r]) {
                *xi += yr * vi;
            }
        }
        let nx = cnorm2(&x);
        x.iter_mut().for_each(|z| *z /= nx);
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let ar = op.apply(&re);
        let ai = op.apply(&im);
        let resid = (0..n)
            .map(|k| (c64::new(ar[k], ai[k]) - lambda * x[k]).norm_sqr())
            .sum::<f64>()
            .sqrt();
        let scale = lambda.norm().max(1.0);
        if resid <= opts.tol * scale {
            found.push((lambda, x, resid / scale));
        }
    }
    found.sort_by(|a, b| b.0.re.partial_cmp(&a.0.re).unwrap_or(std::cmp::Ordering::Equal));
    found.truncate(opts.n_wanted);
    let vectors = Mat::from_fn(n, found.len(), |i, j| found[j].1[i]);
    Ok(ArnoldiResult {
        values: found.iter().map(|f| f.0).collect(),
        residuals: found.iter().map(|f| f.2).collect(),
        vectors,
        krylov_dim: steps,
    })
}

/// Shift-invert operator for a dense matrix, mainly for cross-checks.
pub struct DenseShiftInvert {
    a: Mat<f64>,
    lu: faer::linalg::solvers::PartialPivLu<f64>,
    sigma: f64,
}

impl DenseShiftInvert {
    pub fn new(a: Mat<f64>, sigma: f64) -> Self {
        let n = a.nrows();
        let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] - if i == j { sigma } else { 0.0 });
        let lu = shifted.partial_piv_lu();
        Self { a, lu, sigma }
    }
}

impl ShiftInvertOp for DenseShiftInvert {
    fn dim(&self) -> usize {
        self.a.nrows()
    }
    fn shift(&self) -> f64 {
        self.sigma
    }
    fn solve(&self, x: &[f64]) -> Vec<f64> {
        use faer::linalg::solvers::Solve;
        let rhs = Mat::from_fn(x.len(), 1, |i, _| x[i]);
        let y = self.lu.solve(&rhs);
        (0..x.len()).map(|i| y[(i, 0)]).collect()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        super::matvec(&self.a, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_rightmost_of_a_normal_matrix() {
        let n = 200;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                -(i as f64) * 0.5 + 1.0
            } else if j == i + 1 {
                0.3
            } else {
                0.0
            }
        });
        let op = DenseShiftInvert::new(a, 2.0);
        let res = rightmost_eigenpairs(&op, &ArnoldiOptions { n_wanted: 5, ..Default::default() }).unwrap();
        let want = [1.0, 0.5, 0.0, -0.5, -1.0];
        for (z, w) in res.values.iter().zip(want) {
            assert!((z.re - w).abs() < 1e-8 && z.im.abs() < 1e-8, "{z} vs {w}");
        }
    }
}
