//! Discrete norms: cell-averaged L^q, a first-order Sobolev norm, a
//! K-functional surrogate for the Besov trace space between L^q and
//! W^{2,q}, and the empirical maximal-regularity constant.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{matvec, norm2};
use crate::ops::{Layout, Reduced};

/// Points of the geometric grid on `[h², 1]`.
pub const T_GRID: usize = 32;

/// Exponents of the space-time norms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormSuite {
    pub q: f64,
    pub p: f64,
    pub qprime: f64,
    pub theta: f64,
}

impl NormSuite {
    /// Requires `q > d` and `1 < p < 2q/(2q−1)`.
    pub fn new(q: f64, p: f64, d: usize) -> Result<Self> {
        if !(q > d as f64) {
            return Err(Error::NormGate(format!("q > d violated (q = {q}, d = {d})")));
        }
        let bound = 2.0 * q / (2.0 * q - 1.0);
        if !(p > 1.0 && p < bound) {
            return Err(Error::NormGate(format!(
                "1 < p < 2q/(2q−1) violated (p = {p}, 2q/(2q−1) = {bound:.6})"
            )));
        }
        Ok(Self { q, p, qprime: q / (q - 1.0), theta: 1.0 - 1.0 / p })
    }
}

/// `(Σ |v|^q · vol)^{1/q}` over pointwise magnitudes.
pub fn lq_norm(mags: &[f64], cell_volume: f64, q: f64) -> f64 {
    if q.is_infinite() {
        return mags.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let s: f64 = mags.iter().map(|v| v.abs().powf(q)).sum();
    (s * cell_volume).powf(1.0 / q)
}

/// L^q norm of an interior face field through cell-centered speeds.
pub fn field_lq(layout: &Layout, x: &[f64], q: f64) -> f64 {
    lq_norm(&layout.cell_speeds(&x[..layout.n_int]), layout.hx * layout.hy, q)
}

/// Magnitude of the cell-centered velocity gradient by centered differences
/// of the cell averages, one-sided at the walls.
fn gradient_magnitudes(layout: &Layout, x: &[f64]) -> Vec<f64> {
    let (nx, ny) = (layout.nx, layout.ny);
    let mut u = vec![0.0; layout.n_cells];
    let mut v = vec![0.0; layout.n_cells];
    for c in 0..layout.n_cells {
        let (i, j) = ((c % nx) as isize, (c / nx) as isize);
        u[c] = 0.5 * (layout.u_at(x, i, j) + layout.u_at(x, i + 1, j));
        v[c] = 0.5 * (layout.v_at(x, i, j) + layout.v_at(x, i, j + 1));
    }
    let diff = |f: &[f64], i: usize, j: usize, axis: usize| -> f64 {
        let (n, h, idx) = if axis == 0 {
            (nx, layout.hx, Box::new(move |k: usize| k + nx * j) as Box<dyn Fn(usize) -> usize>)
        } else {
            (ny, layout.hy, Box::new(move |k: usize| i + nx * k) as Box<dyn Fn(usize) -> usize>)
        };
        let k = if axis == 0 { i } else { j };
        if k == 0 {
            (f[idx(1)] - f[idx(0)]) / h
        } else if k == n - 1 {
            (f[idx(n - 1)] - f[idx(n - 2)]) / h
        } else {
            (f[idx(k + 1)] - f[idx(k - 1)]) / (2.0 * h)
        }
    };
    (0..layout.n_cells)
        .map(|c| {
            let (i, j) = (c % nx, c / nx);
            let g = [diff(&u, i, j, 0), diff(&u, i, j, 1), diff(&v, i, j, 0), diff(&v, i, j, 1)];
            g.iter().map(|a| a * a).sum::<f64>().sqrt()
        })
        .collect()
}

/// `(‖v‖_q^q + ‖∇v‖_q^q)^{1/q}` of an interior face field.
pub fn w1q_norm(layout: &Layout, x: &[f64], q: f64) -> f64 {
    let vol = layout.hx * layout.hy;
    let a = lq_norm(&layout.cell_speeds(&x[..layout.n_int]), vol, q);
    let b = lq_norm(&gradient_magnitudes(layout, &x[..layout.n_int]), vol, q);
    (a.powf(q) + b.powf(q)).powf(1.0 / q)
}

/// Eigendecomposition of the reduced Stokes operator lifted to faces.
pub struct StokesSpectrum {
    /// Ascending eigenvalues.
    pub mu: Vec<f64>,
    /// Reduced coordinates of the eigenvectors (columns).
    pub v: Mat<f64>,
    /// Face fields of the eigenvectors, `Z V`.
    pub zv: Mat<f64>,
}

impl StokesSpectrum {
    pub fn new(red: &Reduced) -> Result<Self> {
        let evd = red
            .stokes
            .self_adjoint_eigen(faer::Side::Lower)
            .map_err(|e| Error::Eigen(format!("Stokes eigendecomposition: {e:?}")))?;
        let n = red.dim();
        let s = evd.S();
        let mu: Vec<f64> = (0..n).map(|i| s[i]).collect();
        let v = evd.U().to_owned();
        let zv = &red.z * &v;
        Ok(Self { mu, v, zv })
    }
}

/// Norm evaluation on reduced coordinates for one discretization.
pub struct Norms {
    pub suite: NormSuite,
    pub layout: Layout,
    pub stokes: StokesSpectrum,
    z: Mat<f64>,
    tgrid: Vec<f64>,
}

impl Norms {
    pub fn new(suite: NormSuite, layout: &Layout, red: &Reduced) -> Result<Self> {
        let stokes = StokesSpectrum::new(red)?;
        let h2 = layout.hx * layout.hy;
        let tgrid = (0..T_GRID)
            .map(|j| h2 * (1.0 / h2).powf(j as f64 / (T_GRID - 1) as f64))
            .collect();
        Ok(Self { suite, layout: layout.clone(), stokes, z: red.z.clone(), tgrid })
    }

    pub fn tgrid(&self) -> &[f64] {
        &self.tgrid
    }

    fn area(&self) -> f64 {
        self.layout.hx * self.layout.hy
    }

    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        matvec(&self.z, x)
    }

    /// Face-weighted L² norm, `h‖x‖` for orthonormal `Z`.
    pub fn l2(&self, x: &[f64]) -> f64 {
        self.area().sqrt() * norm2(x)
    }

    pub fn lq(&self, x: &[f64]) -> f64 {
        field_lq(&self.layout, &self.lift(x), self.suite.q)
    }

    fn leg(&self, face: &[f64], coef: &[f64]) -> f64 {
        if self.suite.q == 2.0 {
            self.area().sqrt() * norm2(coef)
        } else {
            field_lq(&self.layout, face, self.suite.q)
        }
    }

    /// W^{2,q} surrogate `‖g‖ + ‖A g‖` with the Stokes operator `A`.
    pub fn w2q(&self, x: &[f64]) -> f64 {
        let c = crate::linalg::matvec_t(&self.stokes.v, x);
        let ac: Vec<f64> = c.iter().zip(&self.stokes.mu).map(|(a, m)| a * m).collect();
        let face = matvec(&self.stokes.zv, &c);
        let aface = matvec(&self.stokes.zv, &ac);
        self.leg(&face, &c) + self.leg(&aface, &ac)
    }

    /// K(t_j, g) on the geometric grid, from the best of the spectral
    /// splitting at cutoff `μ ≤ 1/t` and the two trivial splittings.
    pub fn k_functional(&self, x: &[f64]) -> Vec<f64> {
        let st = &self.stokes;
        let n = st.mu.len();
        let n_int = st.zv.nrows();
        let c = crate::linalg::matvec_t(&st.v, x);
        let full = matvec(&st.zv, &c);
        let x_norm = self.leg(&full, &c);
        let ac: Vec<f64> = c.iter().zip(&st.mu).map(|(a, m)| a * m).collect();
        let y_norm = self.leg(&matvec(&st.zv, &ac), &ac);
        let mut low = vec![0.0; n_int];
        let mut alow = vec![0.0; n_int];
        let mut next = 0;
        let mut out = vec![0.0; self.tgrid.len()];
        // descending t: the low-mode set only grows
        for (j, &t) in self.tgrid.iter().enumerate().rev() {
            while next < n && st.mu[next] <= 1.0 / t {
                let col = st.zv.col(next);
                for i in 0..n_int {
                    low[i] += c[next] * col[i];
                    alow[i] += ac[next] * col[i];
                }
                next += 1;
            }
            let high: Vec<f64> = full.iter().zip(&low).map(|(a, b)| a - b).collect();
            let split = self.leg(&high, &c[next..]) + t * self.leg(&alow, &ac[..next]);
            out[j] = split.min(x_norm).min(t * y_norm);
        }
        out
    }

    /// `(Σ_j (t_j^{−θ} K(t_j, g))^p Δlog t)^{1/p}`.
    pub fn besov(&self, x: &[f64]) -> f64 {
        let k = self.k_functional(x);
        let dlog = (self.tgrid[1] / self.tgrid[0]).ln();
        let (p, theta) = (self.suite.p, self.suite.theta);
        let s: f64 = self
            .tgrid
            .iter()
            .zip(&k)
            .map(|(t, kv)| (t.powf(-theta) * kv).powf(p) * dlog)
            .sum();
        s.powf(1.0 / p)
    }

    /// `[l2, lq, besov]`.
    pub fn all(&self, x: &[f64]) -> [f64; 3] {
        [self.l2(x), self.lq(x), self.besov(x)]
    }
}

/// Composite trapezoid `(∫ f^p)^{1/p}` on a uniform grid.
pub fn lp_time(values: &[f64], dt: f64, p: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len();
    let s: f64 = values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            w * v.abs().powf(p)
        })
        .sum();
    (s * dt).powf(1.0 / p)
}

#[derive(Debug, Clone, Serialize)]
pub struct MaxRegResult {
    pub constant: f64,
    pub ratios: Vec<f64>,
    pub skipped: usize,
    /// Largest `sup_t ‖η(t)‖_trace / (‖η'‖ + ‖𝔸η‖)`.
    pub embedding: f64,
}

/// Forcing shapes with band-limited amplitudes
/// `a_s(t) = Σ_m r_{s,m} sin(2πmt/T + φ_{s,m})`, `m = 1..=modes`.
#[derive(Debug, Clone)]
pub struct Forcing {
    pub shapes: Vec<Vec<f64>>,
    coef: Vec<Vec<(f64, f64)>>,
    t_end: f64,
}

impl Forcing {
    pub fn random(shapes: Vec<Vec<f64>>, modes: usize, t_end: f64, rng: &mut impl Rng) -> Self {
        let coef = shapes
            .iter()
            .map(|_| {
                (0..modes)
                    .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)))
                    .collect()
            })
            .collect();
        Self { shapes, coef, t_end }
    }

    pub fn zero(n: usize, t_end: f64) -> Self {
        Self { shapes: vec![vec![0.0; n]], coef: vec![vec![]], t_end }
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let n = self.shapes.first().map_or(0, Vec::len);
        let mut f = vec![0.0; n];
        for (shape, coef) in self.shapes.iter().zip(&self.coef) {
            let a: f64 = coef
                .iter()
                .enumerate()
                .map(|(m, (r, ph))| r * (std::f64::consts::TAU * (m + 1) as f64 * t / self.t_end + ph).sin())
                .sum();
            for (fi, si) in f.iter_mut().zip(shape) {
                *fi += a * si;
            }
        }
        f
    }
}

/// Ratios `(‖η'‖ + ‖𝔸η‖)/‖f‖` in `L^p(0,T)` of the space norm `norm` for
/// `η' = 𝔸η + f`, `η(0) = 0`, integrated by Crank–Nicolson.
pub fn maxreg_ratio(
    af: &Mat<f64>,
    forcing: &Forcing,
    norm: &dyn Fn(&[f64]) -> f64,
    trace_norm: &dyn Fn(&[f64]) -> f64,
    p: f64,
    steps: usize,
) -> Result<Option<(f64, f64)>> {
    let n = af.nrows();
    let dt = forcing.t_end / steps as f64;
    let lhs = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 0.5 * dt * af[(i, j)]);
    let rhs_m = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.5 * dt * af[(i, j)]);
    let lu = lhs.partial_piv_lu();
    let mut eta = vec![0.0; n];
    let mut f_prev = forcing.at(0.0);
    let (mut fn_, mut dn, mut an) = (Vec::new(), Vec::new(), Vec::new());
    let mut sup_trace: f64 = 0.0;
    let record = |eta: &[f64], f: &[f64], fn_: &mut Vec<f64>, dn: &mut Vec<f64>, an: &mut Vec<f64>| {
        let a_eta = matvec(af, eta);
        let d: Vec<f64> = a_eta.iter().zip(f).map(|(a, b)| a + b).collect();
        fn_.push(norm(f));
        dn.push(norm(&d));
        an.push(norm(&a_eta));
    };
    record(&eta, &f_prev, &mut fn_, &mut dn, &mut an);
    for s in 1..=steps {
        let f_next = forcing.at(s as f64 * dt);
        let mut r = matvec(&rhs_m, &eta);
        for i in 0..n {
            r[i] += 0.5 * dt * (f_prev[i] + f_next[i]);
        }
        let rhs = Mat::from_fn(n, 1, |i, _| r[i]);
        let sol = faer::linalg::solvers::Solve::solve(&lu, &rhs);
        eta = (0..n).map(|i| sol[(i, 0)]).collect();
        if eta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation("maximal-regularity solve diverged".into()));
        }
        record(&eta, &f_next, &mut fn_, &mut dn, &mut an);
        sup_trace = sup_trace.max(trace_norm(&eta));
        f_prev = f_next;
    }
    let fnorm = lp_time(&fn_, dt, p);
    if fnorm == 0.0 {
        return Ok(None);
    }
    let mr = lp_time(&dn, dt, p) + lp_time(&an, dt, p);
    Ok(Some((mr / fnorm, if mr > 0.0 { sup_trace / mr } else { 0.0 })))
}

/// Largest maximal-regularity ratio over `n_samples` random forcings built
/// from `shapes` (reduced coordinates). Zero forcings are skipped.
#[allow(clippy::too_many_arguments)]
pub fn maxreg_constant(
    af: &Mat<f64>,
    shapes: &[Vec<f64>],
    norm: &dyn Fn(&[f64]) -> f64,
    trace_norm: &dyn Fn(&[f64]) -> f64,
    p: f64,
    n_samples: usize,
    t_end: f64,
    steps: usize,
    seed: u64,
) -> Result<MaxRegResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::new();
    let mut skipped = 0;
    let mut embedding: f64 = 0.0;
    for _ in 0..n_samples {
        let picks: Vec<Vec<f64>> = (0..shapes.len().min(3))
            .map(|_| shapes[rng.gen_range(0..shapes.len())].clone())
            .collect();
        let forcing = Forcing::random(picks, 4, t_end, &mut rng);
        match maxreg_ratio(af, &forcing, norm, trace_norm, p, steps)? {
            Some((r, e)) => {
                ratios.push(r);
                embedding = embedding.max(e);
            }
            None => skipped += 1,
        }
    }
    let constant = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(MaxRegResult { constant, ratios, skipped, embedding })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainMesh;
    use crate::ops::adjoint::random_solenoidal;
    use crate::ops::{Layout, Operators};

    fn setup(n: usize, q: f64, p: f64) -> (Layout, Reduced, Norms) {
        setup_with(n, NormSuite::new(q, p, 2).unwrap())
    }

    fn setup_with(n: usize, suite: NormSuite) -> (Layout, Reduced, Norms) {
        let mesh = DomainMesh::build(&[n, n], &[1.0, 1.0], 2).unwrap();
        let l = Layout::new(&mesh).unwrap();
        let ops = Operators::assemble(&mesh, 0.1, &vec![0.0; l.n_ext()]).unwrap();
        let red = Reduced::new(&ops).unwrap();
        let norms = Norms::new(suite, &l, &red).unwrap();
        (l, red, norms)
    }

    #[test]
    fn gate() {
        assert!(NormSuite::new(4.0, 9.0 / 8.0, 2).is_ok());
        let e = NormSuite::new(4.0, 1.2, 2).unwrap_err().to_string();
        assert!(e.contains("p < 2q/(2q−1)"), "{e}");
        assert!(NormSuite::new(2.0, 1.1, 2).is_err());
        assert!(NormSuite::new(4.0, 1.0, 2).is_err());
    }

    #[test]
    fn constant_magnitudes() {
        let mags = vec![3.0; 100];
        for q in [1.0, 2.0, 4.0, 7.5] {
            assert!((lq_norm(&mags, 0.01, q) - 3.0).abs() < 1e-13);
        }
    }

    #[test]
    fn l2_matches_weighted_euclidean() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w = 1.0 / 64.0;
        let direct = (v.iter().map(|a| a * a).sum::<f64>() * w).sqrt();
        assert!((lq_norm(&v, w, 2.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn holder_on_unit_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let v: Vec<f64> = (0..256).map(|_| rng.gen_range(-2.0..2.0)).collect();
            assert!(lq_norm(&v, 1.0 / 256.0, 2.0) <= lq_norm(&v, 1.0 / 256.0, 4.0) + 1e-14);
        }
    }

    #[test]
    fn norm_axioms() {
        let (l, red, norms) = setup(12, 4.0, 9.0 / 8.0);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..5 {
            let xs: Vec<Vec<f64>> =
                (0..2).map(|_| red.restrict(&random_solenoidal(&l, &mut rng, 3))).collect();
            let sum: Vec<f64> = xs[0].iter().zip(&xs[1]).map(|(a, b)| a + b).collect();
            let neg: Vec<f64> = xs[0].iter().map(|a| -2.5 * a).collect();
            for f in [Norms::l2 as fn(&Norms, &[f64]) -> f64, Norms::lq, Norms::besov, Norms::w2q] {
                let (a, b, s) = (f(&norms, &xs[0]), f(&norms, &xs[1]), f(&norms, &sum));
                assert!(a >= 0.0 && s <= a + b + 1e-10 * (a + b));
                assert!((f(&norms, &neg) - 2.5 * a).abs() <= 1e-10 * a);
            }
        }
        assert_eq!(norms.besov(&vec![0.0; red.dim()]), 0.0);
    }

    #[test]
    fn besov_sandwich() {
        let hilbert = NormSuite { q: 2.0, p: 1.2, qprime: 2.0, theta: 1.0 - 1.0 / 1.2 };
        for suite in [hilbert, NormSuite::new(4.0, 1.1, 2).unwrap()] {
            let (l, red, norms) = setup_with(16, suite);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let (mut lo, mut hi): (f64, f64) = (0.0, 0.0);
            for _ in 0..20 {
                let x = red.restrict(&random_solenoidal(&l, &mut rng, 4));
                let b = norms.besov(&x);
                lo = lo.max(norms.lq(&x) / b);
                hi = hi.max(b / norms.w2q(&x));
            }
            assert!(lo.is_finite() && hi.is_finite() && lo < 10.0 && hi < 10.0, "{lo} {hi}");
        }
    }

    #[test]
    fn scalar_decay_maxreg_bound() {
        let af = Mat::from_fn(1, 1, |_, _| -1.0);
        let norm = |x: &[f64]| norm2(x);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let f = Forcing::random(vec![vec![1.0]], 4, 10.0, &mut rng);
            let (r, _) = maxreg_ratio(&af, &f, &norm, &norm, 2.0, 4000).unwrap().unwrap();
            assert!(r <= 2.0 + 1e-3, "{r}");
        }
        let zero = Forcing::zero(1, 1.0);
        assert!(maxreg_ratio(&af, &zero, &norm, &norm, 2.0, 100).unwrap().is_none());
        let res = maxreg_constant(&af, &[vec![0.0]], &norm, &norm, 2.0, 3, 1.0, 50, 1).unwrap();
        assert_eq!(res.skipped, 3);
    }

    #[test]
    fn trapezoid_time_norm() {
        let v: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        // (∫₀¹ t² dt)^{1/2}
        assert!((lp_time(&v, 1e-3, 2.0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
    }
}
