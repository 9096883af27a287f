//! Spectrum of the reduced Oseen operator, grouping of the unstable part,
//! biorthogonal direct/adjoint bases and the spectral projector.

use std::io::Write;

use faer::{c64, Mat};

use crate::error::{Error, Result};
use crate::linalg::arnoldi::{rightmost_eigenpairs, ArnoldiOptions, ArnoldiResult, ShiftInvertOp};
use crate::linalg::schur::ordered_schur;
use crate::linalg::sparse::{Csr, SparseLu};
use crate::linalg::{
    ccol, ccond, cfro, cidentity, cinverse, cnorm2, csingular_values, eig, from_ccols, numerical_rank,
    sort_rightmost, to_complex, CMat,
};
use crate::ops::adjoint::{green_trace, normal_component_of_normal_derivative};
use crate::ops::{Leray, Operators, Reduced};

#[derive(Debug, Clone)]
pub struct SpectralOptions {
    /// Grouping tolerance relative to the largest unstable modulus.
    pub tol_group_rel: f64,
    pub svd_tol: f64,
    pub gap_min: f64,
    pub dense_cutoff: usize,
    pub n_quad: usize,
    /// Fraction of `|Re λ_{N+1}|` withheld from `γ₀`.
    pub margin: f64,
    pub max_gram_cond: f64,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self {
            tol_group_rel: 1e-6,
            svd_tol: 1e-8,
            gap_min: 1e-4,
            dense_cutoff: 6000,
            n_quad: 64,
            margin: 0.05,
            max_gram_cond: 1e10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectorMethod {
    Schur,
    Contour,
}

impl std::str::FromStr for ProjectorMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "schur" => Ok(Self::Schur),
            "contour" => Ok(Self::Contour),
            _ => Err(Error::Config(format!("unknown projector method `{s}` (expected schur or contour)"))),
        }
    }
}

/// One distinct unstable eigenvalue.
#[derive(Debug, Clone)]
pub struct Cluster {
    pub center: c64,
    /// Columns of the unstable bases belonging to this cluster.
    pub columns: std::ops::Range<usize>,
    /// Geometric multiplicity.
    pub multiplicity: usize,
    pub diameter: f64,
    pub ambiguous: bool,
    pub defective: bool,
    /// Orthonormal basis of the adjoint eigenspace for `conj(center)`,
    /// `n_s × ℓ`. Coincides with the adjoint basis columns when the cluster
    /// is not defective.
    pub adjoint_eigvecs: CMat,
}

#[derive(Debug, Clone)]
pub struct SpectralData {
    /// All eigenvalues, rightmost first.
    pub eigenvalues: Vec<c64>,
    pub n_unstable: usize,
    /// Unstable eigenvalues in basis-column order.
    pub unstable: Vec<c64>,
    pub clusters: Vec<Cluster>,
    /// Basis of the unstable subspace, `n_s × N`.
    pub phi: CMat,
    /// Adjoint basis with `phi_adjᴴ phi = I`.
    pub phi_adj: CMat,
    /// Relative eigen-residuals of the direct and adjoint pairs.
    pub residuals: Vec<f64>,
    pub gap: f64,
    pub gamma0: f64,
    pub tol_group: f64,
}

impl SpectralData {
    pub fn n_distinct(&self) -> usize {
        self.clusters.len()
    }

    /// `K = max ℓ_i`.
    pub fn k_channels(&self) -> usize {
        self.clusters.iter().map(|c| c.multiplicity).max().unwrap_or(0)
    }

    pub fn next_stable(&self) -> Option<c64> {
        self.eigenvalues.get(self.n_unstable).copied()
    }

    /// `P_N = Φ Φ*ᴴ`.
    pub fn eigen_projector(&self) -> CMat {
        &self.phi * self.phi_adj.adjoint()
    }

    pub fn biorthogonality_error(&self) -> f64 {
        let g = self.phi_adj.adjoint() * &self.phi;
        cfro(&(g - cidentity(self.n_unstable)))
    }

    pub fn any_ambiguous(&self) -> bool {
        self.clusters.iter().any(|c| c.ambiguous)
    }

    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "re,im,unstable_flag,cluster_id,multiplicity")?;
        for (i, z) in self.eigenvalues.iter().enumerate() {
            if i < self.n_unstable {
                let (cid, c) = self
                    .clusters
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        (a.1.center - z).norm().partial_cmp(&(b.1.center - z).norm()).unwrap()
                    })
                    .expect("unstable eigenvalue without a cluster");
                writeln!(w, "{:e},{:e},1,{cid},{}", z.re, z.im, c.multiplicity)?;
            } else {
                writeln!(w, "{:e},{:e},0,-1,0", z.re, z.im)?;
            }
        }
        Ok(())
    }
}

fn unit_columns(a: &CMat) -> CMat {
    let mut out = a.clone();
    for j in 0..a.ncols() {
        let n = cnorm2(&ccol(a, j));
        if n > 0.0 {
            for i in 0..a.nrows() {
                out[(i, j)] /= n;
            }
        }
    }
    out
}

/// Rotates each column so that its largest entry is real and positive.
fn fix_phase(a: &mut CMat) {
    for j in 0..a.ncols() {
        let mut best = c64::new(0.0, 0.0);
        for i in 0..a.nrows() {
            if a[(i, j)].norm() > best.norm() * (1.0 + 1e-12) {
                best = a[(i, j)];
            }
        }
        if best.norm() == 0.0 {
            continue;
        }
        let rot = best.conj() / best.norm();
        for i in 0..a.nrows() {
            a[(i, j)] *= rot;
        }
    }
}

/// Leading `k` left singular vectors.
fn leading_left(a: &CMat, k: usize) -> Result<CMat> {
    let svd = a.thin_svd().map_err(|e| Error::Eigen(format!("svd: {e:?}")))?;
    Ok(svd.U().subcols(0, k).to_owned())
}

/// Real orthonormal basis of the span of the real and imaginary parts.
fn real_basis(a: &CMat, k: usize) -> Result<CMat> {
    let n = a.nrows();
    let m = a.ncols();
    let stacked = Mat::from_fn(n, 2 * m, |i, j| if j < m { a[(i, j)].re } else { a[(i, j - m)].im });
    let svd = stacked.thin_svd().map_err(|e| Error::Eigen(format!("svd: {e:?}")))?;
    let u = svd.U();
    let mut out = Mat::from_fn(n, k, |i, j| c64::new(u[(i, j)], 0.0));
    fix_phase(&mut out);
    Ok(out)
}

/// Groups eigenvalues (given in rightmost order) into clusters of points
/// within `tol` of the running cluster mean.
fn group(values: &[c64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<(c64, Vec<usize>)> = Vec::new();
    for (i, z) in values.iter().enumerate() {
        match groups.iter_mut().find(|g| (g.0 - z).norm() <= tol) {
            Some(g) => {
                g.1.push(i);
                let n = g.1.len() as f64;
                g.0 = g.1.iter().map(|&k| values[k]).sum::<c64>() / n;
            }
            None => groups.push((*z, vec![i])),
        }
    }
    groups.into_iter().map(|g| g.1).collect()
}

/// Dense spectral analysis of the reduced operator.
pub fn compute_spectrum(a: &Mat<f64>, opts: &SpectralOptions) -> Result<SpectralData> {
    let n = a.nrows();
    if n > opts.dense_cutoff {
        return Err(Error::Unsupported(format!(
            "state dimension {n} exceeds the dense cutoff {}; use the sparse Arnoldi path",
            opts.dense_cutoff
        )));
    }
    let (vals, vecs) = eig(a)?;
    let at = a.transpose().to_owned();
    let (vals_t, vecs_t) = eig(&at)?;

    let mut order: Vec<usize> = (0..n).collect();
    let mut sorted = vals.clone();
    sort_rightmost(&mut sorted);
    order.sort_by(|&i, &j| {
        vals[j]
            .re
            .partial_cmp(&vals[i].re)
            .unwrap()
            .then(vals[j].im.partial_cmp(&vals[i].im).unwrap())
    });
    let n_unstable = sorted.iter().filter(|z| z.re >= 0.0).count();
    if n_unstable == n && n > 0 {
        return Err(Error::Eigen("no stable eigenvalue: the spectrum lies in the closed right half-plane".into()));
    }
    let gap = if n_unstable > 0 { sorted[n_unstable - 1].re - sorted[n_unstable].re } else { f64::INFINITY };
    if n_unstable > 0 && gap < opts.gap_min {
        return Err(Error::SpectralGap { gap, required: opts.gap_min });
    }
    let gamma0 = sorted.get(n_unstable).map(|z| (1.0 - opts.margin) * z.re.abs()).unwrap_or(0.0);

    let unstable_sorted: Vec<c64> = sorted[..n_unstable].to_vec();
    let scale = unstable_sorted.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol_group = opts.tol_group_rel * scale.max(f64::MIN_POSITIVE);
    let groups = group(&unstable_sorted, tol_group);

    let mut used_t = vec![false; n];
    let mut phi_cols: Vec<Vec<c64>> = Vec::new();
    let mut adj_cols: Vec<Vec<c64>> = Vec::new();
    let mut unstable = Vec::new();
    let mut clusters = Vec::new();
    for g in &groups {
        let m = g.len();
        let members: Vec<c64> = g.iter().map(|&k| unstable_sorted[k]).collect();
        let center = members.iter().sum::<c64>() / m as f64;
        let diameter = members
            .iter()
            .flat_map(|x| members.iter().map(move |y| (x - y).norm()))
            .fold(0.0, f64::max);
        let is_real = center.im.abs() <= tol_group.max(1e-12 * scale);
        let direct = unit_columns(&from_ccols(n, &g.iter().map(|&k| ccol(&vecs, order[k])).collect::<Vec<_>>()));
        // matching adjoint eigenvectors: the m nearest unused eigenvalues of Aᵀ
        let mut cand: Vec<usize> = (0..n).filter(|&i| !used_t[i]).collect();
        cand.sort_by(|&i, &j| (vals_t[i] - center).norm().partial_cmp(&(vals_t[j] - center).norm()).unwrap());
        let picked: Vec<usize> = cand.into_iter().take(m).collect();
        for &p in &picked {
            used_t[p] = true;
        }
        let adjoint = unit_columns(&from_ccols(
            n,
            &picked.iter().map(|&k| ccol(&vecs_t, k).iter().map(|z| z.conj()).collect()).collect::<Vec<_>>(),
        ));
        let ell = numerical_rank(&csingular_values(&direct)?, opts.svd_tol).max(1);
        let ell_adj = numerical_rank(&csingular_values(&adjoint)?, opts.svd_tol).max(1);
        let defective = ell < m;

        let (mut dblock, mut yblock) = if defective {
            let radius = cluster_radius(&sorted, &members, center);
            let os = ordered_schur(a, |z| (z - center).norm() <= radius)?;
            if os.k != m {
                return Err(Error::Eigen(format!(
                    "Schur selection around {center} captured {} eigenvalues, expected {m}",
                    os.k
                )));
            }
            let q1 = os.q.subcols(0, m).to_owned();
            let p = os.projector();
            let y = p.adjoint() * &q1;
            (q1, y)
        } else {
            (direct.clone(), adjoint.clone())
        };
        if is_real {
            dblock = real_basis(&dblock, m)?;
            yblock = real_basis(&yblock, m)?;
        } else {
            fix_phase(&mut dblock);
        }
        let gram = yblock.adjoint() * &dblock;
        let gc = ccond(&gram)?;
        if !(gc <= opts.max_gram_cond) {
            return Err(Error::Biorthogonal(gc));
        }
        let ginv_h = cinverse(&gram).adjoint().to_owned();
        let yb = &yblock * &ginv_h;
        let adjoint_eigvecs = if defective {
            leading_left(&adjoint, ell_adj.min(m))?
        } else {
            yb.clone()
        };
        let start = phi_cols.len();
        for j in 0..m {
            phi_cols.push(ccol(&dblock, j));
            adj_cols.push(ccol(&yb, j));
            unstable.push(members[j]);
        }
        clusters.push(Cluster {
            center,
            columns: start..start + m,
            multiplicity: ell,
            diameter,
            ambiguous: diameter > 10.0 * tol_group,
            defective,
            adjoint_eigvecs,
        });
    }

    let mut phi = from_ccols(n, &phi_cols);
    let mut phi_adj = from_ccols(n, &adj_cols);
    if n_unstable == 0 {
        phi = Mat::zeros(n, 0);
        phi_adj = Mat::zeros(n, 0);
    }
    enforce_conjugate_pairs(&mut clusters, &mut phi, &mut phi_adj, &mut unstable, tol_group.max(1e-12 * scale));

    let mut residuals = Vec::new();
    let ac = to_complex(a);
    for c in &clusters {
        if c.defective {
            continue;
        }
        for j in c.columns.clone() {
            let lam = unstable[j];
            let v = ccol(&phi, j);
            let av = crate::linalg::cmatvec(&ac, &v);
            let r: Vec<c64> = av.iter().zip(&v).map(|(x, y)| x - lam * y).collect();
            residuals.push(cnorm2(&r) / cnorm2(&v));
            let w = ccol(&phi_adj, j);
            let atw = crate::linalg::cmatvec(&ac.transpose().to_owned(), &w);
            let r: Vec<c64> = atw.iter().zip(&w).map(|(x, y)| x - lam.conj() * y).collect();
            residuals.push(cnorm2(&r) / cnorm2(&w));
        }
    }

    Ok(SpectralData {
        eigenvalues: sorted,
        n_unstable,
        unstable,
        clusters,
        phi,
        phi_adj,
        residuals,
        gap,
        gamma0,
        tol_group,
    })
}

/// Half the distance from a cluster center to the nearest eigenvalue
/// outside the cluster.
fn cluster_radius(all: &[c64], members: &[c64], center: c64) -> f64 {
    let spread = members.iter().map(|z| (z - center).norm()).fold(0.0, f64::max);
    let mut nearest = f64::INFINITY;
    let mut skipped = vec![false; members.len()];
    for z in all {
        if let Some(k) = members.iter().enumerate().position(|(k, m)| !skipped[k] && m == z) {
            skipped[k] = true;
            continue;
        }
        nearest = nearest.min((z - center).norm());
    }
    (0.5 * nearest).max(2.0 * spread)
}

/// Replaces the blocks of clusters in the lower half-plane by the conjugates
/// of their upper partners so that conjugate symmetry holds exactly.
fn enforce_conjugate_pairs(clusters: &mut [Cluster], phi: &mut CMat, phi_adj: &mut CMat, unstable: &mut [c64], tol: f64) {
    let snapshot: Vec<(c64, std::ops::Range<usize>, CMat)> =
        clusters.iter().map(|c| (c.center, c.columns.clone(), c.adjoint_eigvecs.clone())).collect();
    for c in clusters.iter_mut() {
        if c.center.im >= -tol {
            continue;
        }
        let Some((pc, pcols, padj)) = snapshot
            .iter()
            .find(|s| s.0.im > tol && (s.0.conj() - c.center).norm() <= 10.0 * tol.max(1e-9 * s.0.norm()) && s.1.len() == c.columns.len())
        else {
            continue;
        };
        for (dst, src) in c.columns.clone().zip(pcols.clone()) {
            for i in 0..phi.nrows() {
                phi[(i, dst)] = phi[(i, src)].conj();
                phi_adj[(i, dst)] = phi_adj[(i, src)].conj();
            }
            unstable[dst] = unstable[src].conj();
        }
        c.center = pc.conj();
        c.adjoint_eigvecs = Mat::from_fn(padj.nrows(), padj.ncols(), |i, j| padj[(i, j)].conj());
    }
}

/// Spectral projector onto the eigenvalues with nonnegative real part.
pub fn spectral_projector(a: &Mat<f64>, spec: &SpectralData, method: ProjectorMethod, opts: &SpectralOptions) -> Result<CMat> {
    let n = a.nrows();
    if spec.n_unstable == 0 {
        return Ok(Mat::zeros(n, n));
    }
    match method {
        ProjectorMethod::Schur => {
            let os = ordered_schur(a, |z| z.re >= 0.0)?;
            if os.k != spec.n_unstable {
                return Err(Error::Eigen(format!(
                    "ordered Schur selected {} eigenvalues, expected {}",
                    os.k, spec.n_unstable
                )));
            }
            Ok(os.projector())
        }
        ProjectorMethod::Contour => contour_projector(a, spec, opts.n_quad, crate::ops::COND_MAX),
    }
}

/// Trapezoid quadrature of `(1/2πi)∮(zI − A)⁻¹dz` over one circle per
/// distinct unstable eigenvalue.
pub fn contour_projector(a: &Mat<f64>, spec: &SpectralData, n_quad: usize, cond_max: f64) -> Result<CMat> {
    let n = a.nrows();
    let mut p = Mat::<c64>::zeros(n, n);
    let ac = to_complex(a);
    let a_norm1 = norm_1(&ac);
    for c in &spec.clusters {
        let members: Vec<c64> = spec.unstable[c.columns.clone()].to_vec();
        let mut radius = cluster_radius(&spec.eigenvalues, &members, c.center);
        let mut attempt = 0;
        let part = loop {
            match circle_quadrature(&ac, c.center, radius, n_quad, cond_max, a_norm1) {
                Ok(part) => break part,
                Err(e) if attempt == 0 => {
                    let _ = e;
                    radius *= 0.5;
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        };
        p += part;
    }
    Ok(p)
}

fn norm_1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn circle_quadrature(ac: &CMat, center: c64, radius: f64, n_quad: usize, cond_max: f64, a_norm1: f64) -> Result<CMat> {
    let n = ac.nrows();
    let mut acc = Mat::<c64>::zeros(n, n);
    for j in 0..n_quad {
        let theta = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n_quad as f64;
        let e = c64::from_polar(1.0, theta);
        let z = center + e * radius;
        let shifted = Mat::from_fn(n, n, |r, s| if r == s { z - ac[(r, s)] } else { -ac[(r, s)] });
        let inv = cinverse(&shifted);
        let cond = (a_norm1 + z.norm()) * norm_1(&inv);
        if !(cond <= cond_max) {
            return Err(Error::Contour(format!(
                "resolvent at {z:.4} has condition {cond:.3e} (radius {radius:.3e})"
            )));
        }
        let w = e * (radius / n_quad as f64);
        for s in 0..n {
            for r in 0..n {
                acc[(r, s)] += inv[(r, s)] * w;
            }
        }
    }
    Ok(acc)
}

/// Spectral abscissa of `(I − P)A(I − P)` on the range of `I − P`, found by
/// pushing the complementary eigenvalues far to the left.
pub fn stable_abscissa(a: &Mat<f64>, p: &CMat) -> Result<f64> {
    let n = a.nrows();
    let ac = to_complex(a);
    let q = cidentity(n) - p;
    let push = 1e3 * (cfro(&ac) + 1.0);
    let qaq = &q * &ac * &q;
    let m = Mat::from_fn(n, n, |i, j| qaq[(i, j)] - p[(i, j)] * push);
    let eigs = crate::linalg::ceigenvalues(&m)?;
    Ok(eigs.iter().map(|z| z.re).filter(|r| *r > -0.5 * push).fold(f64::NEG_INFINITY, f64::max))
}

/// Boundary traces of the adjoint eigenvectors of one cluster.
#[derive(Debug, Clone)]
pub struct TraceSet {
    /// `n_bd × ℓ`, zero off the patch.
    pub traces: CMat,
    /// Largest raw normal component of `∂φ*/∂ν` on the whole boundary.
    pub normal_component: f64,
    /// Set when a trace vanishes on the patch.
    pub degenerate: bool,
}

/// Normal-derivative traces of the adjoint eigenvectors restricted to the
/// patch. The trace is the tangential component only, so tangentiality is
/// exact; the raw normal component is reported for diagnostics.
pub fn adjoint_normal_traces(spec: &SpectralData, ops: &Operators, red: &Reduced, patch_mask: &[bool]) -> Vec<TraceSet> {
    let l = &ops.layout;
    spec.clusters
        .iter()
        .map(|c| {
            let ell = c.adjoint_eigvecs.ncols();
            let mut traces = Mat::<c64>::zeros(l.n_bd, ell);
            let mut normal: f64 = 0.0;
            let mut degenerate = false;
            for j in 0..ell {
                let v = ccol(&c.adjoint_eigvecs, j);
                let re = red.lift(&v.iter().map(|z| z.re).collect::<Vec<_>>());
                let im = red.lift(&v.iter().map(|z| z.im).collect::<Vec<_>>());
                let tr = green_trace(ops, &re);
                let ti = green_trace(ops, &im);
                let nr = normal_component_of_normal_derivative(l, &re);
                let ni = normal_component_of_normal_derivative(l, &im);
                for b in 0..l.n_bd {
                    normal = normal.max(nr[b].hypot(ni[b]));
                    if patch_mask[b] {
                        traces[(b, j)] = c64::new(tr[b], ti[b]);
                    }
                }
                if cnorm2(&ccol(&traces, j)) < 1e-12 {
                    degenerate = true;
                }
            }
            TraceSet { traces, normal_component: normal, degenerate }
        })
        .collect()
}

/// Shift-invert operator of the projected Oseen operator acting on interior
/// fields through the pinned saddle system.
pub struct SaddleShiftInvert {
    lu: SparseLu,
    m_int: Csr,
    leray: Leray,
    n: usize,
    sigma: f64,
    transpose: bool,
}

impl SaddleShiftInvert {
    pub fn new(ops: &Operators, sigma: f64, transpose: bool) -> Result<Self> {
        let m_int = ops.oseen_int();
        let s = ops.saddle(&m_int, sigma);
        Ok(Self {
            lu: SparseLu::new(&s)?,
            leray: ops.leray()?,
            n: ops.layout.n_int,
            m_int,
            sigma,
            transpose,
        })
    }
}

impl ShiftInvertOp for SaddleShiftInvert {
    fn dim(&self) -> usize {
        self.n
    }
    fn shift(&self) -> f64 {
        self.sigma
    }
    fn solve(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = vec![0.0; self.lu.dim()];
        rhs[..self.n].copy_from_slice(x);
        let sol = if self.transpose { self.lu.solve_transpose(&rhs) } else { self.lu.solve(&rhs) };
        sol[..self.n].to_vec()
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let y = if self.transpose { self.m_int.matvec_t(x) } else { self.m_int.matvec(x) };
        self.leray.apply(&y)
    }
}

/// Rightmost eigenpairs through sparse shift-invert Arnoldi, with interior
/// fields as eigenvectors.
pub fn sparse_rightmost(ops: &Operators, sigma: f64, adjoint: bool, opts: &ArnoldiOptions) -> Result<ArnoldiResult> {
    let op = SaddleShiftInvert::new(ops, sigma, adjoint)?;
    rightmost_eigenpairs(&op, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;

    fn synthetic(diag: &[f64], pairs: &[(f64, f64)]) -> Mat<f64> {
        // block diagonal, then a fixed similarity to make it non-normal
        let n = diag.len() + 2 * pairs.len();
        let mut d = Mat::<f64>::zeros(n, n);
        let mut k = 0;
        for &(re, im) in pairs {
            d[(k, k)] = re;
            d[(k + 1, k + 1)] = re;
            d[(k, k + 1)] = im;
            d[(k + 1, k)] = -im;
            k += 2;
        }
        for &v in diag {
            d[(k, k)] = v;
            k += 1;
        }
        let s = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else if j == i + 1 { 0.4 } else { 0.0 });
        let sinv = s.partial_piv_lu();
        use faer::linalg::solvers::DenseSolveCore;
        &s * &d * sinv.inverse()
    }

    #[test]
    fn stable_operator_has_no_unstable_part() {
        let a = synthetic(&[-1.0, -2.0, -3.0], &[(-0.5, 2.0)]);
        let s = compute_spectrum(&a, &SpectralOptions::default()).unwrap();
        assert_eq!(s.n_unstable, 0);
        assert_eq!(s.n_distinct(), 0);
        assert!((s.gamma0 - 0.95 * 0.5).abs() < 1e-10);
        let p = spectral_projector(&a, &s, ProjectorMethod::Schur, &SpectralOptions::default()).unwrap();
        assert_eq!(cfro(&p), 0.0);
    }

    #[test]
    fn conjugate_pair_is_two_simple_clusters() {
        let a = synthetic(&[-1.0, -2.0, 0.7], &[(0.3, 1.5)]);
        let s = compute_spectrum(&a, &SpectralOptions::default()).unwrap();
        assert_eq!(s.n_unstable, 3);
        assert_eq!(s.n_distinct(), 3);
        assert_eq!(s.k_channels(), 1);
        assert!(s.biorthogonality_error() < 1e-8);
        assert!(s.residuals.iter().all(|r| *r < 1e-8));
        // conjugate partners are exact conjugates
        let c0 = &s.clusters[0];
        let c1 = s.clusters.iter().find(|c| (c.center - c0.center.conj()).norm() < 1e-9).unwrap();
        for i in 0..a.nrows() {
            assert_eq!(s.phi[(i, c1.columns.start)], s.phi[(i, c0.columns.start)].conj());
        }
        // real eigenvalue gets a real vector
        let cr = s.clusters.iter().find(|c| c.center.im == 0.0).unwrap();
        assert!((0..a.nrows()).all(|i| s.phi[(i, cr.columns.start)].im == 0.0));
    }

    #[test]
    fn projectors_agree_and_are_idempotent() {
        let a = synthetic(&[-1.0, -2.0, -4.0, 0.7], &[(0.3, 1.5), (-0.8, 3.0)]);
        let opts = SpectralOptions::default();
        let s = compute_spectrum(&a, &opts).unwrap();
        let ps = spectral_projector(&a, &s, ProjectorMethod::Schur, &opts).unwrap();
        let pc = spectral_projector(&a, &s, ProjectorMethod::Contour, &opts).unwrap();
        let pe = s.eigen_projector();
        assert!(cfro(&(&ps - &pc)) < 1e-6);
        assert!(cfro(&(&ps - &pe)) < 1e-8);
        assert!(cfro(&(&ps * &ps - &ps)) < 1e-8);
        let tr: c64 = (0..a.nrows()).map(|i| ps[(i, i)]).sum();
        assert!((tr.re - 3.0).abs() < 1e-8 && tr.im.abs() < 1e-8);
        let ac = to_complex(&a);
        assert!(cfro(&(&ps * &ac - &ac * &ps)) <= 1e-7 * cfro(&ac));
        let abs = stable_abscissa(&a, &ps).unwrap();
        assert!((abs + 0.8).abs() < 1e-6, "{abs}");
    }

    #[test]
    fn double_eigenvalue_has_multiplicity_two() {
        let mut a = identity(5) * 0.3;
        a[(2, 2)] = -1.0;
        a[(3, 3)] = -2.0;
        a[(4, 4)] = -3.0;
        a[(0, 3)] = 0.5;
        a[(1, 4)] = -0.7;
        let s = compute_spectrum(&a, &SpectralOptions::default()).unwrap();
        assert_eq!(s.n_unstable, 2);
        assert_eq!(s.n_distinct(), 1);
        assert_eq!(s.clusters[0].multiplicity, 2);
        assert_eq!(s.k_channels(), 2);
        assert!(!s.clusters[0].ambiguous);
        assert!(s.biorthogonality_error() < 1e-8);
    }

    #[test]
    fn jordan_block_is_defective_with_multiplicity_one() {
        let mut a = Mat::<f64>::zeros(4, 4);
        a[(0, 0)] = 0.5;
        a[(1, 1)] = 0.5;
        a[(0, 1)] = 1.0;
        a[(2, 2)] = -1.0;
        a[(3, 3)] = -2.0;
        let opts = SpectralOptions { tol_group_rel: 1e-4, ..Default::default() };
        let s = compute_spectrum(&a, &opts).unwrap();
        assert_eq!(s.n_unstable, 2);
        assert_eq!(s.clusters.len(), 1);
        assert!(s.clusters[0].defective);
        assert_eq!(s.clusters[0].multiplicity, 1);
        assert!(s.biorthogonality_error() < 1e-8);
        let ps = spectral_projector(&a, &s, ProjectorMethod::Schur, &opts).unwrap();
        assert!(cfro(&(ps - s.eigen_projector())) < 1e-6);
    }

    #[test]
    fn tiny_gap_is_rejected() {
        let a = synthetic(&[-1.0, 1e-6, -1e-6], &[]);
        assert!(matches!(
            compute_spectrum(&a, &SpectralOptions::default()),
            Err(Error::SpectralGap { .. })
        ));
    }

    #[test]
    fn csv_has_one_row_per_eigenvalue() {
        let a = synthetic(&[-1.0, 0.5], &[(0.2, 1.0)]);
        let s = compute_spectrum(&a, &SpectralOptions::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "re,im,unstable_flag,cluster_id,multiplicity");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines.iter().filter(|l| l.contains(",1,")).count(), 3);
    }
}
