//! Controllability matrices of boundary and collar actuators against the
//! adjoint eigenvectors, rank tests, and constructive actuator selection.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ccol, csingular_values, numerical_rank, CMat};
use crate::mesh::DomainMesh;
use crate::ops::{collar_faces, Operators, Reduced};
use crate::spectral::{adjoint_normal_traces, SpectralData};

pub const SVD_TOL: f64 = 1e-8;
pub const MAX_RETRIES: usize = 8;

/// Everything the pairings need, per distinct unstable eigenvalue.
#[derive(Debug, Clone)]
pub struct PairingData {
    /// Adjoint normal-derivative traces on the patch, `n_bd × ℓ_i`.
    pub traces: Vec<CMat>,
    /// Adjoint eigenvector fields on the collar faces, `n_int × ℓ_i`.
    pub collar_fields: Vec<CMat>,
    /// Boundary quadrature weights.
    pub weights: Vec<f64>,
    pub patch: Vec<bool>,
    pub collar: Vec<bool>,
    /// Cell area for interior pairings.
    pub area: f64,
    pub nu0: f64,
}

impl PairingData {
    pub fn new(spec: &SpectralData, ops: &Operators, red: &Reduced, mesh: &DomainMesh) -> Self {
        let l = &ops.layout;
        let patch: Vec<bool> = (0..l.n_bd).map(|b| mesh.in_patch(l.bd[b].node)).collect();
        let mut collar = vec![false; l.n_int];
        for (f, _) in collar_faces(mesh, l) {
            collar[f] = true;
        }
        let traces = adjoint_normal_traces(spec, ops, red, &patch).into_iter().map(|t| t.traces).collect();
        let collar_fields = spec
            .clusters
            .iter()
            .map(|c| {
                let v = &c.adjoint_eigvecs;
                let zr = &red.z * crate::linalg::real_part(v);
                let zi = &red.z * crate::linalg::imag_part(v);
                Mat::from_fn(l.n_int, v.ncols(), |i, j| {
                    if collar[i] {
                        c64::new(zr[(i, j)], zi[(i, j)])
                    } else {
                        c64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        Self {
            traces,
            collar_fields,
            weights: (0..l.n_bd).map(|b| l.bd_weight(b)).collect(),
            patch,
            collar,
            area: l.hx * l.hy,
            nu0: ops.nu0,
        }
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.traces.iter().map(|t| t.ncols()).collect()
    }
}

/// Real actuators: boundary functions on the patch and collar fields.
#[derive(Debug, Clone)]
pub struct ActuatorSet {
    /// `n_bd × K`, tangential boundary data, zero off the patch.
    pub f: Mat<f64>,
    /// `n_int × K`, interior fields, zero off the collar.
    pub u: Mat<f64>,
    pub k: usize,
    pub retries: usize,
}

impl ActuatorSet {
    pub fn empty(n_bd: usize, n_int: usize) -> Self {
        Self { f: Mat::zeros(n_bd, 0), u: Mat::zeros(n_int, 0), k: 0, retries: 0 }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenvalueRank {
    pub eigenvalue: [f64; 2],
    pub multiplicity: usize,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub boundary_only_singular_values: Vec<f64>,
    pub boundary_only_rank: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ControllabilityReport {
    pub per_eigenvalue: Vec<EigenvalueRank>,
    pub pass: bool,
    pub boundary_only_pass: bool,
    pub message: Option<String>,
}

/// `W_i[j,k] = ⟨f_k, ∂_νφ*_ij⟩` on the patch.
pub fn build_w(data: &PairingData, f: &Mat<f64>) -> Vec<CMat> {
    data.traces
        .iter()
        .map(|t| {
            Mat::from_fn(t.ncols(), f.ncols(), |j, k| {
                (0..t.nrows())
                    .filter(|&b| data.patch[b])
                    .map(|b| t[(b, j)].conj() * (data.weights[b] * f[(b, k)]))
                    .sum()
            })
        })
        .collect()
}

/// `U_i[j,k] = ⟨u_k, φ*_ij·τ⟩` on the collar.
pub fn build_u(data: &PairingData, u: &Mat<f64>) -> Vec<CMat> {
    data.collar_fields
        .iter()
        .map(|c| {
            Mat::from_fn(c.ncols(), u.ncols(), |j, k| {
                (0..c.nrows())
                    .filter(|&i| data.collar[i])
                    .map(|i| c[(i, j)].conj() * (data.area * u[(i, k)]))
                    .sum()
            })
        })
        .collect()
}

/// Rank of `[−ν₀W_i | U_i]` against `ℓ_i` for every distinct eigenvalue.
pub fn rank_test(w: &[CMat], u: &[CMat], nu0: f64, centers: &[c64], svd_tol: f64) -> Result<ControllabilityReport> {
    let mut per = Vec::new();
    for (i, (wi, ui)) in w.iter().zip(u).enumerate() {
        let ell = wi.nrows();
        let aug = Mat::from_fn(ell, wi.ncols() + ui.ncols(), |j, k| {
            if k < wi.ncols() {
                wi[(j, k)] * (-nu0)
            } else {
                ui[(j, k - wi.ncols())]
            }
        });
        let sv = csingular_values(&aug)?;
        let sv_b = csingular_values(wi)?;
        let rank = numerical_rank(&sv, svd_tol);
        let rank_b = numerical_rank(&sv_b, svd_tol);
        let z = centers.get(i).copied().unwrap_or_default();
        per.push(EigenvalueRank {
            eigenvalue: [z.re, z.im],
            multiplicity: ell,
            singular_values: sv,
            rank,
            boundary_only_singular_values: sv_b,
            boundary_only_rank: rank_b,
            pass: rank == ell,
        });
    }
    let pass = per.iter().all(|p| p.pass);
    let message = (!pass).then(|| {
        let failing: Vec<String> = per
            .iter()
            .filter(|p| !p.pass)
            .map(|p| format!("{:.4}{:+.4}i (rank {} < {})", p.eigenvalue[0], p.eigenvalue[1], p.rank, p.multiplicity))
            .collect();
        format!("rank[−ν₀W_i | U_i] = ℓ_i fails at {}", failing.join(", "))
    });
    Ok(ControllabilityReport {
        boundary_only_pass: per.iter().all(|p| p.boundary_only_rank == p.multiplicity),
        per_eigenvalue: per,
        pass,
        message,
    })
}

/// Leading `k` left singular vectors of `[Re S, Im S]` in the inner product
/// with diagonal weights `w`, returned orthonormal in that inner product.
fn weighted_leading(s: &[Vec<c64>], n: usize, w: &[f64], k: usize) -> Result<Mat<f64>> {
    let m = s.len();
    let stacked = Mat::from_fn(n, 2 * m, |i, j| {
        let z = s[j % m][i];
        w[i].sqrt() * if j < m { z.re } else { z.im }
    });
    let svd = stacked.thin_svd().map_err(|e| Error::Actuators(format!("svd: {e:?}")))?;
    let u = svd.U();
    let mut out = Mat::from_fn(n, k, |i, j| if w[i] > 0.0 { u[(i, j)] / w[i].sqrt() } else { 0.0 });
    fix_sign(&mut out);
    Ok(out)
}

/// Makes the largest entry of every column positive.
fn fix_sign(a: &mut Mat<f64>) {
    for j in 0..a.ncols() {
        let mut best = 0.0f64;
        for i in 0..a.nrows() {
            if a[(i, j)].abs() > best.abs() * (1.0 + 1e-12) {
                best = a[(i, j)];
            }
        }
        if best < 0.0 {
            for i in 0..a.nrows() {
                a[(i, j)] = -a[(i, j)];
            }
        }
    }
}

/// Gram–Schmidt in a diagonally weighted inner product; drops columns that
/// become negligible.
fn weighted_orthonormalize(a: &Mat<f64>, w: &[f64]) -> Mat<f64> {
    let n = a.nrows();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..a.ncols() {
        let mut v: Vec<f64> = (0..n).map(|i| a[(i, j)]).collect();
        let n0 = wnorm(&v, w);
        for _ in 0..2 {
            for c in &cols {
                let d: f64 = (0..n).map(|i| w[i] * v[i] * c[i]).sum();
                v.iter_mut().zip(c).for_each(|(x, y)| *x -= d * y);
            }
        }
        let nv = wnorm(&v, w);
        if nv > 1e-10 * n0.max(f64::MIN_POSITIVE) {
            v.iter_mut().for_each(|x| *x /= nv);
            cols.push(v);
        }
    }
    crate::linalg::from_cols(n, &cols)
}

fn wnorm(v: &[f64], w: &[f64]) -> f64 {
    v.iter().zip(w).map(|(x, wi)| wi * x * x).sum::<f64>().sqrt()
}

fn masked_weights(w: &[f64], mask: &[bool]) -> Vec<f64> {
    w.iter().zip(mask).map(|(x, m)| if *m { *x } else { 0.0 }).collect()
}

/// Greedy-SVD selection with randomized retries inside the trace span.
pub fn select_actuators(
    data: &PairingData,
    centers: &[c64],
    seed: u64,
    max_retries: usize,
    svd_tol: f64,
) -> Result<(ActuatorSet, ControllabilityReport)> {
    let n_bd = data.weights.len();
    let n_int = data.collar.len();
    let k = data.multiplicities().into_iter().max().unwrap_or(0);
    if k == 0 {
        let set = ActuatorSet::empty(n_bd, n_int);
        let report = rank_test(&[], &[], data.nu0, centers, svd_tol)?;
        return Ok((set, report));
    }
    let wb = masked_weights(&data.weights, &data.patch);
    let wc: Vec<f64> = data.collar.iter().map(|&c| if c { data.area } else { 0.0 }).collect();
    let trace_cols: Vec<Vec<c64>> = data.traces.iter().flat_map(|t| (0..t.ncols()).map(move |j| ccol(t, j))).collect();
    let collar_cols: Vec<Vec<c64>> =
        data.collar_fields.iter().flat_map(|t| (0..t.ncols()).map(move |j| ccol(t, j))).collect();

    let kf = k.min(2 * trace_cols.len());
    let mut f = weighted_leading(&trace_cols, n_bd, &wb, kf)?;
    let u = if wc.iter().any(|w| *w > 0.0) {
        weighted_leading(&collar_cols, n_int, &wc, k)?
    } else {
        Mat::zeros(n_int, k)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut retries = 0;
    loop {
        let report = rank_test(&build_w(data, &f), &build_u(data, &u), data.nu0, centers, svd_tol)?;
        if report.pass {
            let set = ActuatorSet { k, f, u, retries };
            return Ok((set, report));
        }
        if retries == max_retries {
            return Err(Error::Actuators(format!(
                "{} after {max_retries} randomized retries; the adjoint eigenvectors may have vanishing Cauchy data on the patch and collar",
                report.message.unwrap_or_default()
            )));
        }
        retries += 1;
        // random real elements of the trace span
        let m = trace_cols.len();
        let coefs: Vec<Vec<f64>> = (0..k).map(|_| (0..2 * m).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let raw = Mat::from_fn(n_bd, k, |i, j| {
            (0..2 * m)
                .map(|c| {
                    let z = trace_cols[c % m][i];
                    coefs[j][c] * if c < m { z.re } else { z.im }
                })
                .sum()
        });
        f = weighted_orthonormalize(&raw, &wb);
        if f.ncols() < k {
            f = Mat::from_fn(n_bd, k, |i, j| if j < f.ncols() { f[(i, j)] } else { 0.0 });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Two boundary nodes, three collar faces, one cluster of multiplicity
    /// `ell` with prescribed traces and collar fields.
    fn synthetic(traces: Vec<Vec<c64>>, collar: Vec<Vec<c64>>, collar_mask: Vec<bool>) -> PairingData {
        let n_bd = traces[0].len();
        PairingData {
            traces: vec![crate::linalg::from_ccols(n_bd, &traces)],
            collar_fields: vec![crate::linalg::from_ccols(collar_mask.len(), &collar)],
            weights: vec![0.5; n_bd],
            patch: vec![true; n_bd],
            collar: collar_mask,
            area: 0.25,
            nu0: 0.1,
        }
    }

    fn c(re: f64, im: f64) -> c64 {
        c64::new(re, im)
    }

    #[test]
    fn zero_actuators_give_zero_matrices_and_fail() {
        let d = synthetic(vec![vec![c(1.0, 0.0), c(0.5, 0.2)]], vec![vec![c(0.3, 0.0); 3]], vec![true; 3]);
        let w = build_w(&d, &Mat::zeros(2, 1));
        let u = build_u(&d, &Mat::zeros(3, 1));
        assert!(w[0].norm_l2() == 0.0 && u[0].norm_l2() == 0.0);
        let r = rank_test(&w, &u, d.nu0, &[c(0.3, 0.0)], SVD_TOL).unwrap();
        assert!(!r.pass);
        assert!(r.message.unwrap().contains("rank[−ν₀W_i | U_i] = ℓ_i"));
    }

    #[test]
    fn trace_itself_gives_positive_gram_entry() {
        let t = vec![c(1.0, 0.0), c(0.5, 0.0)];
        let d = synthetic(vec![t.clone()], vec![vec![c(0.0, 0.0); 3]], vec![true; 3]);
        let f = Mat::from_fn(2, 1, |i, _| t[i].re);
        let w = build_w(&d, &f);
        assert!((w[0][(0, 0)].re - 0.5 * 1.25).abs() < 1e-14);
        let r = rank_test(&w, &build_u(&d, &Mat::zeros(3, 1)), d.nu0, &[c(1.0, 0.0)], SVD_TOL).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn collar_rescues_boundary_only_failure() {
        // trace vanishes on the patch, the collar field does not
        let d = synthetic(
            vec![vec![c(0.0, 0.0), c(0.0, 0.0)]],
            vec![vec![c(0.2, 0.1), c(-0.4, 0.0), c(0.0, 0.0)]],
            vec![true, true, false],
        );
        let (set, r) = select_actuators(&d, &[c(0.5, 0.0)], 7, MAX_RETRIES, SVD_TOL).unwrap();
        assert_eq!(set.k, 1);
        assert!(r.pass);
        assert!(!r.boundary_only_pass);
        assert_eq!(set.u[(2, 0)], 0.0);
    }

    #[test]
    fn empty_collar_reduces_to_boundary_test() {
        let d = synthetic(vec![vec![c(1.0, 0.5), c(0.0, 0.0)]], vec![vec![c(0.2, 0.0); 3]], vec![false; 3]);
        let (set, r) = select_actuators(&d, &[c(0.5, 0.0)], 7, MAX_RETRIES, SVD_TOL).unwrap();
        assert!(set.u.norm_l2() == 0.0);
        assert!(r.pass && r.boundary_only_pass);
    }

    #[test]
    fn double_eigenvalue_needs_two_channels() {
        let d = synthetic(
            vec![vec![c(1.0, 0.0), c(0.0, 0.0), c(0.3, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0), c(0.2, 0.0)]],
            vec![vec![c(0.1, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(0.3, 0.0)]],
            vec![true, true],
        );
        let (set, r) = select_actuators(&d, &[c(0.3, 0.0)], 1, MAX_RETRIES, SVD_TOL).unwrap();
        assert_eq!(set.k, 2);
        assert_eq!(set.f.ncols(), 2);
        assert_eq!(set.u.ncols(), 2);
        assert!(r.pass);
        assert_eq!(r.per_eigenvalue[0].rank, 2);
        // selected functions are orthonormal in the boundary inner product
        let g = Mat::from_fn(2, 2, |a, b| (0..3).map(|i| 0.5 * set.f[(i, a)] * set.f[(i, b)]).sum::<f64>());
        assert!((g[(0, 0)] - 1.0).abs() < 1e-12 && g[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn scaling_does_not_change_ranks() {
        let d = synthetic(vec![vec![c(1.0, 0.2), c(0.5, 0.0)]], vec![vec![c(0.3, 0.0); 3]], vec![true; 3]);
        let (set, r1) = select_actuators(&d, &[c(0.5, 0.0)], 3, MAX_RETRIES, SVD_TOL).unwrap();
        let f2 = Mat::from_fn(set.f.nrows(), 1, |i, _| 1e3 * set.f[(i, 0)]);
        let r2 = rank_test(&build_w(&d, &f2), &build_u(&d, &set.u), d.nu0, &[c(0.5, 0.0)], SVD_TOL).unwrap();
        assert_eq!(r1.pass, r2.pass);
        assert_eq!(r1.per_eigenvalue[0].rank, r2.per_eigenvalue[0].rank);
    }
}
