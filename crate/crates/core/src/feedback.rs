//! Finite-dimensional feedback design on the unstable subspace and the
//! resulting closed-loop generator.

use faer::{c64, Mat};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::care::{place, shifted_lqr};
use crate::linalg::{
    abscissa, ccol, ceigenvalues, cfro, cnorm2, csingular_values, eigenvalues, max_abs_imag, numerical_rank,
    set_distance, to_complex, CMat,
};
use crate::ops::Reduced;
use crate::spectral::SpectralData;
use crate::stabilizability::ActuatorSet;

/// Dynamics on the unstable subspace in adjoint coordinates `c = Φ*ᴴx`.
#[derive(Debug, Clone)]
pub struct ProjectedSystem {
    pub lambda_u: CMat,
    pub bv: CMat,
    pub bu: CMat,
    /// Reduced-space input columns `[b_bd f_k | Zᵀu_k]`.
    pub inputs: CMat,
    pub k: usize,
}

impl ProjectedSystem {
    pub fn n(&self) -> usize {
        self.lambda_u.nrows()
    }

    pub fn b(&self) -> CMat {
        let k = self.bv.ncols();
        Mat::from_fn(self.n(), k + self.bu.ncols(), |i, j| if j < k { self.bv[(i, j)] } else { self.bu[(i, j - k)] })
    }

    /// `rank[λI − Λu | B]` at every given eigenvalue.
    pub fn hautus_ranks(&self, eigs: &[c64], tol: f64) -> Result<Vec<usize>> {
        let b = self.b();
        let n = self.n();
        eigs.iter()
            .map(|&lam| {
                let m = Mat::from_fn(n, n + b.ncols(), |i, j| {
                    if j < n {
                        (if i == j { lam } else { c64::new(0.0, 0.0) }) - self.lambda_u[(i, j)]
                    } else {
                        b[(i, j - n)]
                    }
                });
                Ok(numerical_rank(&csingular_values(&m)?, tol))
            })
            .collect()
    }
}

pub fn build_projected_system(spec: &SpectralData, red: &Reduced, act: &ActuatorSet) -> Result<ProjectedSystem> {
    let n_s = red.dim();
    let k = act.k;
    let bf = &red.b_bd * &act.f;
    let zu = red.z.transpose() * &act.u;
    let inputs = to_complex(&Mat::from_fn(n_s, bf.ncols() + zu.ncols(), |i, j| {
        if j < bf.ncols() {
            bf[(i, j)]
        } else {
            zu[(i, j - bf.ncols())]
        }
    }));
    let adj_h = spec.phi_adj.adjoint().to_owned();
    let lambda_u = &adj_h * to_complex(&red.a) * &spec.phi;
    let b = &adj_h * &inputs;
    let bv = b.subcols(0, bf.ncols()).to_owned();
    let bu = b.subcols(bf.ncols(), zu.ncols()).to_owned();
    Ok(ProjectedSystem { lambda_u, bv, bu, inputs, k })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignMethod {
    ShiftedLqr,
    Place,
}

impl std::str::FromStr for DesignMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shifted-lqr" => Ok(Self::ShiftedLqr),
            "place" => Ok(Self::Place),
            _ => Err(Error::Config(format!("unknown design method `{s}` (expected shifted-lqr or place)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Gains {
    /// `2K × N`; rows act on adjoint coordinates.
    pub kg: CMat,
    pub method: DesignMethod,
    pub fell_back: bool,
    pub projected_abscissa: f64,
}

/// Target poles `−γ₁ − j·spread + i·Im λ`, with `j` counting distinct real
/// parts so that conjugate partners stay paired.
pub fn target_poles(unstable: &[c64], gamma1: f64) -> Vec<c64> {
    let spread = 0.1 * gamma1.max(1e-3);
    let mut reals: Vec<f64> = Vec::new();
    unstable
        .iter()
        .map(|z| {
            let j = match reals.iter().position(|r| (r - z.re).abs() <= 1e-9 * z.norm().max(1.0)) {
                Some(j) => j,
                None => {
                    reals.push(z.re);
                    reals.len() - 1
                }
            };
            c64::new(-gamma1 - spread * j as f64, z.im)
        })
        .collect()
}

pub fn design_gains(psys: &ProjectedSystem, unstable: &[c64], gamma1: f64, method: DesignMethod) -> Result<Gains> {
    let n = psys.n();
    let b = psys.b();
    if n == 0 {
        return Ok(Gains { kg: Mat::zeros(b.ncols(), 0), method, fell_back: false, projected_abscissa: f64::NEG_INFINITY });
    }
    if cfro(&b) == 0.0 {
        return Err(Error::Uncontrollable("input matrix of the projected system is zero".into()));
    }
    let attempt = |m: DesignMethod| -> Result<CMat> {
        match m {
            DesignMethod::ShiftedLqr => shifted_lqr(&psys.lambda_u, &b, gamma1),
            DesignMethod::Place => place(&psys.lambda_u, &b, &target_poles(unstable, gamma1)),
        }
    };
    let verify = |kg: &CMat| -> Result<f64> {
        let cl = &psys.lambda_u - &b * kg;
        let a = abscissa(&ceigenvalues(&cl)?);
        if a <= -gamma1 + 1e-6 {
            Ok(a)
        } else {
            Err(Error::Design(format!("projected closed-loop abscissa {a:.6e} above −γ₁ = {:.6e}", -gamma1)))
        }
    };
    let first = attempt(method).and_then(|kg| verify(&kg).map(|a| (kg, a)));
    match (first, method) {
        (Ok((kg, a)), _) => Ok(Gains { kg, method, fell_back: false, projected_abscissa: a }),
        (Err(_), DesignMethod::ShiftedLqr) => {
            let kg = attempt(DesignMethod::Place)?;
            let a = verify(&kg)?;
            Ok(Gains { kg, method: DesignMethod::Place, fell_back: true, projected_abscissa: a })
        }
        (Err(e), DesignMethod::Place) => Err(e),
    }
}

/// Feedback functionals and actuators in reduced coordinates.
#[derive(Debug, Clone)]
pub struct FeedbackLaw {
    pub gamma1: f64,
    pub gains: Gains,
    /// Boundary functionals `p_k`, `n_s × K`.
    pub p: CMat,
    /// Interior functionals `q_k`, `n_s × K`.
    pub q: CMat,
    /// Boundary actuators `f_k`, `n_bd × K`.
    pub f: CMat,
    /// Interior actuators `u_k` on interior faces, `n_int × K`.
    pub u: CMat,
}

impl FeedbackLaw {
    /// The law with no channels.
    pub fn none(n_s: usize, n_bd: usize, n_int: usize) -> Self {
        Self {
            gamma1: 0.0,
            gains: Gains {
                kg: Mat::zeros(0, 0),
                method: DesignMethod::ShiftedLqr,
                fell_back: false,
                projected_abscissa: f64::NEG_INFINITY,
            },
            p: Mat::zeros(n_s, 0),
            q: Mat::zeros(n_s, 0),
            f: Mat::zeros(n_bd, 0),
            u: Mat::zeros(n_int, 0),
        }
    }

    pub fn k(&self) -> usize {
        self.p.ncols()
    }

    /// `F = Σ_k f_k ⟨·, p_k⟩`, boundary data from reduced states.
    pub fn boundary_map(&self) -> CMat {
        &self.f * self.p.adjoint()
    }

    /// `G = Zᵀ Σ_k u_k ⟨·, q_k⟩`.
    pub fn interior_map(&self, red: &Reduced) -> CMat {
        to_complex(&red.z.transpose().to_owned()) * &self.u * self.q.adjoint()
    }

    pub fn gain_norms(&self) -> (Vec<f64>, Vec<f64>) {
        let p = (0..self.p.ncols()).map(|k| cnorm2(&ccol(&self.p, k))).collect();
        let q = (0..self.q.ncols()).map(|k| cnorm2(&ccol(&self.q, k))).collect();
        (p, q)
    }
}

/// Realizes the gains as functionals: `p_k = −Σ_a conj(Kg_ka) φ*_a`.
pub fn lift_gains(spec: &SpectralData, act: &ActuatorSet, gains: Gains, gamma1: f64) -> FeedbackLaw {
    let all = -(&spec.phi_adj * gains.kg.adjoint());
    let k = act.k;
    let n_s = spec.phi_adj.nrows();
    let (p, q) = if spec.n_unstable == 0 {
        (Mat::zeros(n_s, 0), Mat::zeros(n_s, 0))
    } else {
        (all.subcols(0, k).to_owned(), all.subcols(k, k).to_owned())
    };
    FeedbackLaw { gamma1, gains, p, q, f: to_complex(&act.f), u: to_complex(&act.u) }
}

#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub af: CMat,
    pub eigenvalues: Vec<c64>,
    pub abscissa: f64,
    /// Largest imaginary entry of `af`; zero for a real law.
    pub max_imag: f64,
}

/// `𝔸_F = A + b_bd F + G` on the reduced space.
pub fn assemble_closed_loop(red: &Reduced, law: &FeedbackLaw) -> Result<ClosedLoop> {
    let a = to_complex(&red.a);
    let af = if law.k() == 0 {
        a
    } else {
        a + to_complex(&red.b_bd) * law.boundary_map() + law.interior_map(red)
    };
    let mut eigs = ceigenvalues(&af)?;
    crate::linalg::sort_rightmost(&mut eigs);
    Ok(ClosedLoop { abscissa: abscissa(&eigs), max_imag: max_abs_imag(&af), eigenvalues: eigs, af })
}

/// Real channels and gains: control `Re⟨x,p⟩ Re f − Im⟨x,p⟩ Im f`.
#[derive(Debug, Clone)]
pub struct RealLaw {
    /// Boundary actuators, `n_bd × c_f`.
    pub f: Mat<f64>,
    /// Rows produce the boundary channel amplitudes from the reduced state.
    pub gain_f: Mat<f64>,
    pub u: Mat<f64>,
    pub gain_u: Mat<f64>,
    pub af: Mat<f64>,
    pub eigenvalues: Vec<c64>,
    pub abscissa: f64,
    /// Set distance between the real and complex closed-loop spectra.
    pub spectrum_mismatch: f64,
}

impl RealLaw {
    pub fn channels(&self) -> usize {
        self.f.ncols() + self.u.ncols()
    }

    /// Boundary data `F x`.
    pub fn boundary_data(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::matvec(&self.f, &crate::linalg::matvec(&self.gain_f, x))
    }

    /// Channel amplitudes `(ν, μ)` at state `x`.
    pub fn controls(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (crate::linalg::matvec(&self.gain_f, x), crate::linalg::matvec(&self.gain_u, x))
    }
}

/// Splits complex actuator/functional pairs into real channels, dropping
/// channels whose actuator vanishes.
fn split_channels(act: &CMat, func: &CMat) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let scale = cfro(act).max(f64::MIN_POSITIVE);
    let mut acts = Vec::new();
    let mut gains = Vec::new();
    for k in 0..act.ncols() {
        let re: Vec<f64> = (0..act.nrows()).map(|i| act[(i, k)].re).collect();
        let im: Vec<f64> = (0..act.nrows()).map(|i| act[(i, k)].im).collect();
        // ⟨x, p⟩ = Σ x conj(p): Re = Re(p)·x, Im = −Im(p)·x
        let g_re: Vec<f64> = (0..func.nrows()).map(|i| func[(i, k)].re).collect();
        let g_im: Vec<f64> = (0..func.nrows()).map(|i| func[(i, k)].im).collect();
        if crate::linalg::norm2(&re) > 1e-14 * scale {
            acts.push(re);
            gains.push(g_re);
        }
        if crate::linalg::norm2(&im) > 1e-14 * scale {
            acts.push(im);
            gains.push(g_im);
        }
    }
    (acts, gains)
}

pub const REALIFY_TOL: f64 = 1e-7;

pub fn realify(red: &Reduced, law: &FeedbackLaw, complex: &ClosedLoop) -> Result<RealLaw> {
    let n_s = red.dim();
    let (fa, fg) = split_channels(&law.f, &law.p);
    let (ua, ug) = split_channels(&law.u, &law.q);
    let f = crate::linalg::from_cols(law.f.nrows(), &fa);
    let u = crate::linalg::from_cols(law.u.nrows(), &ua);
    let gain_f = Mat::from_fn(fg.len(), n_s, |i, j| fg[i][j]);
    let gain_u = Mat::from_fn(ug.len(), n_s, |i, j| ug[i][j]);
    let af = &red.a + &red.b_bd * &f * &gain_f + red.z.transpose() * &u * &gain_u;
    let mut eigs = eigenvalues(&af)?;
    crate::linalg::sort_rightmost(&mut eigs);
    let mismatch = set_distance(&eigs, &complex.eigenvalues);
    if !(mismatch <= REALIFY_TOL) {
        return Err(Error::Realify(mismatch));
    }
    Ok(RealLaw { abscissa: abscissa(&eigs), eigenvalues: eigs, spectrum_mismatch: mismatch, f, gain_f, u, gain_u, af })
}

/// Numerical rank of the map `x ↦ (Fx, Gx)`.
pub fn feedback_rank(red: &Reduced, law: &FeedbackLaw, tol: f64) -> Result<usize> {
    let f = law.boundary_map();
    let g = law.interior_map(red);
    let stacked = Mat::from_fn(f.nrows() + g.nrows(), f.ncols(), |i, j| {
        if i < f.nrows() {
            f[(i, j)]
        } else {
            g[(i - f.nrows(), j)]
        }
    });
    Ok(numerical_rank(&csingular_values(&stacked)?, tol))
}

/// `‖(I−P)𝔸_F P − (I−P)(b_bd F + G)P‖`, zero when the stable block of the
/// closed loop is the open-loop stable block plus the actuator coupling.
pub fn invariance_defect(red: &Reduced, law: &FeedbackLaw, cl: &ClosedLoop, p: &CMat) -> f64 {
    let n = red.dim();
    let q = crate::linalg::cidentity(n) - p;
    let coupling = to_complex(&red.b_bd) * law.boundary_map() + law.interior_map(red);
    let lhs = &q * &cl.af * p;
    let rhs = &q * coupling * p;
    cfro(&(lhs - rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_system(lams: &[c64], b: &[c64]) -> ProjectedSystem {
        let n = lams.len();
        ProjectedSystem {
            lambda_u: Mat::from_fn(n, n, |i, j| if i == j { lams[i] } else { c64::new(0.0, 0.0) }),
            bv: Mat::from_fn(n, 1, |i, _| b[i]),
            bu: Mat::zeros(n, 0),
            inputs: Mat::zeros(0, 1),
            k: 1,
        }
    }

    #[test]
    fn scalar_lqr_matches_closed_form() {
        // x = (a+γ + √((a+γ)² + b²))/b² solves the shifted scalar Riccati
        // equation; the closed loop is a − b²x.
        let (a, b, g) = (0.7, 1.3, 2.0);
        let sys = diag_system(&[c64::new(a, 0.0)], &[c64::new(b, 0.0)]);
        let gains = design_gains(&sys, &[c64::new(a, 0.0)], g, DesignMethod::ShiftedLqr).unwrap();
        let s = a + g;
        let x = (s + (s * s + b * b).sqrt()) / (b * b);
        assert!((gains.kg[(0, 0)].re - b * x).abs() < 1e-10);
        let cl = a - b * b * x;
        assert!((gains.projected_abscissa - cl).abs() < 1e-10);
        assert!(cl <= -g);
    }

    #[test]
    fn zero_input_is_uncontrollable() {
        let sys = diag_system(&[c64::new(0.5, 0.0)], &[c64::new(0.0, 0.0)]);
        assert!(matches!(
            design_gains(&sys, &[c64::new(0.5, 0.0)], 1.0, DesignMethod::ShiftedLqr),
            Err(Error::Uncontrollable(_))
        ));
    }

    #[test]
    fn gamma_sweep_is_monotone_in_gain_norm() {
        let lams = [c64::new(0.4, 2.0), c64::new(0.4, -2.0)];
        let b = [c64::new(0.3, 0.8), c64::new(0.3, -0.8)];
        let sys = diag_system(&lams, &b);
        let mut last = 0.0;
        for mult in [0.5, 1.0, 2.0] {
            let g = mult * 0.4;
            let gains = design_gains(&sys, &lams, g, DesignMethod::ShiftedLqr).unwrap();
            assert!(gains.projected_abscissa <= -g + 1e-6);
            let norm = cfro(&gains.kg);
            assert!(norm >= last);
            last = norm;
        }
    }

    #[test]
    fn placement_hits_targets() {
        let lams = [c64::new(0.4, 2.0), c64::new(0.4, -2.0), c64::new(0.1, 0.0)];
        let b = [c64::new(0.3, 0.8), c64::new(0.3, -0.8), c64::new(1.0, 0.0)];
        let sys = diag_system(&lams, &b);
        let gains = design_gains(&sys, &lams, 1.0, DesignMethod::Place).unwrap();
        let cl = &sys.lambda_u - sys.b() * &gains.kg;
        let eigs = ceigenvalues(&cl).unwrap();
        assert!(set_distance(&eigs, &target_poles(&lams, 1.0)) < 1e-8);
        let ranks = sys.hautus_ranks(&lams, 1e-8).unwrap();
        assert!(ranks.iter().all(|&r| r == 3));
    }

    #[test]
    fn target_poles_keep_pairs_conjugate() {
        let lams = [c64::new(0.4, 2.0), c64::new(0.4, -2.0), c64::new(0.1, 0.0)];
        let p = target_poles(&lams, 1.0);
        assert_eq!(p[0], p[1].conj());
        assert!(p[2].im == 0.0 && p[2].re < p[0].re);
    }
}
