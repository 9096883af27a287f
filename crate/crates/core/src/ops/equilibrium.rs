//! Steady states of the forced Navier–Stokes equations.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{assemble_advection, assemble_divergence, assemble_laplacian, Layout};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::linalg::sparse::{Csr, SparseLu};

/// Streamfunction `α·sin(mπx)sin(mπy)·sin(πx)sin(πy)` on the unit-scaled
/// box: a cellular flow with vanishing velocity on the walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowProfile {
    pub amplitude: f64,
    pub cells: u32,
    /// Shear superposed as `β·sin²(πx)·sin(2πy)·sin(πy)` to break symmetry.
    pub skew: f64,
}

impl FlowProfile {
    pub fn streamfunction(&self, lx: f64, ly: f64) -> impl Fn(f64, f64) -> f64 {
        let p = *self;
        move |x, y| {
            let (sx, sy) = ((PI * x / lx).sin(), (PI * y / ly).sin());
            let m = p.cells as f64;
            let cell = (m * PI * x / lx).sin() * (m * PI * y / ly).sin();
            let shear = sx * sx * (2.0 * PI * y / ly).sin() * sy;
            p.amplitude * (cell * sx * sy + p.skew * shear)
        }
    }
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    /// Velocity in extended form with a zero trace.
    pub ye: Vec<f64>,
    /// Cell-centered pressure.
    pub pie: Vec<f64>,
    /// Body force on interior faces.
    pub f: Vec<f64>,
    pub residual_norm: f64,
    pub divergence_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `−ν₀Ly + (y·∇)y + ∇π − f` on interior faces.
pub fn steady_residual(layout: &Layout, nu0: f64, y: &[f64], pi: &[f64], f: &[f64]) -> Vec<f64> {
    let lap = layout.laplacian(y);
    let conv = layout.convection(y, y);
    let grad = pressure_gradient(layout, pi);
    (0..layout.n_int)
        .map(|k| -nu0 * lap[k] + conv[k] + grad[k] - f[k])
        .collect()
}

fn pressure_gradient(layout: &Layout, p: &[f64]) -> Vec<f64> {
    (0..layout.n_int)
        .map(|k| match layout.face(k) {
            super::Face::U(i, j) => (p[i + layout.nx * j] - p[i - 1 + layout.nx * j]) / layout.hx,
            super::Face::V(i, j) => (p[i + layout.nx * j] - p[i + layout.nx * (j - 1)]) / layout.hy,
        })
        .collect()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Builds the force that makes a prescribed solenoidal field and pressure
/// an exact discrete steady state.
pub fn manufactured(layout: &Layout, nu0: f64, ye: Vec<f64>, pie: Vec<f64>) -> Result<Equilibrium> {
    if ye.len() != layout.n_ext() || pie.len() != layout.n_cells {
        return Err(Error::Shape("equilibrium field sizes do not match the layout".into()));
    }
    if ye[layout.n_int..].iter().any(|v| *v != 0.0) {
        return Err(Error::Mesh("equilibrium must have a zero trace".into()));
    }
    let div = max_abs(&layout.divergence(&ye));
    if div > super::TOL_DIV {
        return Err(Error::Mesh(format!("equilibrium divergence {div:e} exceeds tolerance")));
    }
    let zero = vec![0.0; layout.n_int];
    let f = steady_residual(layout, nu0, &ye, &pie, &zero);
    let residual = norm2(&steady_residual(layout, nu0, &ye, &pie, &f));
    Ok(Equilibrium {
        ye,
        pie,
        f,
        residual_norm: residual,
        divergence_norm: div,
        iterations: 0,
        converged: true,
    })
}

/// Manufactured equilibrium from a flow profile with zero pressure.
pub fn from_profile(layout: &Layout, nu0: f64, profile: &FlowProfile) -> Result<Equilibrium> {
    let lx = layout.nx as f64 * layout.hx;
    let ly = layout.ny as f64 * layout.hy;
    let ye = layout.curl_of(profile.streamfunction(lx, ly));
    manufactured(layout, nu0, ye, vec![0.0; layout.n_cells])
}

/// Newton iteration on the steady equations with the pressure pinned in
/// cell 0. Always performs at least one step; stops once the residual is
/// below `tol` or after `max_iter` steps, returning the best iterate.
pub fn newton(
    layout: &Layout,
    nu0: f64,
    f: &[f64],
    guess: &[f64],
    guess_pressure: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<Equilibrium> {
    let n = layout.n_int;
    let nc = layout.n_cells;
    let lap = assemble_laplacian(layout).columns(0..n);
    let div = assemble_divergence(layout).columns(0..n);
    let mut y = guess.to_vec();
    y[n..].iter_mut().for_each(|v| *v = 0.0);
    let mut p = guess_pressure.to_vec();
    let shift = p[0];
    p.iter_mut().for_each(|v| *v -= shift);

    let eval = |y: &[f64], p: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let r = steady_residual(layout, nu0, y, p, f);
        let d = layout.divergence(y);
        (r, d)
    };
    let (mut r, mut d) = eval(&y, &p);
    let mut res = norm2(&r).max(norm2(&d));
    let mut best = (res, y.clone(), p.clone());
    let mut it = 0;
    while it < max_iter && (it == 0 || res > tol) {
        let adv = assemble_advection(layout, &y).columns(0..n);
        let jac = lap.combine(-nu0, &adv, 1.0);
        let mut t = jac.triplets();
        for (c, face, v) in div.triplets() {
            if c == 0 {
                continue;
            }
            // gradient block is −Dᵀ, divergence block D
            t.push((face, n + c - 1, -v));
            t.push((n + c - 1, face, v));
        }
        let sys = Csr::from_triplets(n + nc - 1, n + nc - 1, t);
        let lu = SparseLu::new(&sys)?;
        let mut rhs: Vec<f64> = r.iter().map(|v| -v).collect();
        rhs.extend(d[1..].iter().map(|v| -v));
        let step = lu.solve(&rhs);
        for k in 0..n {
            y[k] += step[k];
        }
        for c in 1..nc {
            p[c] += step[n + c - 1];
        }
        it += 1;
        (r, d) = eval(&y, &p);
        res = norm2(&r).max(norm2(&d));
        if !res.is_finite() {
            break;
        }
        if res < best.0 {
            best = (res, y.clone(), p.clone());
        }
    }
    let (res, y, p) = best;
    let div_norm = max_abs(&layout.divergence(&y));
    Ok(Equilibrium {
        ye: y,
        pie: p,
        f: f.to_vec(),
        residual_norm: res,
        divergence_norm: div_norm,
        iterations: it,
        converged: res <= tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainMesh;

    fn layout(n: usize) -> Layout {
        Layout::new(&DomainMesh::build(&[n, n], &[1.0, 1.0], 2).unwrap()).unwrap()
    }

    #[test]
    fn manufactured_residual_vanishes() {
        let l = layout(16);
        let prof = FlowProfile { amplitude: 2.0, cells: 2, skew: 0.3 };
        let eq = from_profile(&l, 1e-2, &prof).unwrap();
        assert!(eq.residual_norm <= 1e-12);
        assert!(eq.divergence_norm <= 1e-9);
        assert!(eq.ye[l.n_int..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn newton_from_exact_guess_takes_one_step() {
        let l = layout(12);
        let prof = FlowProfile { amplitude: 1.0, cells: 2, skew: 0.0 };
        let eq = from_profile(&l, 1e-2, &prof).unwrap();
        let sol = newton(&l, 1e-2, &eq.f, &eq.ye, &eq.pie, 20, 1e-10).unwrap();
        assert_eq!(sol.iterations, 1);
        assert!(sol.converged);
    }

    #[test]
    fn conservative_force_gives_rest_state() {
        let l = layout(10);
        let g: Vec<f64> = (0..l.n_cells)
            .map(|c| {
                let (x, y) = l.cell_center(c);
                x * x - y + (3.0 * x * y).sin()
            })
            .collect();
        let f = pressure_gradient(&l, &g);
        let guess = vec![0.0; l.n_ext()];
        let sol = newton(&l, 0.05, &f, &guess, &vec![0.0; l.n_cells], 10, 1e-10).unwrap();
        assert!(sol.converged);
        assert!(sol.ye.iter().all(|v| v.abs() < 1e-10));
        for c in 0..l.n_cells {
            assert!((sol.pie[c] - (g[c] - g[0])).abs() < 1e-9);
        }
    }
}
