//! Boundary traces of normal derivatives and the checks built on them: the
//! duality between the Dirichlet map and the normal derivative, asymptotic
//! tangentiality of `∂φ/∂ν`, and the half-space counterexample fields.

use std::f64::consts::PI;

use rand::Rng;

use super::{DirichletMap, Layout, Operators};
use crate::mesh::Side;

/// Outward normal derivative of the tangential component at every boundary
/// DOF, oriented along the DOF's tangent. One-sided second order with
/// samples at the wall and at distances `h/2`, `3h/2`.
pub fn normal_derivative_trace(layout: &Layout, x: &[f64]) -> Vec<f64> {
    let (nx, ny) = (layout.nx as isize, layout.ny as isize);
    (0..layout.n_bd)
        .map(|b| {
            let d = layout.bd[b];
            let p = d.pos as isize;
            let (c0, c1, h) = match d.side {
                Side::Bottom => (layout.u_at(x, p, 0), layout.u_at(x, p, 1), layout.hy),
                Side::Top => (layout.u_at(x, p, ny - 1), layout.u_at(x, p, ny - 2), layout.hy),
                Side::Left => (layout.v_at(x, 0, p), layout.v_at(x, 1, p), layout.hx),
                Side::Right => (layout.v_at(x, nx - 1, p), layout.v_at(x, nx - 2, p), layout.hx),
                _ => unreachable!(),
            };
            let wall = if x.len() > layout.n_int { x[layout.n_int + b] } else { 0.0 };
            let s = d.tau_sign;
            let inward = -8.0 / (3.0 * h) * wall + 3.0 / h * (s * c0) - 1.0 / (3.0 * h) * (s * c1);
            -inward
        })
        .collect()
}

/// Normal-derivative trace dual to the discrete boundary input: for interior
/// fields `φ` it satisfies `ν₀Σ_b w_b t_b g_b = −h²⟨M_bd g, φ⟩` exactly, so
/// boundary pairings against it reproduce the interior Green pairing of the
/// Dirichlet map. First-order accurate.
pub fn green_trace(ops: &Operators, phi: &[f64]) -> Vec<f64> {
    let l = &ops.layout;
    let m_bd = ops.oseen_bd();
    let t = m_bd.matvec_t(&phi[..l.n_int]);
    let area = l.hx * l.hy;
    (0..l.n_bd)
        .map(|b| -area / (ops.nu0 * l.bd_weight(b)) * t[b])
        .collect()
}

/// Magnitude of the normal component of `∂φ/∂ν` at every boundary DOF for a
/// field with zero wall values, from `(4f₁ − f₂)/(2h)` averaged over the two
/// grid lines meeting the node.
pub fn normal_component_of_normal_derivative(layout: &Layout, x: &[f64]) -> Vec<f64> {
    let (nx, ny) = (layout.nx as isize, layout.ny as isize);
    (0..layout.n_bd)
        .map(|b| {
            let d = layout.bd[b];
            let p = d.pos as isize;
            let one = |f1: f64, f2: f64, h: f64| (4.0 * f1 - f2) / (2.0 * h);
            let val = match d.side {
                Side::Bottom => 0.5
                    * (one(layout.v_at(x, p - 1, 1), layout.v_at(x, p - 1, 2), layout.hy)
                        + one(layout.v_at(x, p, 1), layout.v_at(x, p, 2), layout.hy)),
                Side::Top => 0.5
                    * (one(layout.v_at(x, p - 1, ny - 1), layout.v_at(x, p - 1, ny - 2), layout.hy)
                        + one(layout.v_at(x, p, ny - 1), layout.v_at(x, p, ny - 2), layout.hy)),
                Side::Left => 0.5
                    * (one(layout.u_at(x, 1, p - 1), layout.u_at(x, 2, p - 1), layout.hx)
                        + one(layout.u_at(x, 1, p), layout.u_at(x, 2, p), layout.hx)),
                Side::Right => 0.5
                    * (one(layout.u_at(x, nx - 1, p - 1), layout.u_at(x, nx - 2, p - 1), layout.hx)
                        + one(layout.u_at(x, nx - 1, p), layout.u_at(x, nx - 2, p), layout.hx)),
                _ => unreachable!(),
            };
            val.abs()
        })
        .collect()
}

/// Boundary pairing `Σ_b w_b a_b c_b` with the wall-length weights.
pub fn boundary_inner(layout: &Layout, a: &[f64], c: &[f64]) -> f64 {
    (0..layout.n_bd).map(|b| layout.bd_weight(b) * a[b] * c[b]).sum()
}

#[derive(Debug, Clone, Copy)]
pub struct IdentityCheck {
    /// `⟨Dg, (𝒜ᵀ − k)v⟩`.
    pub pairing: f64,
    /// `ν₀⟨∂v/∂ν, g⟩_Γ`.
    pub boundary: f64,
    pub residual: f64,
    /// Set when the boundary pairing vanished and `residual` is absolute.
    pub absolute: bool,
}

/// Compares the interior pairing of the Dirichlet map against the boundary
/// pairing with the normal derivative. `v` is extended, solenoidal, with a
/// zero trace.
pub fn adjoint_identity(ops: &Operators, dmap: &DirichletMap, v: &[f64], g: &[f64]) -> IdentityCheck {
    let l = &ops.layout;
    let n = l.n_int;
    let psi = dmap.apply(g);
    let m_int = ops.oseen_int();
    let mtv = m_int.matvec_t(&v[..n]);
    let w = l.hx * l.hy;
    let pairing: f64 = (0..n).map(|k| psi[k] * (mtv[k] - dmap.k * v[k])).sum::<f64>() * w;
    let dn = normal_derivative_trace(l, &v[..n]);
    let boundary = ops.nu0 * boundary_inner(l, &dn, g);
    let diff = (pairing - boundary).abs();
    if boundary == 0.0 && diff != 0.0 {
        IdentityCheck { pairing, boundary, residual: diff, absolute: true }
    } else {
        IdentityCheck {
            pairing,
            boundary,
            residual: diff / (boundary.abs() + f64::EPSILON),
            absolute: false,
        }
    }
}

/// Smooth random solenoidal field with zero wall values: the discrete curl
/// of `s(x,y)·sin²(πx)sin²(πy)` with `s` a random combination of low modes.
pub fn random_solenoidal(layout: &Layout, rng: &mut impl Rng, modes: usize) -> Vec<f64> {
    let coef: Vec<f64> = (0..modes * modes).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let lx = layout.nx as f64 * layout.hx;
    let ly = layout.ny as f64 * layout.hy;
    layout.curl_of(|x, y| {
        let (sx, sy) = ((PI * x / lx).sin(), (PI * y / ly).sin());
        let mut s = 0.0;
        for a in 0..modes {
            for b in 0..modes {
                s += coef[a + modes * b]
                    * (a as f64 * PI * x / lx).cos()
                    * (b as f64 * PI * y / ly).cos();
            }
        }
        s * sx * sx * sy * sy
    })
}

/// Smooth random tangential boundary data vanishing at the corners.
pub fn random_boundary_data(layout: &Layout, rng: &mut impl Rng, modes: usize) -> Vec<f64> {
    let mut coef = [[0.0; 4]; 8];
    for row in coef.iter_mut().take(modes.min(8)) {
        for c in row.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
    }
    (0..layout.n_bd)
        .map(|b| {
            let d = layout.bd[b];
            let (s, side) = match d.side {
                Side::Bottom => (d.pos as f64 / layout.nx as f64, 0),
                Side::Right => (d.pos as f64 / layout.ny as f64, 1),
                Side::Top => (d.pos as f64 / layout.nx as f64, 2),
                Side::Left => (d.pos as f64 / layout.ny as f64, 3),
                _ => unreachable!(),
            };
            (0..modes.min(8))
                .map(|m| coef[m][side] * ((m + 1) as f64 * PI * s).sin())
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct UcpReport {
    /// Largest `|Δu − ∇p|` over interior faces.
    pub interior_residual: f64,
    /// Largest of `|u|` and `|∇u|` extrapolated to the face `x = 0`.
    pub cauchy_data: f64,
}

/// Evaluates `u = (0, a x²)`, `p = 2a y` on the grid and checks the Stokes
/// identity `Δu = ∇p` inside and the vanishing Cauchy data on `x = 0`.
pub fn ucp_counterexample_check(layout: &Layout, a: f64) -> UcpReport {
    let (hx, hy) = (layout.hx, layout.hy);
    let u2 = |x: f64| a * x * x;
    let p = |y: f64| 2.0 * a * y;
    // the x-momentum equation holds trivially (u₁ ≡ 0, ∂p/∂x ≡ 0)
    let mut interior: f64 = 0.0;
    for j in 1..layout.ny {
        for i in 1..layout.nx - 1 {
            let x = (i as f64 + 0.5) * hx;
            let lap = (u2(x + hx) - 2.0 * u2(x) + u2(x - hx)) / (hx * hx);
            let dpdy = (p((j as f64 + 0.5) * hy) - p((j as f64 - 0.5) * hy)) / hy;
            interior = interior.max((lap - dpdy).abs());
        }
    }
    // u₂ does not vary along the face; ∂u/∂y and u₁ vanish identically
    let (f1, f2, f3) = (u2(0.5 * hx), u2(1.5 * hx), u2(2.5 * hx));
    let value = (15.0 * f1 - 10.0 * f2 + 3.0 * f3) / 8.0;
    let slope = (-2.0 * f1 + 3.0 * f2 - f3) / hx;
    let cauchy = value.abs().max(slope.abs());
    UcpReport {
        interior_residual: interior,
        cauchy_data: cauchy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainMesh;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout(n: usize) -> Layout {
        Layout::new(&DomainMesh::build(&[n, n], &[1.0, 1.0], 2).unwrap()).unwrap()
    }

    #[test]
    fn trace_of_linear_shear_is_exact() {
        // u = y(1 − y) sampled on faces: ∂u/∂ν = −1 on both horizontal walls
        let l = layout(8);
        let x = l.sample(|_, y| (y * (1.0 - y), 0.0));
        let t = normal_derivative_trace(&l, &x);
        for b in 0..l.n_bd {
            match l.bd[b].side {
                Side::Bottom => assert!((t[b] + 1.0).abs() < 1e-12),
                Side::Top => assert!((t[b] - 1.0).abs() < 1e-12),
                _ => assert!(t[b].abs() < 1e-12),
            }
        }
    }

    #[test]
    fn zero_field_gives_zero_residual() {
        let mesh = DomainMesh::build(&[8, 8], &[1.0, 1.0], 2).unwrap();
        let l = Layout::new(&mesh).unwrap();
        let ops = Operators::assemble(&mesh, 0.1, &vec![0.0; l.n_ext()]).unwrap();
        let dm = DirichletMap::new(&ops, 1e12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_boundary_data(&l, &mut rng, 3);
        let chk = adjoint_identity(&ops, &dm, &vec![0.0; l.n_ext()], &g);
        assert_eq!(chk.residual, 0.0);
    }

    #[test]
    fn counterexample_fields() {
        let l = layout(16);
        for a in [0.0, 1.0, 2.0] {
            let r = ucp_counterexample_check(&l, a);
            assert!(r.interior_residual <= 1e-12 && r.cauchy_data <= 1e-12, "{r:?}");
        }
    }
}
