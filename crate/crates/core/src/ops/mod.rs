//! Discrete Stokes and Oseen operators on the staggered grid, the Leray
//! projection, the solenoidal basis and the reduced (solenoidal-space)
//! operators.

pub mod adjoint;
pub mod dirichlet;
pub mod equilibrium;
pub mod layout;

use std::io::Write;

use faer::Mat;

use crate::error::{Error, Result};
use crate::linalg::sparse::{Csr, SparseLu};
use crate::mesh::{DomainMesh, Side};

pub use dirichlet::DirichletMap;
pub use equilibrium::{Equilibrium, FlowProfile};
pub use layout::{Face, Layout};

pub const TOL_DIV: f64 = 1e-9;
pub const TOL_EQ: f64 = 1e-10;
pub const COND_MAX: f64 = 1e12;

/// Assembles a sparse matrix from a linear stencil by local probing of unit
/// vectors in the extended space.
fn probe(
    layout: &Layout,
    rows: usize,
    near: impl Fn(usize) -> Vec<usize>,
    eval: impl Fn(&[f64], usize) -> f64,
) -> Csr {
    let n_ext = layout.n_ext();
    let mut e = vec![0.0; n_ext];
    let mut trip = Vec::new();
    for k in 0..n_ext {
        e[k] = 1.0;
        for r in near(k) {
            let v = eval(&e, r);
            if v != 0.0 {
                trip.push((r, k, v));
            }
        }
        e[k] = 0.0;
    }
    Csr::from_triplets(rows, n_ext, trip)
}

/// Vector Laplacian, `n_int × n_ext`.
pub fn assemble_laplacian(layout: &Layout) -> Csr {
    probe(layout, layout.n_int, |k| layout.faces_near(k, 2), |x, r| layout.laplacian_at(x, r))
}

/// Linearized convection `(ye·∇)w + (w·∇)ye`, `n_int × n_ext`.
pub fn assemble_advection(layout: &Layout, ye: &[f64]) -> Csr {
    probe(
        layout,
        layout.n_int,
        |k| layout.faces_near(k, 2),
        |x, r| layout.convection_at(ye, x, r) + layout.convection_at(x, ye, r),
    )
}

/// Divergence, `n_cells × n_ext`; the trace columns are zero.
pub fn assemble_divergence(layout: &Layout) -> Csr {
    probe(layout, layout.n_cells, |k| layout.cells_near(k), |x, c| layout.divergence_at(x, c))
}

/// Sparse operators of the linearization about an equilibrium.
#[derive(Clone)]
pub struct Operators {
    pub layout: Layout,
    pub nu0: f64,
    /// Equilibrium velocity in extended form (zero trace).
    pub ye: Vec<f64>,
    pub lap: Csr,
    pub adv: Csr,
    pub div: Csr,
    /// `ν₀L − Ao`, the Oseen operator before projection.
    pub oseen: Csr,
}

impl Operators {
    pub fn assemble(mesh: &DomainMesh, nu0: f64, ye: &[f64]) -> Result<Self> {
        if !(nu0 > 0.0) {
            return Err(Error::Mesh(format!("viscosity must be positive, got {nu0}")));
        }
        let layout = Layout::new(mesh)?;
        if ye.len() != layout.n_ext() {
            return Err(Error::Shape(format!(
                "equilibrium has {} entries, layout expects {}",
                ye.len(),
                layout.n_ext()
            )));
        }
        let lap = assemble_laplacian(&layout);
        let adv = assemble_advection(&layout, ye);
        let div = assemble_divergence(&layout);
        let oseen = lap.combine(nu0, &adv, -1.0);
        Ok(Self {
            layout,
            nu0,
            ye: ye.to_vec(),
            lap,
            adv,
            div,
            oseen,
        })
    }

    pub fn n_int(&self) -> usize {
        self.layout.n_int
    }

    /// Interior block of the Oseen operator.
    pub fn oseen_int(&self) -> Csr {
        self.oseen.columns(0..self.layout.n_int)
    }

    /// Trace block of the Oseen operator.
    pub fn oseen_bd(&self) -> Csr {
        self.oseen.columns(self.layout.n_int..self.layout.n_ext())
    }

    pub fn div_int(&self) -> Csr {
        self.div.columns(0..self.layout.n_int)
    }

    /// Applies the nonlinear convection `(z·∇)z` to an extended vector.
    pub fn nonlinear(&self, z: &[f64]) -> Vec<f64> {
        self.layout.convection(z, z)
    }

    /// Pressure gradient `G p = −Dᵀp` on interior faces.
    pub fn gradient(&self, p: &[f64]) -> Vec<f64> {
        let g = self.div.matvec_t(p);
        g[..self.layout.n_int].iter().map(|v| -v).collect()
    }

    pub fn leray(&self) -> Result<Leray> {
        Leray::new(&self.div_int())
    }

    /// Saddle-point matrix `[[M − kI, Dᵀ], [D, 0]]` with the first pressure
    /// unknown and divergence row removed.
    pub fn saddle(&self, m_int: &Csr, k: f64) -> Csr {
        let n = self.layout.n_int;
        let nc = self.layout.n_cells;
        let mut t: Vec<(usize, usize, f64)> = m_int.triplets();
        for i in 0..n {
            t.push((i, i, -k));
        }
        for (c, f, v) in self.div_int().triplets() {
            if c == 0 {
                continue;
            }
            t.push((n + c - 1, f, v));
            t.push((f, n + c - 1, v));
        }
        Csr::from_triplets(n + nc - 1, n + nc - 1, t)
    }

    pub fn write_matrix(&self, which: &str, path: &std::path::Path) -> Result<()> {
        let m = match which {
            "laplacian" => &self.lap,
            "advection" => &self.adv,
            "divergence" => &self.div,
            "oseen" => &self.oseen,
            other => return Err(Error::Config(format!("unknown matrix `{other}`"))),
        };
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        m.write_coordinate(std::io::BufWriter::new(f)).map_err(|e| Error::io(path, e))
    }

    /// Writes a velocity field as CSV, one row per cell center:
    /// `x,y,u,v` with face values averaged to the center.
    pub fn write_field_csv(&self, x: &[f64], mut w: impl Write) -> std::io::Result<()> {
        let l = &self.layout;
        writeln!(w, "x,y,u,v")?;
        for c in 0..l.n_cells {
            let (i, j) = ((c % l.nx) as isize, (c / l.nx) as isize);
            let (px, py) = l.cell_center(c);
            let u = 0.5 * (l.u_at(x, i, j) + l.u_at(x, i + 1, j));
            let v = 0.5 * (l.v_at(x, i, j) + l.v_at(x, i, j + 1));
            writeln!(w, "{px},{py},{u:e},{v:e}")?;
        }
        Ok(())
    }
}

/// Leray projection onto discretely divergence-free interior fields.
pub struct Leray {
    d: Csr,
    lu: SparseLu,
}

impl Leray {
    /// `d` is the interior divergence block, `n_cells × n_int`.
    pub fn new(d: &Csr) -> Result<Self> {
        let ddt = pinned_poisson(d);
        Ok(Self {
            d: d.clone(),
            lu: SparseLu::new(&ddt)?,
        })
    }

    /// Solves the pinned pressure Poisson system `D Dᵀ p = r`.
    pub fn poisson_solve(&self, r: &[f64]) -> Vec<f64> {
        self.lu.solve(r)
    }

    /// `x − Dᵀ(DDᵀ)⁻¹D x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let p = self.lu.solve(&self.d.matvec(x));
        let g = self.d.matvec_t(&p);
        x.iter().zip(g).map(|(a, b)| a - b).collect()
    }

    /// Dense projector; intended for small grids.
    pub fn dense(&self) -> Mat<f64> {
        let n = self.d.ncols();
        let dd = self.d.to_dense();
        let sol = self.lu.solve_mat(&dd);
        let dt = self.d.transpose();
        let corr = dt.mul_dense(&sol);
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - corr[(i, j)])
    }
}

/// `D Dᵀ` with the constant null space removed by pinning cell 0.
fn pinned_poisson(d: &Csr) -> Csr {
    let n = d.nrows();
    let dt = d.transpose();
    // D Dᵀ via row-by-row sparse products
    let mut t = Vec::new();
    let cols_of: Vec<Vec<(usize, f64)>> = (0..dt.nrows()).map(|f| dt.row(f).collect()).collect();
    for f in 0..dt.nrows() {
        for &(a, va) in &cols_of[f] {
            for &(b, vb) in &cols_of[f] {
                t.push((a, b, va * vb));
            }
        }
    }
    t.push((0, 0, 1.0));
    Csr::from_triplets(n, n, t)
}

/// Sparse discrete curl from interior vertex streamfunction values to
/// interior faces, `n_int × n_psi`.
pub fn curl_matrix(layout: &Layout) -> Csr {
    let (nx, ny) = (layout.nx, layout.ny);
    let vid = |i: usize, j: usize| -> Option<usize> {
        (i >= 1 && i < nx && j >= 1 && j < ny).then(|| (i - 1) + (nx - 1) * (j - 1))
    };
    let mut t = Vec::new();
    for j in 0..ny {
        for i in 1..nx {
            let r = layout.u_index(i, j);
            if let Some(c) = vid(i, j + 1) {
                t.push((r, c, 1.0 / layout.hy));
            }
            if let Some(c) = vid(i, j) {
                t.push((r, c, -1.0 / layout.hy));
            }
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let r = layout.v_index(i, j);
            if let Some(c) = vid(i + 1, j) {
                t.push((r, c, -1.0 / layout.hx));
            }
            if let Some(c) = vid(i, j) {
                t.push((r, c, 1.0 / layout.hx));
            }
        }
    }
    Csr::from_triplets(layout.n_int, layout.n_psi(), t)
}

/// Operators restricted to the discrete solenoidal space through an
/// orthonormal basis `Z` (columns divergence-free, zero trace).
#[derive(Clone)]
pub struct Reduced {
    pub z: Mat<f64>,
    /// Oseen operator `Zᵀ(ν₀L − Ao)Z`.
    pub a: Mat<f64>,
    /// Stokes operator `−ZᵀLZ`, symmetric positive definite.
    pub stokes: Mat<f64>,
    /// Boundary input `Zᵀ(ν₀L − Ao)` on the trace block, `n_s × n_bd`.
    pub b_bd: Mat<f64>,
}

impl Reduced {
    pub fn new(ops: &Operators) -> Result<Self> {
        let c = curl_matrix(&ops.layout).to_dense();
        let z = c.qr().compute_thin_Q();
        let n = ops.layout.n_int;
        let m_int = ops.oseen_int();
        let l_int = ops.lap.columns(0..n);
        let mz = m_int.mul_dense(&z);
        let lz = l_int.mul_dense(&z);
        let zt = z.transpose();
        let a = zt * &mz;
        let mut stokes = -(zt * &lz);
        let ns = stokes.nrows();
        for i in 0..ns {
            for j in i + 1..ns {
                let s = 0.5 * (stokes[(i, j)] + stokes[(j, i)]);
                stokes[(i, j)] = s;
                stokes[(j, i)] = s;
            }
        }
        let bd = ops.oseen_bd().to_dense();
        let b_bd = zt * &bd;
        Ok(Self { z, a, stokes, b_bd })
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// Interior field of reduced coordinates.
    pub fn lift(&self, x: &[f64]) -> Vec<f64> {
        crate::linalg::matvec(&self.z, x)
    }

    /// Reduced coordinates of an interior field (orthogonal projection).
    pub fn restrict(&self, w: &[f64]) -> Vec<f64> {
        crate::linalg::matvec_t(&self.z, &w[..self.z.nrows()])
    }
}

/// Interior faces carrying the tangential component of a collar cell,
/// with the sign of the tangent on that component.
pub fn collar_faces(mesh: &DomainMesh, layout: &Layout) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut seen = vec![false; layout.n_int];
    for c in 0..layout.n_cells {
        if mesh.collar()[c] == 0 {
            continue;
        }
        let Some(side) = mesh.collar_tangent(c) else { continue };
        let (i, j) = (c % layout.nx, c / layout.nx);
        let (faces, sign): (Vec<Option<usize>>, f64) = match side {
            Side::Bottom | Side::Top => (
                vec![
                    (i >= 1).then(|| layout.u_index(i, j)),
                    (i + 1 < layout.nx).then(|| layout.u_index(i + 1, j)),
                ],
                if side == Side::Bottom { 1.0 } else { -1.0 },
            ),
            _ => (
                vec![
                    (j >= 1).then(|| layout.v_index(i, j)),
                    (j + 1 < layout.ny).then(|| layout.v_index(i, j + 1)),
                ],
                if side == Side::Right { 1.0 } else { -1.0 },
            ),
        };
        for f in faces.into_iter().flatten() {
            if !seen[f] {
                seen[f] = true;
                out.push((f, sign));
            }
        }
    }
    out.sort_by_key(|p| p.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro, matvec};

    fn ops(n: usize) -> Operators {
        let mesh = DomainMesh::build(&[n, n], &[1.0, 1.0], 2).unwrap();
        let l = Layout::new(&mesh).unwrap();
        let ye = vec![0.0; l.n_ext()];
        Operators::assemble(&mesh, 0.1, &ye).unwrap()
    }

    #[test]
    fn gradient_is_minus_divergence_transpose() {
        let o = ops(8);
        let p: Vec<f64> = (0..o.layout.n_cells).map(|c| (c as f64 * 0.37).sin()).collect();
        let g = o.gradient(&p);
        let l = &o.layout;
        for k in 0..l.n_int {
            let want = match l.face(k) {
                Face::U(i, j) => (p[i + l.nx * j] - p[i - 1 + l.nx * j]) / l.hx,
                Face::V(i, j) => (p[i + l.nx * j] - p[i + l.nx * (j - 1)]) / l.hy,
            };
            assert!((g[k] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_interior_block_is_symmetric() {
        let o = ops(8);
        let n = o.n_int();
        let l = o.lap.columns(0..n).to_dense();
        let lt = l.transpose().to_owned();
        assert!(fro(&(&l - &lt)) < 1e-9);
    }

    #[test]
    fn basis_is_solenoidal_and_orthonormal() {
        let o = ops(8);
        let r = Reduced::new(&o).unwrap();
        assert_eq!(r.dim(), o.n_int() - (o.layout.n_cells - 1));
        let ztz = r.z.transpose() * &r.z;
        assert!(fro(&(ztz - crate::linalg::identity(r.dim()))) < 1e-10);
        let d = o.div_int();
        for j in 0..r.dim() {
            let col = crate::linalg::col(&r.z, j);
            assert!(d.matvec(&col).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn leray_matches_basis_projector() {
        let o = ops(6);
        let p = o.leray().unwrap().dense();
        let r = Reduced::new(&o).unwrap();
        let zzt = &r.z * r.z.transpose();
        assert!(fro(&(&p - &zzt)) < 1e-10);
        let x: Vec<f64> = (0..o.n_int()).map(|i| ((i * 7 % 11) as f64) - 5.0).collect();
        let a = o.leray().unwrap().apply(&x);
        let b = matvec(&p, &x);
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-10));
    }

    #[test]
    fn collar_faces_follow_the_patch() {
        use crate::mesh::PatchSide;
        let mesh = DomainMesh::build(&[16, 16], &[1.0, 1.0], 2)
            .unwrap()
            .select_patch(PatchSide::One(Side::Left), 0.25)
            .unwrap()
            .build_collar(1)
            .unwrap();
        let l = Layout::new(&mesh).unwrap();
        let faces = collar_faces(&mesh, &l);
        assert!(!faces.is_empty());
        for (f, s) in faces {
            assert!(matches!(l.face(f), Face::V(0, _)));
            assert_eq!(s, -1.0);
        }
    }
}
