//! Degree-of-freedom layout of a 2D MAC grid and the stencil kernels that
//! act on it.
//!
//! A velocity vector is stored in extended form `[interior; trace]`. The
//! interior part holds `u` on the interior x-faces and `v` on the interior
//! y-faces; the trace part holds one tangential wall value per non-corner
//! boundary node, oriented along that node's tangent. Normal velocity on
//! the walls is zero. Tangential wall values enter the stencils through
//! ghost values `2·wall − interior`.

use crate::error::{Error, Result};
use crate::mesh::{DomainMesh, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    /// x-face at `x = i·hx`, row `j`.
    U(usize, usize),
    /// y-face at `y = j·hy`, column `i`.
    V(usize, usize),
}

/// A tangential boundary degree of freedom.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryDof {
    pub node: usize,
    pub side: Side,
    /// Vertex index along the wall (`i` on bottom/top, `j` on left/right).
    pub pos: usize,
    /// Sign of the tangent along the velocity component it drives.
    pub tau_sign: f64,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub n_u: usize,
    pub n_v: usize,
    pub n_int: usize,
    pub n_bd: usize,
    pub n_cells: usize,
    pub bd: Vec<BoundaryDof>,
    node_to_bd: Vec<Option<usize>>,
    bottom: Vec<usize>,
    top: Vec<usize>,
    left: Vec<usize>,
    right: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl Layout {
    pub fn new(mesh: &DomainMesh) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(Error::Unsupported(
                "operators are implemented for 2D meshes only".into(),
            ));
        }
        let (nx, ny) = (mesh.dims()[0], mesh.dims()[1]);
        let (hx, hy) = (mesh.h()[0], mesh.h()[1]);
        let n_u = (nx - 1) * ny;
        let n_v = nx * (ny - 1);
        let mut bd = Vec::new();
        let mut node_to_bd = vec![None; mesh.nodes().len()];
        let mut bottom = vec![NONE; nx + 1];
        let mut top = vec![NONE; nx + 1];
        let mut left = vec![NONE; ny + 1];
        let mut right = vec![NONE; ny + 1];
        for node in mesh.nodes() {
            if mesh.is_corner(node.index) {
                continue;
            }
            let (pos, sign) = match node.side {
                Side::Bottom => (node.vertex[0], 1.0),
                Side::Top => (node.vertex[0], -1.0),
                Side::Right => (node.vertex[1], 1.0),
                Side::Left => (node.vertex[1], -1.0),
                _ => unreachable!(),
            };
            let b = bd.len();
            match node.side {
                Side::Bottom => bottom[pos] = b,
                Side::Top => top[pos] = b,
                Side::Left => left[pos] = b,
                Side::Right => right[pos] = b,
                _ => unreachable!(),
            }
            node_to_bd[node.index] = Some(b);
            bd.push(BoundaryDof {
                node: node.index,
                side: node.side,
                pos,
                tau_sign: sign,
            });
        }
        let n_bd = bd.len();
        debug_assert_eq!(n_bd, 2 * (nx - 1) + 2 * (ny - 1));
        Ok(Self {
            nx,
            ny,
            hx,
            hy,
            n_u,
            n_v,
            n_int: n_u + n_v,
            n_bd,
            n_cells: nx * ny,
            bd,
            node_to_bd,
            bottom,
            top,
            left,
            right,
        })
    }

    pub fn n_ext(&self) -> usize {
        self.n_int + self.n_bd
    }

    /// Number of interior streamfunction vertices, equal to the dimension
    /// of the discrete solenoidal space.
    pub fn n_psi(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    pub fn bd_of_node(&self, node: usize) -> Option<usize> {
        self.node_to_bd.get(node).copied().flatten()
    }

    pub fn u_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i >= 1 && i < self.nx && j < self.ny);
        (i - 1) + (self.nx - 1) * j
    }

    pub fn v_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j >= 1 && j < self.ny);
        self.n_u + i + self.nx * (j - 1)
    }

    pub fn face(&self, k: usize) -> Face {
        if k < self.n_u {
            Face::U(k % (self.nx - 1) + 1, k / (self.nx - 1))
        } else {
            let r = k - self.n_u;
            Face::V(r % self.nx, r / self.nx + 1)
        }
    }

    pub fn face_position(&self, f: Face) -> (f64, f64) {
        match f {
            Face::U(i, j) => (i as f64 * self.hx, (j as f64 + 0.5) * self.hy),
            Face::V(i, j) => ((i as f64 + 0.5) * self.hx, j as f64 * self.hy),
        }
    }

    pub fn cell_center(&self, c: usize) -> (f64, f64) {
        let (i, j) = (c % self.nx, c / self.nx);
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }

    /// Position of the wall point carrying boundary DOF `b`.
    pub fn bd_position(&self, b: usize) -> (f64, f64) {
        let d = self.bd[b];
        let lx = self.nx as f64 * self.hx;
        let ly = self.ny as f64 * self.hy;
        match d.side {
            Side::Bottom => (d.pos as f64 * self.hx, 0.0),
            Side::Top => (d.pos as f64 * self.hx, ly),
            Side::Left => (0.0, d.pos as f64 * self.hy),
            Side::Right => (lx, d.pos as f64 * self.hy),
            _ => unreachable!(),
        }
    }

    /// Quadrature weight of a boundary DOF (length of wall it represents).
    pub fn bd_weight(&self, b: usize) -> f64 {
        match self.bd[b].side {
            Side::Bottom | Side::Top => self.hx,
            _ => self.hy,
        }
    }

    /// Grid anchor of an extended index, used to localize stencil probes.
    fn anchor(&self, k: usize) -> (isize, isize) {
        if k < self.n_int {
            match self.face(k) {
                Face::U(i, j) | Face::V(i, j) => (i as isize, j as isize),
            }
        } else {
            let d = self.bd[k - self.n_int];
            match d.side {
                Side::Bottom => (d.pos as isize, 0),
                Side::Top => (d.pos as isize, self.ny as isize),
                Side::Left => (0, d.pos as isize),
                Side::Right => (self.nx as isize, d.pos as isize),
                _ => unreachable!(),
            }
        }
    }

    /// Interior faces whose stencils can touch extended index `k`.
    pub(crate) fn faces_near(&self, k: usize, radius: isize) -> Vec<usize> {
        let (ci, cj) = self.anchor(k);
        let mut out = Vec::new();
        for j in (cj - radius).max(0)..=(cj + radius).min(self.ny as isize) {
            for i in (ci - radius).max(0)..=(ci + radius).min(self.nx as isize) {
                let (i, j) = (i as usize, j as usize);
                if i >= 1 && i < self.nx && j < self.ny {
                    out.push(self.u_index(i, j));
                }
                if i < self.nx && j >= 1 && j < self.ny {
                    out.push(self.v_index(i, j));
                }
            }
        }
        out
    }

    /// Cells whose divergence can touch extended index `k`.
    pub(crate) fn cells_near(&self, k: usize) -> Vec<usize> {
        let (ci, cj) = self.anchor(k);
        let mut out = Vec::new();
        for j in (cj - 1).max(0)..=(cj + 1).min(self.ny as isize - 1) {
            for i in (ci - 1).max(0)..=(ci + 1).min(self.nx as isize - 1) {
                out.push(i as usize + self.nx * j as usize);
            }
        }
        out
    }

    /// `u` at x-face `(i, j)` for `i ∈ 0..=nx`, `j ∈ -1..=ny`, using wall
    /// zeros and tangential ghosts.
    pub fn u_at(&self, x: &[f64], i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        if i <= 0 || i >= nx {
            return 0.0;
        }
        if j < 0 {
            let wall = self.wall(x, self.bottom[i as usize]);
            return 2.0 * wall - x[self.u_index(i as usize, 0)];
        }
        if j >= ny {
            let wall = self.wall(x, self.top[i as usize]);
            return 2.0 * wall - x[self.u_index(i as usize, (ny - 1) as usize)];
        }
        x[self.u_index(i as usize, j as usize)]
    }

    /// `v` at y-face `(i, j)` for `i ∈ -1..=nx`, `j ∈ 0..=ny`.
    pub fn v_at(&self, x: &[f64], i: isize, j: isize) -> f64 {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        if j <= 0 || j >= ny {
            return 0.0;
        }
        if i < 0 {
            let wall = self.wall(x, self.left[j as usize]);
            return 2.0 * wall - x[self.v_index(0, j as usize)];
        }
        if i >= nx {
            let wall = self.wall(x, self.right[j as usize]);
            return 2.0 * wall - x[self.v_index((nx - 1) as usize, j as usize)];
        }
        x[self.v_index(i as usize, j as usize)]
    }

    fn wall(&self, x: &[f64], b: usize) -> f64 {
        if b == NONE || x.len() <= self.n_int {
            return 0.0;
        }
        x[self.n_int + b] * self.bd[b].tau_sign
    }

    /// Vector Laplacian at interior face `k`.
    pub fn laplacian_at(&self, x: &[f64], k: usize) -> f64 {
        let (ihx2, ihy2) = (1.0 / (self.hx * self.hx), 1.0 / (self.hy * self.hy));
        match self.face(k) {
            Face::U(i, j) => {
                let (i, j) = (i as isize, j as isize);
                let c = self.u_at(x, i, j);
                (self.u_at(x, i + 1, j) - 2.0 * c + self.u_at(x, i - 1, j)) * ihx2
                    + (self.u_at(x, i, j + 1) - 2.0 * c + self.u_at(x, i, j - 1)) * ihy2
            }
            Face::V(i, j) => {
                let (i, j) = (i as isize, j as isize);
                let c = self.v_at(x, i, j);
                (self.v_at(x, i + 1, j) - 2.0 * c + self.v_at(x, i - 1, j)) * ihx2
                    + (self.v_at(x, i, j + 1) - 2.0 * c + self.v_at(x, i, j - 1)) * ihy2
            }
        }
    }

    /// Centered `(a·∇)b` at interior face `k`.
    pub fn convection_at(&self, a: &[f64], b: &[f64], k: usize) -> f64 {
        let (h2x, h2y) = (2.0 * self.hx, 2.0 * self.hy);
        match self.face(k) {
            Face::U(i, j) => {
                let (i, j) = (i as isize, j as isize);
                let ax = self.u_at(a, i, j);
                let ay = 0.25
                    * (self.v_at(a, i - 1, j)
                        + self.v_at(a, i, j)
                        + self.v_at(a, i - 1, j + 1)
                        + self.v_at(a, i, j + 1));
                let dx = (self.u_at(b, i + 1, j) - self.u_at(b, i - 1, j)) / h2x;
                let dy = (self.u_at(b, i, j + 1) - self.u_at(b, i, j - 1)) / h2y;
                ax * dx + ay * dy
            }
            Face::V(i, j) => {
                let (i, j) = (i as isize, j as isize);
                let ax = 0.25
                    * (self.u_at(a, i, j - 1)
                        + self.u_at(a, i + 1, j - 1)
                        + self.u_at(a, i, j)
                        + self.u_at(a, i + 1, j));
                let ay = self.v_at(a, i, j);
                let dx = (self.v_at(b, i + 1, j) - self.v_at(b, i - 1, j)) / h2x;
                let dy = (self.v_at(b, i, j + 1) - self.v_at(b, i, j - 1)) / h2y;
                ax * dx + ay * dy
            }
        }
    }

    /// Divergence in cell `c`. Only interior faces and wall zeros enter.
    pub fn divergence_at(&self, x: &[f64], c: usize) -> f64 {
        let (i, j) = ((c % self.nx) as isize, (c / self.nx) as isize);
        (self.u_at(x, i + 1, j) - self.u_at(x, i, j)) / self.hx
            + (self.v_at(x, i, j + 1) - self.v_at(x, i, j)) / self.hy
    }

    pub fn divergence(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_cells).map(|c| self.divergence_at(x, c)).collect()
    }

    /// `(a·∇)b` on all interior faces.
    pub fn convection(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        (0..self.n_int).map(|k| self.convection_at(a, b, k)).collect()
    }

    pub fn laplacian(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_int).map(|k| self.laplacian_at(x, k)).collect()
    }

    /// Samples a continuous velocity field onto the interior faces, with a
    /// zero trace.
    pub fn sample(&self, f: impl Fn(f64, f64) -> (f64, f64)) -> Vec<f64> {
        let mut x = vec![0.0; self.n_ext()];
        for (k, xk) in x.iter_mut().enumerate().take(self.n_int) {
            let face = self.face(k);
            let (px, py) = self.face_position(face);
            let (fu, fv) = f(px, py);
            *xk = match face {
                Face::U(..) => fu,
                Face::V(..) => fv,
            };
        }
        x
    }

    /// Extended vector from a nodal streamfunction `psi(x, y)`: `u = ∂ψ/∂y`,
    /// `v = −∂ψ/∂x` by differences across each face. Exactly divergence-free.
    pub fn curl_of(&self, psi: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let nodal = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i == self.nx || j == self.ny {
                0.0
            } else {
                psi(i as f64 * self.hx, j as f64 * self.hy)
            }
        };
        let mut x = vec![0.0; self.n_ext()];
        for j in 0..self.ny {
            for i in 1..self.nx {
                x[self.u_index(i, j)] = (nodal(i, j + 1) - nodal(i, j)) / self.hy;
            }
        }
        for j in 1..self.ny {
            for i in 0..self.nx {
                x[self.v_index(i, j)] = -(nodal(i + 1, j) - nodal(i, j)) / self.hx;
            }
        }
        x
    }

    /// Cell-centered velocity magnitudes from face averages.
    pub fn cell_speeds(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_cells)
            .map(|c| {
                let (i, j) = ((c % self.nx) as isize, (c / self.nx) as isize);
                let u = 0.5 * (self.u_at(x, i, j) + self.u_at(x, i + 1, j));
                let v = 0.5 * (self.v_at(x, i, j) + self.v_at(x, i, j + 1));
                u.hypot(v)
            })
            .collect()
    }

    /// Inner product of interior parts weighted by the cell area.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = self.hx * self.hy;
        a[..self.n_int].iter().zip(&b[..self.n_int]).map(|(x, y)| x * y).sum::<f64>() * w
    }
}
