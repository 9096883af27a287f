//! Box domains on a MAC-staggered grid: boundary vertices with their
//! outward normal and tangent frames, a boundary patch on which the
//! boundary actuators live, and the interior collar next to that patch.
//!
//! Boundary nodes are the grid vertices lying on the boundary. In 2D they
//! are numbered counterclockwise starting at the origin, and each side owns
//! the half-open run of vertices beginning at its first corner, so every
//! side of an `n`-cell edge owns exactly `n` nodes. In 3D they are numbered
//! lexicographically and a vertex on an edge or corner belongs to the first
//! face in the order x-min, x-max, y-min, y-max, z-min, z-max.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A face of the box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
    Front,
    Back,
}

impl Side {
    pub const ALL_2D: [Side; 4] = [Side::Bottom, Side::Right, Side::Top, Side::Left];
    pub const ALL_3D: [Side; 6] = [
        Side::Left,
        Side::Right,
        Side::Bottom,
        Side::Top,
        Side::Front,
        Side::Back,
    ];

    /// Axis normal to the face.
    pub fn axis(self) -> usize {
        match self {
            Side::Left | Side::Right => 0,
            Side::Bottom | Side::Top => 1,
            Side::Front | Side::Back => 2,
        }
    }

    /// `true` for the face at the upper end of its axis.
    pub fn is_upper(self) -> bool {
        matches!(self, Side::Right | Side::Top | Side::Back)
    }

    pub fn outward_normal(self) -> [f64; 3] {
        let mut n = [0.0; 3];
        n[self.axis()] = if self.is_upper() { 1.0 } else { -1.0 };
        n
    }

    /// Tangent frame. In 2D this is the normal rotated by +90 degrees, so
    /// the tangent runs counterclockwise around the box.
    pub fn tangents(self, d: usize) -> Vec<[f64; 3]> {
        if d == 2 {
            let n = self.outward_normal();
            vec![[-n[1], n[0], 0.0]]
        } else {
            let axes: Vec<usize> = (0..3).filter(|&a| a != self.axis()).collect();
            axes.into_iter()
                .map(|a| {
                    let mut t = [0.0; 3];
                    t[a] = 1.0;
                    t
                })
                .collect()
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
            Side::Front => "front",
            Side::Back => "back",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Patch selector: one face or the whole boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchSide {
    One(Side),
    All,
}

impl FromStr for PatchSide {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let side = match s.to_ascii_lowercase().as_str() {
            "all" => return Ok(PatchSide::All),
            "left" | "xmin" => Side::Left,
            "right" | "xmax" => Side::Right,
            "bottom" | "ymin" => Side::Bottom,
            "top" | "ymax" => Side::Top,
            "front" | "zmin" => Side::Front,
            "back" | "zmax" => Side::Back,
            other => return Err(Error::Mesh(format!("unknown side `{other}`"))),
        };
        Ok(PatchSide::One(side))
    }
}

/// A grid vertex on the boundary.
#[derive(Debug, Clone)]
pub struct BoundaryNode {
    pub index: usize,
    pub vertex: [usize; 3],
    pub position: [f64; 3],
    pub side: Side,
    pub normal: [f64; 3],
    pub tangents: Vec<[f64; 3]>,
    /// Boundary cell attached to this node; the collar grows inward from it.
    pub owned_cell: [usize; 3],
}

#[derive(Debug, Clone)]
pub struct DomainMesh {
    d: usize,
    dims: [usize; 3],
    lengths: [f64; 3],
    h: [f64; 3],
    nodes: Vec<BoundaryNode>,
    side_nodes: HashMap<Side, Vec<usize>>,
    patch: Vec<usize>,
    collar: Vec<u8>,
    collar_tangent: Vec<Option<Side>>,
    collar_depth: usize,
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl DomainMesh {
    /// Builds a box mesh with `dims[a]` cells of width `lengths[a] / dims[a]`
    /// along axis `a`. The patch starts as the whole boundary and the collar
    /// is empty.
    pub fn build(dims: &[usize], lengths: &[f64], d: usize) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::Mesh(format!("dimension must be 2 or 3, got {d}")));
        }
        if dims.len() != d || lengths.len() != d {
            return Err(Error::Mesh(format!(
                "expected {d} cell counts and lengths, got {} and {}",
                dims.len(),
                lengths.len()
            )));
        }
        if let Some(&bad) = dims.iter().find(|&&n| n < 4) {
            return Err(Error::Mesh(format!(
                "at least 4 cells per axis are required, got {bad}"
            )));
        }
        if lengths.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Mesh("lengths must be positive".into()));
        }
        let mut dm = [1usize; 3];
        let mut lm = [1.0f64; 3];
        let mut hm = [1.0f64; 3];
        for a in 0..d {
            dm[a] = dims[a];
            lm[a] = lengths[a];
            hm[a] = lengths[a] / dims[a] as f64;
        }
        let nodes = if d == 2 {
            perimeter_nodes(dm, hm)
        } else {
            surface_nodes(dm, hm)
        };
        let mut side_nodes: HashMap<Side, Vec<usize>> = HashMap::new();
        for n in &nodes {
            side_nodes.entry(n.side).or_default().push(n.index);
        }
        let ncells = dm[0] * dm[1] * dm[2];
        let patch = (0..nodes.len()).collect();
        Ok(Self {
            d,
            dims: dm,
            lengths: lm,
            h: hm,
            nodes,
            side_nodes,
            patch,
            collar: vec![0; ncells],
            collar_tangent: vec![None; ncells],
            collar_depth: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.d]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.d]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.d]
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.d].iter().product()
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn cell_index(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn nodes(&self) -> &[BoundaryNode] {
        &self.nodes
    }

    pub fn side_nodes(&self, side: Side) -> &[usize] {
        self.side_nodes.get(&side).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn sides(&self) -> &'static [Side] {
        if self.d == 2 {
            &Side::ALL_2D
        } else {
            &Side::ALL_3D
        }
    }

    /// Node indices of the patch, ascending.
    pub fn patch(&self) -> &[usize] {
        &self.patch
    }

    pub fn in_patch(&self, node: usize) -> bool {
        self.patch.binary_search(&node).is_ok()
    }

    /// Collar indicator per cell.
    pub fn collar(&self) -> &[u8] {
        &self.collar
    }

    pub fn collar_depth(&self) -> usize {
        self.collar_depth
    }

    /// Side whose tangent defines the tangential-like direction of a collar cell.
    pub fn collar_tangent(&self, cell: usize) -> Option<Side> {
        self.collar_tangent[cell]
    }

    /// `true` when the vertex sits on two or more faces.
    pub fn is_corner(&self, node: usize) -> bool {
        let v = self.nodes[node].vertex;
        (0..self.d)
            .filter(|&a| v[a] == 0 || v[a] == self.dims[a])
            .count()
            > 1
    }

    /// Selects the patch: a centered run covering `fraction` of one side,
    /// or the whole boundary. Resets any collar.
    pub fn select_patch(mut self, side: PatchSide, fraction: f64) -> Result<Self> {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::Mesh(format!(
                "patch fraction must lie in (0, 1], got {fraction}"
            )));
        }
        let patch = match side {
            PatchSide::All => {
                if fraction < 1.0 {
                    return Err(Error::Mesh(
                        "side `all` selects the whole boundary; use fraction 1".into(),
                    ));
                }
                (0..self.nodes.len()).collect()
            }
            PatchSide::One(s) => {
                if s.axis() >= self.d {
                    return Err(Error::Mesh(format!("side {s} does not exist in {}D", self.d)));
                }
                self.centered_run(s, fraction)?
            }
        };
        self.patch = patch;
        self.clear_collar();
        debug_assert!(self.patch_connected());
        Ok(self)
    }

    fn centered_run(&self, side: Side, fraction: f64) -> Result<Vec<usize>> {
        let nodes = self.side_nodes(side);
        if self.d == 2 {
            let n = nodes.len();
            let count = ((fraction * n as f64) + 1e-9).floor() as usize;
            if count == 0 {
                return Err(Error::EmptyPatch {
                    fraction,
                    side_nodes: n,
                });
            }
            let start = (n - count) / 2;
            let mut run: Vec<usize> = nodes[start..start + count].to_vec();
            run.sort_unstable();
            Ok(run)
        } else {
            let tang: Vec<usize> = (0..3).filter(|&a| a != side.axis()).collect();
            let mut ranges = Vec::new();
            for &a in &tang {
                let n = self.dims[a] + 1;
                let count = ((fraction * n as f64) + 1e-9).floor() as usize;
                if count == 0 {
                    return Err(Error::EmptyPatch {
                        fraction,
                        side_nodes: n,
                    });
                }
                let start = (n - count) / 2;
                ranges.push(start..start + count);
            }
            let mut run: Vec<usize> = nodes
                .iter()
                .copied()
                .filter(|&i| {
                    let v = self.nodes[i].vertex;
                    ranges[0].contains(&v[tang[0]]) && ranges[1].contains(&v[tang[1]])
                })
                .collect();
            if run.is_empty() {
                return Err(Error::EmptyPatch {
                    fraction,
                    side_nodes: nodes.len(),
                });
            }
            run.sort_unstable();
            Ok(run)
        }
    }

    fn clear_collar(&mut self) {
        self.collar.iter_mut().for_each(|m| *m = 0);
        self.collar_tangent.iter_mut().for_each(|t| *t = None);
        self.collar_depth = 0;
    }

    /// Marks the interior cells within `depth` cells of the patch along the
    /// inward normal. Cells owned by corner nodes are included.
    pub fn build_collar(mut self, depth: usize) -> Result<Self> {
        if depth == 0 {
            return Err(Error::Mesh("collar depth must be at least 1".into()));
        }
        let limit = self.dims[..self.d].iter().map(|n| n / 2).min().unwrap_or(0);
        if depth > limit {
            return Err(Error::CollarTooDeep { depth, limit });
        }
        if self.patch.is_empty() {
            return Err(Error::Mesh("collar needs a nonempty patch".into()));
        }
        self.clear_collar();
        for &p in &self.patch {
            let node = &self.nodes[p];
            let axis = node.side.axis();
            for off in 0..depth {
                let mut c = node.owned_cell;
                if node.side.is_upper() {
                    c[axis] -= off;
                } else {
                    c[axis] += off;
                }
                let ci = self.cell_index(c);
                self.collar[ci] = 1;
                if self.collar_tangent[ci].is_none() {
                    self.collar_tangent[ci] = Some(node.side);
                }
            }
        }
        self.collar_depth = depth;
        Ok(self)
    }

    /// Breadth-first search over the boundary adjacency restricted to the patch.
    pub fn patch_connected(&self) -> bool {
        if self.patch.is_empty() {
            return false;
        }
        let in_patch: HashMap<usize, usize> = self
            .patch
            .iter()
            .enumerate()
            .map(|(k, &n)| (n, k))
            .collect();
        let mut seen = vec![false; self.patch.len()];
        let mut queue = VecDeque::from([self.patch[0]]);
        seen[0] = true;
        let mut count = 1;
        while let Some(n) = queue.pop_front() {
            for m in self.boundary_neighbors(n) {
                if let Some(&k) = in_patch.get(&m) {
                    if !seen[k] {
                        seen[k] = true;
                        count += 1;
                        queue.push_back(m);
                    }
                }
            }
        }
        count == self.patch.len()
    }

    /// Edge neighbours of a boundary node on the boundary graph.
    pub fn boundary_neighbors(&self, node: usize) -> Vec<usize> {
        let n = self.nodes.len();
        if self.d == 2 {
            return vec![(node + n - 1) % n, (node + 1) % n];
        }
        let v = self.nodes[node].vertex;
        let mut out = Vec::new();
        for a in 0..3 {
            for delta in [-1i64, 1] {
                let w = v[a] as i64 + delta;
                if w < 0 || w > self.dims[a] as i64 {
                    continue;
                }
                let mut u = v;
                u[a] = w as usize;
                if let Some(idx) = self.node_at(u) {
                    out.push(idx);
                }
            }
        }
        out
    }

    /// Node index of a boundary vertex.
    pub fn node_at(&self, v: [usize; 3]) -> Option<usize> {
        if self.d == 2 {
            let (nx, ny) = (self.dims[0], self.dims[1]);
            let (i, j) = (v[0], v[1]);
            if v[2] != 0 || i > nx || j > ny {
                return None;
            }
            if j == 0 && i < nx {
                Some(i)
            } else if i == nx && j < ny {
                Some(nx + j)
            } else if j == ny && i > 0 {
                Some(nx + ny + (nx - i))
            } else if i == 0 && j > 0 {
                Some(2 * nx + ny + (ny - j))
            } else {
                None
            }
        } else {
            self.nodes
                .binary_search_by(|n| {
                    let a = n.vertex;
                    (a[2], a[1], a[0]).cmp(&(v[2], v[1], v[0]))
                })
                .ok()
        }
    }

    /// Checks every structural invariant of the mesh.
    pub fn check_invariants(&self) -> Result<()> {
        for n in &self.nodes {
            let nn = dot(&n.normal, &n.normal);
            if (nn - 1.0).abs() > 1e-12 {
                return Err(Error::Mesh(format!("node {} normal not unit", n.index)));
            }
            for (a, t) in n.tangents.iter().enumerate() {
                if dot(t, &n.normal).abs() > 1e-12 {
                    return Err(Error::Mesh(format!("node {} tangent not orthogonal", n.index)));
                }
                for (b, s) in n.tangents.iter().enumerate() {
                    let want = if a == b { 1.0 } else { 0.0 };
                    if (dot(t, s) - want).abs() > 1e-12 {
                        return Err(Error::Mesh(format!("node {} frame not orthonormal", n.index)));
                    }
                }
            }
        }
        if self.patch.is_empty() {
            return Err(Error::Mesh("patch is empty".into()));
        }
        if self.patch.iter().any(|&p| p >= self.nodes.len()) {
            return Err(Error::Mesh("patch is not a subset of the boundary".into()));
        }
        if !self.patch_connected() {
            return Err(Error::Mesh("patch is not edge-connected".into()));
        }
        if self.collar.iter().any(|&m| m > 1) {
            return Err(Error::Mesh("collar mask outside {0, 1}".into()));
        }
        for (ci, &m) in self.collar.iter().enumerate() {
            if m == 0 {
                continue;
            }
            let c = self.cell_coords(ci);
            let supported = self.patch.iter().any(|&p| {
                let o = self.nodes[p].owned_cell;
                (0..3)
                    .map(|a| c[a].abs_diff(o[a]))
                    .max()
                    .unwrap_or(0)
                    < self.collar_depth.max(1)
            });
            if !supported {
                return Err(Error::Mesh(format!(
                    "collar cell {ci} is not within {} cells of the patch",
                    self.collar_depth
                )));
            }
        }
        Ok(())
    }

    pub fn cell_coords(&self, ci: usize) -> [usize; 3] {
        let i = ci % self.dims[0];
        let j = (ci / self.dims[0]) % self.dims[1];
        let k = ci / (self.dims[0] * self.dims[1]);
        [i, j, k]
    }

    /// Plain-text dump, one line per boundary node:
    /// `index x y [z] nu_x nu_y [nu_z]`.
    pub fn write_boundary_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        for n in &self.nodes {
            let pos: Vec<String> = n.position[..self.d].iter().map(|x| format!("{x}")).collect();
            let nu: Vec<String> = n.normal[..self.d].iter().map(|x| format!("{x}")).collect();
            writeln!(w, "{} {} {}", n.index, pos.join(" "), nu.join(" "))?;
        }
        Ok(())
    }

    pub fn dump_boundary(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_boundary_dump(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn make_node(index: usize, v: [usize; 3], side: Side, dims: [usize; 3], h: [f64; 3], d: usize) -> BoundaryNode {
    let mut owned = [0usize; 3];
    for a in 0..3 {
        owned[a] = v[a].min(dims[a] - 1);
    }
    // 2D counterclockwise ownership: a node owns the boundary cell that
    // follows it along the loop.
    if d == 2 {
        owned = match side {
            Side::Bottom => [v[0], 0, 0],
            Side::Right => [dims[0] - 1, v[1], 0],
            Side::Top => [v[0] - 1, dims[1] - 1, 0],
            Side::Left => [0, v[1] - 1, 0],
            _ => unreachable!(),
        };
    }
    BoundaryNode {
        index,
        vertex: v,
        position: [v[0] as f64 * h[0], v[1] as f64 * h[1], if d == 3 { v[2] as f64 * h[2] } else { 0.0 }],
        side,
        normal: side.outward_normal(),
        tangents: side.tangents(d),
        owned_cell: owned,
    }
}

fn perimeter_nodes(dims: [usize; 3], h: [f64; 3]) -> Vec<BoundaryNode> {
    let (nx, ny) = (dims[0], dims[1]);
    let mut out = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        out.push(make_node(out.len(), [i, 0, 0], Side::Bottom, dims, h, 2));
    }
    for j in 0..ny {
        out.push(make_node(out.len(), [nx, j, 0], Side::Right, dims, h, 2));
    }
    for i in (1..=nx).rev() {
        out.push(make_node(out.len(), [i, ny, 0], Side::Top, dims, h, 2));
    }
    for j in (1..=ny).rev() {
        out.push(make_node(out.len(), [0, j, 0], Side::Left, dims, h, 2));
    }
    out
}

fn surface_nodes(dims: [usize; 3], h: [f64; 3]) -> Vec<BoundaryNode> {
    let mut out = Vec::new();
    for k in 0..=dims[2] {
        for j in 0..=dims[1] {
            for i in 0..=dims[0] {
                let v = [i, j, k];
                let side = if i == 0 {
                    Side::Left
                } else if i == dims[0] {
                    Side::Right
                } else if j == 0 {
                    Side::Bottom
                } else if j == dims[1] {
                    Side::Top
                } else if k == 0 {
                    Side::Front
                } else if k == dims[2] {
                    Side::Back
                } else {
                    continue;
                };
                out.push(make_node(out.len(), v, side, dims, h, 3));
            }
        }
    }
    out
}
