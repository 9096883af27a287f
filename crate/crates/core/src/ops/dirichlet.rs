//! Boundary-to-interior map of the stationary Oseen problem.

use faer::Mat;

use super::Operators;
use crate::error::{Error, Result};
use crate::linalg::sparse::{condest_1, Csr, SparseLu};

pub const K_SCHEDULE: [f64; 4] = [0.0, 1.0, 10.0, 100.0];

/// For tangential boundary data `g`, returns the solenoidal field `ψ` with
/// trace `g` solving `(k − ν₀L + Ao)ψ + ∇π = 0`.
pub struct DirichletMap {
    pub k: f64,
    pub cond: f64,
    /// Condition estimates of the rejected shifts, in schedule order.
    pub rejected: Vec<(f64, f64)>,
    n_int: usize,
    n_bd: usize,
    m_bd: Csr,
    lu: SparseLu,
}

impl DirichletMap {
    /// Tries the shifts of the schedule in order and keeps the first one
    /// whose saddle system has a condition estimate below `cond_max`.
    pub fn new(ops: &Operators, cond_max: f64) -> Result<Self> {
        Self::with_schedule(ops, &K_SCHEDULE, cond_max)
    }

    pub fn with_schedule(ops: &Operators, schedule: &[f64], cond_max: f64) -> Result<Self> {
        let m_int = ops.oseen_int();
        let m_bd = ops.oseen_bd();
        let mut rejected = Vec::new();
        let mut last = (f64::NAN, f64::INFINITY);
        for &k in schedule {
            let s = ops.saddle(&m_int, k);
            let cond = match SparseLu::new(&s) {
                Ok(lu) => {
                    let c = condest_1(&s, &lu);
                    if c.is_finite() && c < cond_max {
                        return Ok(Self {
                            k,
                            cond: c,
                            rejected,
                            n_int: ops.layout.n_int,
                            n_bd: ops.layout.n_bd,
                            m_bd,
                            lu,
                        });
                    }
                    c
                }
                Err(_) => f64::INFINITY,
            };
            rejected.push((k, cond));
            last = (k, cond);
        }
        Err(Error::DirichletSingular {
            k: last.0,
            cond: last.1,
        })
    }

    pub fn n_bd(&self) -> usize {
        self.n_bd
    }

    /// Extended field `[ψ; g]`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n_bd);
        let rhs_top = self.m_bd.matvec(g);
        let mut rhs = vec![0.0; self.lu.dim()];
        for (r, v) in rhs.iter_mut().zip(&rhs_top) {
            *r = -v;
        }
        let sol = self.lu.solve(&rhs);
        let mut out = sol[..self.n_int].to_vec();
        out.extend_from_slice(g);
        out
    }

    /// Dense matrix whose columns are the images of the unit boundary data,
    /// `(n_int + n_bd) × n_bd`.
    pub fn matrix(&self) -> Mat<f64> {
        let n = self.n_int + self.n_bd;
        let mut m = Mat::zeros(n, self.n_bd);
        let mut e = vec![0.0; self.n_bd];
        for b in 0..self.n_bd {
            e[b] = 1.0;
            let col = self.apply(&e);
            for i in 0..n {
                m[(i, b)] = col[i];
            }
            e[b] = 0.0;
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::DomainMesh;
    use crate::ops::Layout;

    #[test]
    fn zero_data_gives_zero_field_and_traces_are_kept() {
        let mesh = DomainMesh::build(&[8, 8], &[1.0, 1.0], 2).unwrap();
        let l = Layout::new(&mesh).unwrap();
        let ops = Operators::assemble(&mesh, 0.1, &vec![0.0; l.n_ext()]).unwrap();
        let dm = DirichletMap::new(&ops, 1e12).unwrap();
        assert_eq!(dm.k, 0.0);
        assert!(dm.apply(&vec![0.0; l.n_bd]).iter().all(|v| *v == 0.0));
        let m = dm.matrix();
        for b in 0..l.n_bd {
            for c in 0..l.n_bd {
                let want = if b == c { 1.0 } else { 0.0 };
                assert_eq!(m[(l.n_int + c, b)], want);
            }
        }
    }

    #[test]
    fn escalates_when_rejected() {
        let mesh = DomainMesh::build(&[6, 6], &[1.0, 1.0], 2).unwrap();
        let l = Layout::new(&mesh).unwrap();
        let ops = Operators::assemble(&mesh, 0.1, &vec![0.0; l.n_ext()]).unwrap();
        assert!(DirichletMap::new(&ops, 1.0).is_err());
        let dm = DirichletMap::with_schedule(&ops, &[0.0, 1e4], 2e4).unwrap_or_else(|e| panic!("{e}"));
        assert!(dm.k >= 0.0);
    }
}
