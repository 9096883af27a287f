#![allow(dead_code)]

use nsstab::mesh::{DomainMesh, PatchSide, Side};
use nsstab::ops::{equilibrium, Equilibrium, FlowProfile, Layout, Operators, Reduced};
use nsstab::spectral::{compute_spectrum, SpectralData, SpectralOptions};

pub const NU0: f64 = 0.1;

pub struct Setup {
    pub mesh: DomainMesh,
    pub eq: Equilibrium,
    pub ops: Operators,
    pub red: Reduced,
}

pub fn mesh(n: usize) -> DomainMesh {
    DomainMesh::build(&[n, n], &[1.0, 1.0], 2)
        .unwrap()
        .select_patch(PatchSide::One(Side::Left), 0.5)
        .unwrap()
        .build_collar(2)
        .unwrap()
}

/// Cellular flow with two cells per side at the given amplitude.
pub fn setup(n: usize, amplitude: f64) -> Setup {
    let mesh = mesh(n);
    let layout = Layout::new(&mesh).unwrap();
    let eq = equilibrium::from_profile(&layout, NU0, &FlowProfile { amplitude, cells: 2, skew: 0.0 }).unwrap();
    let ops = Operators::assemble(&mesh, NU0, &eq.ye).unwrap();
    let red = Reduced::new(&ops).unwrap();
    Setup { mesh, eq, ops, red }
}

pub fn spectrum(s: &Setup) -> SpectralData {
    compute_spectrum(&s.red.a, &SpectralOptions::default()).unwrap()
}
