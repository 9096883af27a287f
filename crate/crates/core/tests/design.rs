mod common;

use common::{setup, spectrum, Setup};
use faer::c64;
use nsstab::feedback::{
    assemble_closed_loop, build_projected_system, design_gains, feedback_rank, lift_gains, realify, DesignMethod,
    FeedbackLaw, ProjectedSystem,
};
use nsstab::linalg::{cfro, cmatvec, cnorm2, to_complex};
use nsstab::spectral::{spectral_projector, stable_abscissa, ProjectorMethod, SpectralData, SpectralOptions};
use nsstab::stabilizability::{select_actuators, ActuatorSet, PairingData, MAX_RETRIES};

const SVD_TOL: f64 = 1e-8;

struct Plant {
    s: Setup,
    spec: SpectralData,
    act: ActuatorSet,
    psys: ProjectedSystem,
}

fn plant() -> Plant {
    let s = setup(16, 10.0);
    let spec = spectrum(&s);
    let pairing = PairingData::new(&spec, &s.ops, &s.red, &s.mesh);
    let centers: Vec<_> = spec.clusters.iter().map(|c| c.center).collect();
    let (act, rank) = select_actuators(&pairing, &centers, 11, MAX_RETRIES, SVD_TOL).unwrap();
    assert!(rank.pass, "{:?}", rank.message);
    let psys = build_projected_system(&spec, &s.red, &act).unwrap();
    Plant { s, spec, act, psys }
}

fn law(p: &Plant, g1: f64, method: DesignMethod) -> FeedbackLaw {
    let gains = design_gains(&p.psys, &p.spec.unstable, g1, method).unwrap();
    lift_gains(&p.spec, &p.act, gains, g1)
}

#[test]
fn rest_state_needs_no_control() {
    let s = setup(12, 0.0);
    let spec = spectrum(&s);
    assert_eq!(spec.n_unstable, 0);
    assert_eq!(spec.phi.ncols(), 0);
    assert!(spec.gamma0 > 0.0);
}

#[test]
fn unstable_projector_properties() {
    let p = plant();
    let spec = &p.spec;
    assert!(spec.n_unstable >= 1);
    let pn = spec.eigen_projector();
    let a = to_complex(&p.s.red.a);
    let scale = cfro(&pn);
    assert!(cfro(&(&pn * &pn - &pn)) <= 1e-8 * scale);
    let trace: c64 = (0..pn.nrows()).map(|i| pn[(i, i)]).sum();
    assert!((trace.re - spec.n_unstable as f64).abs() <= 1e-8 && trace.im.abs() <= 1e-8);
    assert!(cfro(&(&a * &pn - &pn * &a)) <= 1e-8 * cfro(&a) * scale);
    assert!(spec.biorthogonality_error() <= 1e-10);
}

#[test]
fn schur_and_contour_projectors_agree() {
    let p = plant();
    let opts = SpectralOptions::default();
    let schur = spectral_projector(&p.s.red.a, &p.spec, ProjectorMethod::Schur, &opts).unwrap();
    let contour = spectral_projector(&p.s.red.a, &p.spec, ProjectorMethod::Contour, &opts).unwrap();
    let d = cfro(&(&schur - &contour)) / cfro(&schur);
    assert!(d <= 1e-6, "{d:e}");
    let sa = stable_abscissa(&p.s.red.a, &schur).unwrap();
    let next = p.spec.next_stable().unwrap().re;
    assert!((sa - next).abs() <= 1e-8 * next.abs(), "{sa} vs {next}");
    assert!(sa <= -p.spec.gamma0);
}

#[test]
fn projected_system_is_diagonal_and_hautus_full_rank() {
    let p = plant();
    let n = p.psys.n();
    let lam = &p.psys.lambda_u;
    let scale = p.spec.unstable.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { p.spec.unstable[i] } else { c64::new(0.0, 0.0) };
            assert!((lam[(i, j)] - want).norm() <= 1e-8 * scale, "({i},{j})");
        }
    }
    for r in p.psys.hautus_ranks(&p.spec.unstable, SVD_TOL).unwrap() {
        assert_eq!(r, n);
    }
}

#[test]
fn lqr_sweep_places_spectrum_left_of_each_rate() {
    let p = plant();
    let l1 = p.spec.unstable[0].re.abs();
    let mut prev = 0.0;
    for m in [0.5, 1.0, 2.0] {
        let g1 = m * l1;
        let gains = design_gains(&p.psys, &p.spec.unstable, g1, DesignMethod::ShiftedLqr).unwrap();
        assert!(gains.projected_abscissa <= -g1 + 1e-6, "x{m}: {}", gains.projected_abscissa);
        let norm = cfro(&gains.kg);
        assert!(norm >= prev * (1.0 - 1e-9), "gain norm fell at x{m}: {norm} < {prev}");
        prev = norm;
    }
}

#[test]
fn placed_loop_reaches_the_attainable_rate() {
    let p = plant();
    let next = p.spec.next_stable().unwrap().re;
    for g1 in [0.5 * next.abs(), p.spec.gamma0, 2.0 * next.abs()] {
        let l = law(&p, g1, DesignMethod::Place);
        let cl = assemble_closed_loop(&p.s.red, &l).unwrap();
        let want = (-g1).max(next);
        assert!((cl.abscissa - want).abs() <= 0.05 * want.abs(), "γ₁ = {g1}: {} vs {want}", cl.abscissa);
    }
}

#[test]
fn actuators_live_on_patch_and_collar() {
    let p = plant();
    let pairing = PairingData::new(&p.spec, &p.s.ops, &p.s.red, &p.s.mesh);
    assert_eq!(p.act.k, p.spec.k_channels());
    for b in 0..p.act.f.nrows() {
        if !pairing.patch[b] {
            assert!((0..p.act.k).all(|k| p.act.f[(b, k)] == 0.0), "boundary dof {b}");
        }
    }
    for i in 0..p.act.u.nrows() {
        if !pairing.collar[i] {
            assert!((0..p.act.k).all(|k| p.act.u[(i, k)] == 0.0), "interior face {i}");
        }
    }
    let l = law(&p, p.spec.gamma0, DesignMethod::Place);
    assert!(feedback_rank(&p.s.red, &l, 1e-10).unwrap() <= l.k());
}

#[test]
fn feedback_ignores_the_stable_subspace() {
    let p = plant();
    let l = law(&p, p.spec.gamma0, DesignMethod::Place);
    let n_s = p.s.red.dim();
    let x: Vec<c64> = (0..n_s).map(|i| c64::new(((i * 7 + 3) % 11) as f64 - 5.0, 0.0)).collect();
    let px = cmatvec(&p.spec.eigen_projector(), &x);
    let w: Vec<c64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
    let fw = cmatvec(&l.boundary_map(), &w);
    let gw = cmatvec(&l.interior_map(&p.s.red), &w);
    assert!(cnorm2(&fw) <= 1e-8 * cnorm2(&w), "{:e}", cnorm2(&fw));
    assert!(cnorm2(&gw) <= 1e-8 * cnorm2(&w), "{:e}", cnorm2(&gw));
}

#[test]
fn real_law_matches_complex_loop() {
    let p = plant();
    let g1 = p.spec.gamma0;
    let l = law(&p, g1, DesignMethod::Place);
    let cl = assemble_closed_loop(&p.s.red, &l).unwrap();
    assert!(cl.abscissa <= -p.spec.gamma0 + 1e-6);
    let real = realify(&p.s.red, &l, &cl).unwrap();
    assert!(real.f.ncols() >= l.k() && real.f.ncols() <= 2 * l.k());
    assert!(real.spectrum_mismatch <= 1e-7, "{:e}", real.spectrum_mismatch);
    assert!((real.abscissa - cl.abscissa).abs() <= 1e-7 * cl.abscissa.abs());
}
