mod common;

use common::{setup, spectrum, Setup};
use nsstab::feedback::{assemble_closed_loop, build_projected_system, design_gains, lift_gains, realify, DesignMethod, RealLaw};
use nsstab::linalg::{ccol, col};
use nsstab::norms::{w1q_norm, NormSuite, Norms};
use nsstab::simulation::{
    basin_search, fit_tail, real_probe, simulate_linear, simulate_nonlinear, NormKind, Plant, SimOptions,
};
use nsstab::spectral::SpectralData;
use nsstab::stabilizability::{select_actuators, PairingData, MAX_RETRIES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn suite() -> NormSuite {
    NormSuite::new(4.0, 1.125, 2).unwrap()
}

fn controlled(s: &Setup, spec: &SpectralData) -> RealLaw {
    let pairing = PairingData::new(spec, &s.ops, &s.red, &s.mesh);
    let centers: Vec<_> = spec.clusters.iter().map(|c| c.center).collect();
    let (act, _) = select_actuators(&pairing, &centers, 11, MAX_RETRIES, 1e-8).unwrap();
    let psys = build_projected_system(spec, &s.red, &act).unwrap();
    let gains = design_gains(&psys, &spec.unstable, spec.gamma0, DesignMethod::Place).unwrap();
    let law = lift_gains(spec, &act, gains, spec.gamma0);
    let cl = assemble_closed_loop(&s.red, &law).unwrap();
    realify(&s.red, &law, &cl).unwrap()
}

fn options(spec: &SpectralData) -> SimOptions {
    let mut o = SimOptions::for_rate(spec.gamma0, 3);
    o.besov = false;
    o
}

#[test]
fn zero_state_stays_at_rest() {
    let s = setup(12, 10.0);
    let spec = spectrum(&s);
    let law = controlled(&s, &spec);
    let plant = Plant::new(&s.ops, &s.red, Some(&law)).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let mut o = options(&spec);
    o.t_end /= 3.0;
    let tr = simulate_nonlinear(&plant, &norms, &vec![0.0; s.red.dim()], &o).unwrap();
    assert!(tr.series(NormKind::L2).iter().all(|v| *v == 0.0));
}

#[test]
fn linear_closed_loop_decays_at_the_closed_loop_rate() {
    let s = setup(16, 10.0);
    let spec = spectrum(&s);
    let law = controlled(&s, &spec);
    let plant = Plant::new(&s.ops, &s.red, Some(&law)).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let o = options(&spec);
    let tr = simulate_linear(&plant, &norms, &real_probe(&ccol(&spec.phi, 0)), &o).unwrap();
    assert!(!tr.truncated());
    let fit = fit_tail(&tr, NormKind::L2, 10.0 / spec.gamma0).unwrap();
    let want = law.abscissa.abs();
    assert!((fit.gamma_fit - want).abs() <= 0.10 * want, "{} vs {want}", fit.gamma_fit);
    assert!(tr.max_divergence <= 1e-8, "{:e}", tr.max_divergence);
}

#[test]
fn open_loop_has_no_basin() {
    let s = setup(16, 10.0);
    let spec = spectrum(&s);
    let plant = Plant::new(&s.ops, &s.red, None).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let probe = real_probe(&ccol(&spec.phi, 0));
    let horizon = 10.0 / spec.gamma0;
    let b = basin_search(&plant, &norms, &probe, &options(&spec), horizon, 1e-3, 10.0, 3).unwrap();
    assert_eq!(b.r1_est, 0.0);
    assert!(b.diagnostic.is_some());
}

#[test]
fn large_initial_state_is_flagged() {
    let s = setup(16, 10.0);
    let spec = spectrum(&s);
    let law = controlled(&s, &spec);
    let plant = Plant::new(&s.ops, &s.red, Some(&law)).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let probe = real_probe(&ccol(&spec.phi, 0));
    let horizon = 10.0 / spec.gamma0;
    let mut o = options(&spec);
    o.t_end = horizon;
    let amp = 1e4;
    let unit = norms.l2(&probe);
    let x0: Vec<f64> = probe.iter().map(|v| v * amp / unit).collect();
    let tr = simulate_nonlinear(&plant, &norms, &x0, &o).unwrap();
    let beta = tr.norm_at(NormKind::L2, horizon).unwrap_or(f64::INFINITY) / tr.norms[0][0];
    assert!(tr.truncated() || beta >= 1.0, "beta {beta}");
}

#[test]
fn contraction_after_the_transient() {
    let s = setup(16, 10.0);
    let spec = spectrum(&s);
    let law = controlled(&s, &spec);
    let plant = Plant::new(&s.ops, &s.red, Some(&law)).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let o = options(&spec);
    let probe = real_probe(&ccol(&spec.phi, 0));
    let tr = simulate_linear(&plant, &norms, &probe, &o).unwrap();
    let fit = fit_tail(&tr, NormKind::L2, 10.0 / spec.gamma0).unwrap();
    assert!(fit.gamma_fit > 0.0);
    let t = fit.c_fit.max(1.0).ln() / fit.gamma_fit + 1.0 / fit.gamma_fit;
    let beta = tr.norm_at(NormKind::L2, t).unwrap() / tr.norms[0][0];
    assert!(beta < 1.0, "beta({t}) = {beta}");
}

fn quadratic_constant(n: usize) -> f64 {
    let s = setup(n, 0.0);
    let plant = Plant::new(&s.ops, &s.red, None).unwrap();
    let norms = Norms::new(suite(), &s.ops.layout, &s.red).unwrap();
    let modes: Vec<Vec<f64>> = (0..6).map(|j| col(&norms.stokes.v, j)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut x = vec![0.0; s.red.dim()];
        for m in &modes {
            let c: f64 = rng.gen_range(-1.0..1.0);
            for (xi, mi) in x.iter_mut().zip(m) {
                *xi += c * mi;
            }
        }
        let unit = norms.l2(&x);
        x.iter_mut().for_each(|v| *v /= unit);
        let w = w1q_norm(&s.ops.layout, &plant.extended(&x), 4.0);
        worst = worst.max(norms.lq(&plant.nonlinear_term(&x)) / (w * w));
    }
    worst
}

#[test]
fn quadratic_bound_is_stable_under_refinement() {
    let (c16, c32) = (quadratic_constant(16), quadratic_constant(32));
    assert!(c16 > 0.0 && c32 > 0.0);
    assert!(c16.max(c32) / c16.min(c32) <= 2.0, "{c16} vs {c32}");
}
