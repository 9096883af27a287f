//! Acceptance checks, evaluated after the simulate stage.

use std::collections::BTreeMap;

use anyhow::Result;
use nsstab::linalg::{fro, matvec, norm2};
use nsstab::mesh::DomainMesh;
use nsstab::ops::adjoint::{
    adjoint_identity, normal_component_of_normal_derivative, random_boundary_data, random_solenoidal,
    ucp_counterexample_check,
};
use nsstab::ops::{equilibrium, DirichletMap, FlowProfile, Layout, Operators, COND_MAX};
use nsstab::stabilizability::{build_u, build_w, rank_test};
use rand::Rng;

use crate::config::{parse_config, EquilibriumMode, RunConfig};
use crate::pipeline::{build_design, build_model, gamma1, maxreg, run_pipeline, stage_rng, stream, Design, Model, Stage};
use crate::report::{CheckResult, SimulationSummary};

pub const CHECK_IDS: [&str; 13] =
    ["AC01", "AC02", "AC03", "AC04", "AC05", "AC06", "AC07", "AC08", "AC09", "AC10", "AC11", "AC12", "AC13"];

pub mod tol {
    pub const PROJECTION: f64 = 1e-10;
    pub const PROJECTION_SAMPLES: usize = 20;
    pub const ADJOINT_RESIDUAL: f64 = 0.05;
    pub const ADJOINT_DECREASE: f64 = 1.5;
    pub const ADJOINT_PAIRS: usize = 10;
    pub const ADJOINT_GRIDS: [usize; 2] = [32, 64];
    pub const TANGENTIAL_ORDER: f64 = 1.0;
    pub const TANGENTIAL_GRIDS: [usize; 3] = [16, 32, 64];
    pub const COUNTEREXAMPLE: f64 = 1e-12;
    pub const RANK_SVD_TOL: f64 = 1e-8;
    pub const PLACEMENT: f64 = 1e-6;
    pub const LINEAR_FIT_REL: f64 = 0.10;
    pub const CHAIN_FACTOR: f64 = 1.1;
    pub const CHAIN_PERIODS: usize = 3;
    pub const SMALL_AMPLITUDE_REL: f64 = 0.05;
    pub const BASIN_SLACK: f64 = 0.10;
    pub const REALIFY: f64 = 1e-7;
    pub const REAL_FIT_REL: f64 = 0.05;
    pub const MAXREG_SAMPLES: usize = 20;
    pub const MAXREG_GRIDS: [usize; 2] = [16, 32];
    pub const MAXREG_SPREAD: f64 = 2.0;
}

pub const NAMES: [&str; 13] = [
    "projection exactness",
    "adjoint identity",
    "tangentiality",
    "counterexample fields",
    "Kalman rank",
    "projected pole placement",
    "full closed loop",
    "nonlinear local decay",
    "basin monotonicity",
    "realification",
    "maximal regularity",
    "index gate",
    "determinism",
];

pub struct CheckInputs<'a> {
    pub cfg: &'a RunConfig,
    pub model: Option<&'a Model>,
    pub design: Option<&'a Design>,
    pub sim: Option<&'a SimulationSummary>,
    /// Canonical report of the run before verification.
    pub core_json: Option<&'a str>,
}

pub fn run_checks(inp: &CheckInputs) -> BTreeMap<String, CheckResult> {
    let mut out = BTreeMap::new();
    for (k, id) in CHECK_IDS.iter().enumerate() {
        let blank = CheckResult::new(NAMES[k]);
        let res = if !inp.cfg.check_enabled(id) {
            blank.skipped("disabled in config")
        } else {
            match evaluate(k + 1, inp, blank.clone()) {
                Ok(r) => r,
                Err(e) => blank.verdict(false).note(format!("evaluation failed: {e:#}")),
            }
        };
        out.insert(id.to_string(), res);
    }
    out
}

fn evaluate(k: usize, inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    match k {
        1 => projection(inp, r),
        2 => adjoint(inp.cfg, r),
        3 => tangentiality(inp.cfg, r),
        4 => counterexample(inp.cfg, r),
        5 => kalman(inp, r),
        6 => placement(inp, r),
        7 => closed_loop(inp, r),
        8 => nonlinear(inp, r),
        9 => basin(inp, r),
        10 => realification(inp, r),
        11 => maximal_regularity(inp.cfg, r),
        12 => Ok(index_gate(r)),
        13 => determinism(inp, r),
        _ => unreachable!(),
    }
}

fn projection(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let Some(m) = inp.model else { return Ok(r.skipped("model unavailable")) };
    let p = m.ops.leray()?.dense();
    let idem = fro(&(&p * &p - &p));
    let mut rng = stage_rng(inp.cfg.sim.probe_seed, stream::PROJECTION);
    let mut worst: f64 = 0.0;
    for _ in 0..tol::PROJECTION_SAMPLES {
        let phi: Vec<f64> = (0..m.ops.layout.n_cells).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = m.ops.gradient(&phi);
        worst = worst.max(norm2(&matvec(&p, &g)) / norm2(&g));
    }
    Ok(r.value("idempotency_fro", idem)
        .value("gradient_ratio_max", worst)
        .verdict(idem <= tol::PROJECTION && worst <= tol::PROJECTION))
}

/// Unstable flow for the adjoint check: the configured cellular flow, or the
/// reference one when the configuration is at rest.
fn unstable_flow(cfg: &RunConfig) -> (f64, FlowProfile) {
    match cfg.physics.equilibrium {
        EquilibriumMode::Cellular if cfg.physics.amplitude > 0.0 => (
            cfg.physics.nu0,
            FlowProfile { amplitude: cfg.physics.amplitude, cells: cfg.physics.cells, skew: cfg.physics.skew },
        ),
        _ => (0.1, FlowProfile { amplitude: 10.0, cells: 2, skew: 0.0 }),
    }
}

fn adjoint_residuals(cfg: &RunConfig, n: usize, nu0: f64, profile: &FlowProfile) -> Result<Vec<f64>> {
    let mesh = DomainMesh::build(&[n, n], &[1.0, 1.0], 2)?;
    let l = Layout::new(&mesh)?;
    let eq = equilibrium::from_profile(&l, nu0, profile)?;
    let ops = Operators::assemble(&mesh, nu0, &eq.ye)?;
    let dm = DirichletMap::new(&ops, COND_MAX)?;
    let mut rng = stage_rng(cfg.sim.probe_seed, stream::ADJOINT);
    Ok((0..tol::ADJOINT_PAIRS)
        .map(|_| {
            let v = random_solenoidal(&l, &mut rng, 3);
            let g = random_boundary_data(&l, &mut rng, 3);
            adjoint_identity(&ops, &dm, &v, &g).residual
        })
        .collect())
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn adjoint(cfg: &RunConfig, mut r: CheckResult) -> Result<CheckResult> {
    let (nu_u, unstable) = unstable_flow(cfg);
    let flows = [("rest", cfg.physics.nu0, FlowProfile { amplitude: 0.0, cells: 1, skew: 0.0 }), ("unstable", nu_u, unstable)];
    let [coarse, fine] = tol::ADJOINT_GRIDS;
    let mut pass = true;
    for (name, nu0, prof) in flows {
        let a = adjoint_residuals(cfg, coarse, nu0, &prof)?;
        let b = adjoint_residuals(cfg, fine, nu0, &prof)?;
        let (wa, wb) = (a.iter().copied().fold(0.0, f64::max), b.iter().copied().fold(0.0, f64::max));
        let ratio = wa / wb;
        pass &= wa <= tol::ADJOINT_RESIDUAL && ratio >= tol::ADJOINT_DECREASE;
        r = r
            .value(&format!("{name}_max_{coarse}"), wa)
            .value(&format!("{name}_max_{fine}"), wb)
            .value(&format!("{name}_median_{coarse}"), median(&a))
            .value(&format!("{name}_median_{fine}"), median(&b))
            .value(&format!("{name}_decrease"), ratio);
    }
    Ok(r.value("unstable_amplitude", unstable.amplitude).verdict(pass))
}

/// Least-squares slope of `log e` against `log h`.
pub fn observed_order(h: &[f64], e: &[f64]) -> f64 {
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (xm, ym) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    sxy / sxx
}

fn tangentiality(cfg: &RunConfig, r: CheckResult) -> Result<CheckResult> {
    let fields = 3;
    let mut h = Vec::new();
    let mut errs = vec![Vec::new(); fields];
    for n in tol::TANGENTIAL_GRIDS {
        let l = Layout::new(&DomainMesh::build(&[n, n], &[1.0, 1.0], 2)?)?;
        h.push(1.0 / n as f64);
        let mut rng = stage_rng(cfg.sim.probe_seed, stream::TANGENTIAL);
        for e in errs.iter_mut() {
            let x = random_solenoidal(&l, &mut rng, 3);
            let nn = normal_component_of_normal_derivative(&l, &x);
            e.push(nn.iter().fold(0.0, |a: f64, v| a.max(v.abs())));
        }
    }
    let orders: Vec<f64> = errs.iter().map(|e| observed_order(&h, e)).collect();
    let worst = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let mut r = r.value("order_min", worst);
    for (k, n) in tol::TANGENTIAL_GRIDS.iter().enumerate() {
        r = r.value(&format!("normal_max_{n}"), errs.iter().map(|e| e[k]).fold(0.0, f64::max));
    }
    Ok(r.verdict(worst >= tol::TANGENTIAL_ORDER))
}

fn counterexample(cfg: &RunConfig, r: CheckResult) -> Result<CheckResult> {
    let l = Layout::new(&DomainMesh::build(&cfg.mesh.dims, &cfg.mesh.lengths, cfg.mesh.d)?)?;
    let mut r = r;
    let mut pass = true;
    for a in [1.0, 2.0] {
        let u = ucp_counterexample_check(&l, a);
        pass &= u.interior_residual <= tol::COUNTEREXAMPLE && u.cauchy_data <= tol::COUNTEREXAMPLE;
        r = r.value(&format!("interior_a{a}"), u.interior_residual).value(&format!("cauchy_a{a}"), u.cauchy_data);
    }
    Ok(r.verdict(pass))
}

fn kalman(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let Some(m) = inp.model else { return Ok(r.skipped("model unavailable")) };
    let Some(d) = inp.design else { return Ok(r.skipped("no unstable eigenvalues")) };
    let centers: Vec<_> = m.spec.clusters.iter().map(|c| c.center).collect();
    let rep = rank_test(
        &build_w(&d.pairing, &d.act.f),
        &build_u(&d.pairing, &d.act.u),
        m.ops.nu0,
        &centers,
        tol::RANK_SVD_TOL,
    )?;
    let mut r = r;
    for (i, e) in rep.per_eigenvalue.iter().enumerate() {
        r = r
            .value(&format!("rank_{}", i + 1), e.rank as f64)
            .value(&format!("multiplicity_{}", i + 1), e.multiplicity as f64)
            .value(&format!("boundary_only_rank_{}", i + 1), e.boundary_only_rank as f64);
    }
    let full = rep.per_eigenvalue.iter().all(|e| e.rank == e.multiplicity);
    Ok(r.verdict(full))
}

fn placement(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let (Some(m), Some(d)) = (inp.model, inp.design) else { return Ok(r.skipped("no unstable eigenvalues")) };
    let l1 = m.spec.eigenvalues[0].re.abs();
    let mut r = r.value("re_lambda1", m.spec.eigenvalues[0].re);
    let mut pass = true;
    for mult in [1.0, 2.0] {
        let g1 = mult * l1;
        let gains = nsstab::feedback::design_gains(&d.psys, &m.spec.unstable, g1, inp.cfg.design.method)?;
        pass &= gains.projected_abscissa <= -g1 + tol::PLACEMENT;
        r = r.value(&format!("projected_abscissa_x{mult}"), gains.projected_abscissa);
    }
    Ok(r.verdict(pass))
}

/// Relative distance between a fitted decay rate and `|abscissa|`.
fn rate_error(rate: f64, abscissa: f64) -> f64 {
    (rate + abscissa).abs() / abscissa.abs()
}

/// Abscissa of the simulated loop.
fn loop_abscissa(m: &Model, d: Option<&Design>) -> f64 {
    d.map_or(m.spec.eigenvalues[0].re, |d| d.real.abscissa)
}

fn closed_loop(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let (Some(m), Some(s)) = (inp.model, inp.sim) else { return Ok(r.skipped("simulation unavailable")) };
    let abscissa = loop_abscissa(m, inp.design);
    let gamma0 = m.spec.gamma0;
    let Some(fit) = &s.linear else { return Ok(r.value("abscissa", abscissa).verdict(false).note("no linear fit")) };
    let err = rate_error(fit.gamma_fit, abscissa);
    Ok(r.value("abscissa", abscissa)
        .value("gamma0", gamma0)
        .value("fitted_rate", fit.gamma_fit)
        .value("relative_error", err)
        .verdict(abscissa <= -gamma0 && err <= tol::LINEAR_FIT_REL))
}

fn nonlinear(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let (Some(m), Some(s)) = (inp.model, inp.sim) else { return Ok(r.skipped("simulation unavailable")) };
    let abscissa = loop_abscissa(m, inp.design);
    let first = &s.nonlinear[0];
    let last = s.nonlinear.last().unwrap();
    let mut r = r.value("amplitude", first.amplitude).value("small_amplitude", last.amplitude);
    let (Some(f1), Some(fl)) = (&first.fit, &last.fit) else { return Ok(r.verdict(false).note("no decay fit")) };
    let chain_ok = first.chain.len() >= tol::CHAIN_PERIODS
        && first.chain.iter().take(tol::CHAIN_PERIODS).all(|c| *c <= tol::CHAIN_FACTOR);
    for (n, c) in first.chain.iter().enumerate().take(tol::CHAIN_PERIODS) {
        r = r.value(&format!("chain_{}", n + 1), *c);
    }
    let err = rate_error(fl.gamma_fit, abscissa);
    r = r
        .value("fitted_rate", f1.gamma_fit)
        .value("beta_t", f1.beta_t)
        .value("small_amplitude_rate", fl.gamma_fit)
        .value("small_amplitude_error", err);
    Ok(r.verdict(f1.gamma_fit > 0.0 && chain_ok && err <= tol::SMALL_AMPLITUDE_REL && !first.blowup))
}

fn basin(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let Some(s) = inp.sim else { return Ok(r.skipped("simulation unavailable")) };
    let Some(doubled) = &s.doubled_rate else { return Ok(r.skipped("no unstable eigenvalues")) };
    let (Some(a), Some(b)) = (&s.nonlinear[0].fit, &doubled.fit) else {
        return Ok(r.verdict(false).note("no decay fit"));
    };
    let mut r = r.value("rate_gamma1", a.gamma_fit).value("rate_2gamma1", b.gamma_fit);
    if let Some(bs) = &s.basin {
        r = r.value("r1_est", bs.r1_est);
    }
    Ok(r.verdict(b.gamma_fit >= (1.0 - tol::BASIN_SLACK) * a.gamma_fit))
}

fn realification(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let Some(d) = inp.design else { return Ok(r.skipped("no unstable eigenvalues")) };
    let Some(fit) = inp.sim.and_then(|s| s.linear.as_ref()) else { return Ok(r.skipped("simulation unavailable")) };
    let err = rate_error(fit.gamma_fit, d.closed.abscissa);
    Ok(r.value("spectrum_mismatch", d.real.spectrum_mismatch)
        .value("complex_abscissa", d.closed.abscissa)
        .value("fitted_rate", fit.gamma_fit)
        .value("relative_error", err)
        .verdict(d.real.spectrum_mismatch <= tol::REALIFY && err <= tol::REAL_FIT_REL))
}

fn maximal_regularity(cfg: &RunConfig, r: CheckResult) -> Result<CheckResult> {
    if cfg.physics.equilibrium == EquilibriumMode::Newton {
        return Ok(r.skipped("the force file is tied to one grid"));
    }
    let mut consts = Vec::new();
    let mut r = r;
    for n in tol::MAXREG_GRIDS {
        let mut c = cfg.clone();
        c.mesh.dims = vec![n; c.mesh.d];
        let model = build_model(&c)?;
        let design = build_design(&c, &model, gamma1(&c, &model.spec))?;
        let res = maxreg(&c, &model, design.as_ref(), tol::MAXREG_SAMPLES)?;
        r = r.value(&format!("constant_{n}"), res.constant).value(&format!("samples_{n}"), res.ratios.len() as f64);
        consts.push(res.constant);
    }
    let finite = consts.iter().all(|c| c.is_finite() && *c > 0.0);
    let spread = consts.iter().copied().fold(0.0, f64::max) / consts.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(r.value("spread", spread).verdict(finite && spread <= tol::MAXREG_SPREAD))
}

pub const GATE_ACCEPT: &str = "[mesh]\nd = 2\ndims = 16\n[physics]\nnu0 = 0.1\n[norms]\nq = 4\np = 1.125\n";

fn index_gate(r: CheckResult) -> CheckResult {
    let accepted = parse_config(GATE_ACCEPT).is_ok();
    let rejected = parse_config(&GATE_ACCEPT.replace("1.125", "1.2"));
    let named = rejected.as_ref().err().is_some_and(|e| e.to_string().contains("p < 2q/(2q−1) violated"));
    let r = match &rejected {
        Err(e) => r.note(e.to_string()),
        Ok(_) => r.note("p = 1.2 was accepted"),
    };
    r.value("accepted", accepted as u8 as f64).value("rejected_named", named as u8 as f64).verdict(accepted && named)
}

fn determinism(inp: &CheckInputs, r: CheckResult) -> Result<CheckResult> {
    let Some(first) = inp.core_json else { return Ok(r.skipped("the run did not complete")) };
    let again = run_pipeline(inp.cfg, Stage::Simulate);
    if let Some(e) = again.error {
        return Ok(r.verdict(false).note(format!("rerun failed: {e:#}")));
    }
    let second = again.report.canonical_json();
    let differing = first.lines().zip(second.lines()).filter(|(a, b)| a != b).count()
        + first.lines().count().abs_diff(second.lines().count());
    Ok(r.value("bytes", first.len() as f64).value("differing_lines", differing as f64).verdict(first == second))
}
