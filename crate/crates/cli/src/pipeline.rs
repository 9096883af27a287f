//! Stage orchestration: mesh → equilibrium → spectrum → design → simulate → verify.

use std::path::Path;

use anyhow::{bail, Context, Result};
use faer::Mat;
use nsstab::feedback::{
    assemble_closed_loop, build_projected_system, design_gains, lift_gains, realify, ClosedLoop, FeedbackLaw,
    ProjectedSystem, RealLaw,
};
use nsstab::linalg::{ccol, col};
use nsstab::mesh::DomainMesh;
use nsstab::norms::{maxreg_constant, MaxRegResult, Norms};
use nsstab::ops::{equilibrium, Equilibrium, FlowProfile, Layout, Operators, Reduced, TOL_EQ};
use nsstab::simulation::{
    basin_search, fit_tail, real_probe, simulate_linear, simulate_nonlinear, NormKind, Plant, SimOptions,
    Trajectory,
};
use nsstab::spectral::{compute_spectrum, spectral_projector, stable_abscissa, ProjectorMethod, SpectralData, SpectralOptions};
use nsstab::stabilizability::{select_actuators, ActuatorSet, ControllabilityReport, PairingData, MAX_RETRIES};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checks::{run_checks, CheckInputs};
use crate::config::{EquilibriumMode, Gamma1Policy, RunConfig};
use crate::report::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Mesh,
    Equilibrium,
    Spectrum,
    Design,
    Simulate,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Mesh, Stage::Equilibrium, Stage::Spectrum, Stage::Design, Stage::Simulate, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mesh => "mesh",
            Stage::Equilibrium => "equilibrium",
            Stage::Spectrum => "spectrum",
            Stage::Design => "design",
            Stage::Simulate => "simulate",
            Stage::Verify => "verify",
        }
    }
}

/// Random streams, one per randomized step.
pub mod stream {
    pub const ACTUATORS: u64 = 1;
    pub const MAXREG: u64 = 2;
    pub const PROJECTION: u64 = 3;
    pub const ADJOINT: u64 = 4;
    pub const TANGENTIAL: u64 = 5;
}

pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn stage_seed(seed: u64, stream: u64) -> u64 {
    stage_rng(seed, stream).next_u64()
}

/// Number of low Stokes modes used as forcing shapes.
pub const MAXREG_SHAPES: usize = 8;
pub const MAXREG_T: f64 = 1.0;

/// Discretization, equilibrium and spectrum.
pub struct Model {
    pub mesh: DomainMesh,
    pub eq: Equilibrium,
    pub ops: Operators,
    pub red: Reduced,
    pub spec: SpectralData,
    pub norms: Norms,
}

/// Actuators and feedback at one design rate.
pub struct Design {
    pub pairing: PairingData,
    pub act: ActuatorSet,
    pub rank: ControllabilityReport,
    pub psys: ProjectedSystem,
    pub law: FeedbackLaw,
    pub closed: ClosedLoop,
    pub real: RealLaw,
}

impl Design {
    pub fn gamma1(&self) -> f64 {
        self.law.gamma1
    }
}

pub fn build_mesh(cfg: &RunConfig) -> Result<DomainMesh> {
    let m = &cfg.mesh;
    Ok(DomainMesh::build(&m.dims, &m.lengths, m.d)?
        .select_patch(m.patch(), m.patch_fraction)?
        .build_collar(m.collar_depth)?)
}

pub fn profile(cfg: &RunConfig) -> FlowProfile {
    let p = &cfg.physics;
    match p.equilibrium {
        EquilibriumMode::Rest => FlowProfile { amplitude: 0.0, cells: p.cells, skew: 0.0 },
        _ => FlowProfile { amplitude: p.amplitude, cells: p.cells, skew: p.skew },
    }
}

/// Reads whitespace- or comma-separated values.
pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().with_context(|| format!("bad number `{s}` in {}", path.display())))
        .collect()
}

pub fn build_equilibrium(cfg: &RunConfig, mesh: &DomainMesh) -> Result<Equilibrium> {
    let l = Layout::new(mesh)?;
    let nu0 = cfg.physics.nu0;
    match cfg.physics.equilibrium {
        EquilibriumMode::Rest | EquilibriumMode::Cellular => Ok(equilibrium::from_profile(&l, nu0, &profile(cfg))?),
        EquilibriumMode::Newton => {
            let path = cfg.physics.force_file.as_ref().expect("validated at load time");
            let f = read_vector(path)?;
            if f.len() != l.n_int {
                bail!("force file {} has {} values, the grid has {} interior faces", path.display(), f.len(), l.n_int);
            }
            let guess = vec![0.0; l.n_ext()];
            let pressure = vec![0.0; l.n_cells];
            Ok(equilibrium::newton(&l, nu0, &f, &guess, &pressure, cfg.physics.newton_max_iter, TOL_EQ)?)
        }
    }
}

pub fn spectral_options(cfg: &RunConfig) -> SpectralOptions {
    SpectralOptions { svd_tol: cfg.design.svd_tol, ..SpectralOptions::default() }
}

pub fn build_model(cfg: &RunConfig) -> Result<Model> {
    let mesh = build_mesh(cfg)?;
    let eq = build_equilibrium(cfg, &mesh)?;
    let ops = Operators::assemble(&mesh, cfg.physics.nu0, &eq.ye)?;
    let red = Reduced::new(&ops)?;
    let spec = compute_spectrum(&red.a, &spectral_options(cfg))?;
    let norms = Norms::new(cfg.suite(), &ops.layout, &red)?;
    Ok(Model { mesh, eq, ops, red, spec, norms })
}

/// `|Re λ_{N+1}|`.
pub fn stable_rate(spec: &SpectralData) -> f64 {
    spec.next_stable().map_or(spec.gamma0, |z| z.re.abs())
}

pub fn gamma1(cfg: &RunConfig, spec: &SpectralData) -> f64 {
    let window = 0.5 * (spec.gamma0 + stable_rate(spec));
    match cfg.design.gamma1 {
        Gamma1Policy::Window => window,
        Gamma1Policy::Multiple(m) => {
            let g = m * spec.eigenvalues[0].re.abs();
            if g > 0.0 {
                g
            } else {
                window
            }
        }
    }
}

/// Actuator selection and gains at rate `g1`; `None` when nothing is unstable.
pub fn build_design(cfg: &RunConfig, model: &Model, g1: f64) -> Result<Option<Design>> {
    let spec = &model.spec;
    if spec.n_unstable == 0 {
        return Ok(None);
    }
    let pairing = PairingData::new(spec, &model.ops, &model.red, &model.mesh);
    let centers: Vec<_> = spec.clusters.iter().map(|c| c.center).collect();
    let seed = stage_seed(cfg.seed, stream::ACTUATORS);
    let (act, rank) = select_actuators(&pairing, &centers, seed, MAX_RETRIES, cfg.design.svd_tol)?;
    let psys = build_projected_system(spec, &model.red, &act)?;
    let (law, closed, real) = design_law(cfg, model, &act, &psys, g1)?;
    Ok(Some(Design { pairing, act, rank, psys, law, closed, real }))
}

pub fn design_law(
    cfg: &RunConfig,
    model: &Model,
    act: &ActuatorSet,
    psys: &ProjectedSystem,
    g1: f64,
) -> Result<(FeedbackLaw, ClosedLoop, RealLaw)> {
    let gains = design_gains(psys, &model.spec.unstable, g1, cfg.design.method)?;
    let law = lift_gains(&model.spec, act, gains, g1);
    let closed = assemble_closed_loop(&model.red, &law)?;
    let real = realify(&model.red, &law, &closed)?;
    Ok((law, closed, real))
}

/// Dominant unstable mode, or the lowest Stokes mode when nothing is unstable.
pub fn probe(model: &Model) -> Vec<f64> {
    if model.spec.n_unstable > 0 {
        real_probe(&ccol(&model.spec.phi, 0))
    } else {
        col(&model.norms.stokes.v, 0)
    }
}

pub fn horizon(cfg: &RunConfig, spec: &SpectralData) -> f64 {
    cfg.sim.horizon.unwrap_or(10.0 / spec.gamma0)
}

pub fn sim_options(cfg: &RunConfig, spec: &SpectralData) -> SimOptions {
    let t = horizon(cfg, spec);
    let mut o = SimOptions::for_rate(spec.gamma0, cfg.sim.periods);
    o.t_end = t * cfg.sim.periods as f64;
    o.dt = cfg.sim.dt.unwrap_or(t / nsstab::simulation::STEPS_PER_HORIZON);
    o.log_stride = cfg.sim.log_stride;
    o.snapshot_stride = cfg.output.snapshot_stride;
    o.pressure = true;
    o
}

/// Generator of the simulated loop: the real closed loop or the open loop.
pub fn generator<'a>(model: &'a Model, design: Option<&'a Design>) -> &'a Mat<f64> {
    design.map_or(&model.red.a, |d| &d.real.af)
}

pub fn maxreg(cfg: &RunConfig, model: &Model, design: Option<&Design>, samples: usize) -> Result<MaxRegResult> {
    let nm = &model.norms;
    let shapes: Vec<Vec<f64>> = (0..MAXREG_SHAPES.min(nm.stokes.v.ncols())).map(|j| col(&nm.stokes.v, j)).collect();
    let norm = |x: &[f64]| nm.lq(x);
    let trace = |x: &[f64]| nm.besov(x);
    Ok(maxreg_constant(
        generator(model, design),
        &shapes,
        &norm,
        &trace,
        cfg.norms.p,
        samples,
        MAXREG_T,
        cfg.sim.maxreg_steps,
        stage_seed(cfg.sim.probe_seed, stream::MAXREG),
    )?)
}

pub fn nonlinear_run(plant: &Plant, norms: &Norms, probe: &[f64], amplitude: f64, opts: &SimOptions, t: f64) -> Result<(NonlinearRun, Trajectory)> {
    let unit = norms.l2(probe);
    let x0: Vec<f64> = probe.iter().map(|v| v * amplitude / unit).collect();
    let tr = simulate_nonlinear(plant, norms, &x0, opts)?;
    let fit = fit_tail(&tr, NormKind::L2, t).ok();
    let chain = match &fit {
        Some(f) if !tr.truncated() => {
            let z0 = tr.norms[0][0];
            (1..=((opts.t_end / t).round() as i32))
                .map(|n| tr.norm_at(NormKind::L2, n as f64 * t).map_or(f64::NAN, |z| z / (f.beta_t.powi(n) * z0)))
                .collect()
        }
        _ => Vec::new(),
    };
    let run = NonlinearRun {
        amplitude,
        fit,
        chain,
        blowup: tr.blowup,
        cfl_truncated: tr.cfl_truncated,
        max_divergence: tr.max_divergence,
    };
    Ok((run, tr))
}

/// All products of a run.
pub struct Outcome {
    pub report: RunReport,
    /// Early products, moved into `model` once the spectrum stage runs.
    pub mesh: Option<DomainMesh>,
    pub eq: Option<Equilibrium>,
    pub ops: Option<Operators>,
    pub model: Option<Model>,
    pub design: Option<Design>,
    pub linear: Option<Trajectory>,
    pub nonlinear: Vec<Trajectory>,
    pub error: Option<anyhow::Error>,
}

impl Outcome {
    /// Exit code contract: 0 iff no stage failed and no enabled check failed.
    pub fn success(&self) -> bool {
        self.error.is_none() && self.report.failing_checks().is_empty()
    }

    pub fn mesh(&self) -> Option<&DomainMesh> {
        self.model.as_ref().map(|m| &m.mesh).or(self.mesh.as_ref())
    }

    pub fn equilibrium(&self) -> Option<(&Operators, &Equilibrium)> {
        match &self.model {
            Some(m) => Some((&m.ops, &m.eq)),
            None => self.ops.as_ref().zip(self.eq.as_ref()),
        }
    }
}

fn mesh_summary(model_mesh: &DomainMesh, ops: Option<&Operators>, red: Option<&Reduced>) -> MeshSummary {
    MeshSummary {
        dims: model_mesh.dims().to_vec(),
        h: model_mesh.h().to_vec(),
        boundary_nodes: model_mesh.nodes().len(),
        patch_nodes: model_mesh.patch().len(),
        collar_cells: model_mesh.collar().iter().filter(|&&c| c > 0).count(),
        interior_dofs: ops.map_or(0, |o| o.layout.n_int),
        boundary_dofs: ops.map_or(0, |o| o.layout.n_bd),
        solenoidal_dim: red.map_or(0, |r| r.dim()),
    }
}

fn pair(z: faer::c64) -> [f64; 2] {
    [z.re, z.im]
}

fn spectrum_summary(model: &Model, stable: f64) -> SpectrumSummary {
    let s = &model.spec;
    SpectrumSummary {
        n_unstable: s.n_unstable,
        n_distinct: s.n_distinct(),
        multiplicities: s.clusters.iter().map(|c| c.multiplicity).collect(),
        k: s.k_channels(),
        unstable: s.unstable.iter().copied().map(pair).collect(),
        leading: s.eigenvalues.iter().take(8).copied().map(pair).collect(),
        next_stable: s.next_stable().map(pair),
        gap: s.gap,
        gamma0: s.gamma0,
        stable_abscissa: stable,
        max_eigen_residual: s.residuals.iter().copied().fold(0.0, f64::max),
        biorthogonality_error: s.biorthogonality_error(),
        message: (s.n_unstable == 0).then(|| "no control needed".to_string()),
    }
}

fn design_summary(d: &Design) -> DesignSummary {
    let (p, q) = d.law.gain_norms();
    DesignSummary {
        gamma1: d.law.gamma1,
        method: serde_json::to_value(d.law.gains.method).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        fell_back: d.law.gains.fell_back,
        rank: d.rank.clone(),
        projected_abscissa: d.law.gains.projected_abscissa,
        boundary_gain_norms: p,
        interior_gain_norms: q,
        closed_loop_abscissa: d.closed.abscissa,
        real_abscissa: d.real.abscissa,
        real_channels: [d.real.f.ncols(), d.real.u.ncols()],
        realify_mismatch: d.real.spectrum_mismatch,
    }
}

struct Runner {
    until: Stage,
    report: RunReport,
    error: Option<anyhow::Error>,
}

impl Runner {
    fn wants(&self, stage: Stage) -> bool {
        self.error.is_none() && stage <= self.until
    }

    fn record<T>(&mut self, stage: Stage, result: Result<T>, message: Option<String>) -> Option<T> {
        match result {
            Ok(v) => {
                self.report.stages.push(StageStatus { stage: stage.name().into(), status: Status::Ok, message });
                Some(v)
            }
            Err(e) => {
                let e = e.context(format!("stage `{}` failed", stage.name()));
                self.report.stages.push(StageStatus {
                    stage: stage.name().into(),
                    status: Status::Failed,
                    message: Some(format!("{:#}", e)),
                });
                self.error = Some(e);
                None
            }
        }
    }

    fn skip_rest(&mut self) {
        for s in Stage::ALL {
            if s <= self.until && !self.report.stages.iter().any(|r| r.stage == s.name()) {
                self.report.stages.push(StageStatus {
                    stage: s.name().into(),
                    status: Status::Skipped,
                    message: self.error.as_ref().map(|_| "an earlier stage failed".to_string()),
                });
            }
        }
    }
}

/// Runs the stages up to `until`. Failures are recorded per stage and stop
/// the later stages; the report is always returned.
pub fn run_pipeline(cfg: &RunConfig, until: Stage) -> Outcome {
    let report = RunReport {
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        timestamp: now_seconds(),
        stages: Vec::new(),
        mesh: None,
        equilibrium: None,
        spectrum: None,
        design: None,
        simulation: None,
        checks: Default::default(),
    };
    let mut r = Runner { until, report, error: None };
    let mut mesh = None;
    let mut eq = None;
    let mut model = None;
    let mut design = None;
    let mut linear = None;
    let mut nonlinear = Vec::new();

    if r.wants(Stage::Mesh) {
        let out = build_mesh(cfg);
        if let Some(m) = r.record(Stage::Mesh, out, None) {
            r.report.mesh = Some(mesh_summary(&m, None, None));
            mesh = Some(m);
        }
    }
    if r.wants(Stage::Equilibrium) {
        let m = mesh.as_ref().unwrap();
        let out = build_equilibrium(cfg, m)
            .and_then(|e| -> Result<_> { Ok((Operators::assemble(m, cfg.physics.nu0, &e.ye)?, e)) });
        let msg = out.as_ref().ok().map(|(_, e)| e).filter(|e| !e.converged).map(|e| {
            format!("Newton stopped after {} iterations at residual {:.3e}; best iterate kept", e.iterations, e.residual_norm)
        });
        if let Some((ops, e)) = r.record(Stage::Equilibrium, out, msg) {
            r.report.equilibrium = Some(EquilibriumSummary {
                mode: format!("{:?}", cfg.physics.equilibrium).to_lowercase(),
                residual_norm: e.residual_norm,
                divergence_norm: e.divergence_norm,
                iterations: e.iterations,
                converged: e.converged,
                max_velocity: e.ye.iter().fold(0.0, |a: f64, v| a.max(v.abs())),
            });
            eq = Some((ops, e));
        }
    }
    if r.wants(Stage::Spectrum) {
        let out = (|| -> Result<(Model, f64)> {
            let mesh = mesh.take().unwrap();
            let (ops, eq) = eq.take().unwrap();
            let red = Reduced::new(&ops)?;
            let opts = spectral_options(cfg);
            let spec = compute_spectrum(&red.a, &opts)?;
            let p = spectral_projector(&red.a, &spec, ProjectorMethod::Schur, &opts)?;
            let stable = stable_abscissa(&red.a, &p)?;
            let norms = Norms::new(cfg.suite(), &ops.layout, &red)?;
            Ok((Model { mesh, eq, ops, red, spec, norms }, stable))
        })();
        if let Some((m, stable)) = r.record(Stage::Spectrum, out, None) {
            r.report.mesh = Some(mesh_summary(&m.mesh, Some(&m.ops), Some(&m.red)));
            let s = spectrum_summary(&m, stable);
            let msg = s.message.clone();
            r.report.stages.last_mut().unwrap().message = msg;
            r.report.spectrum = Some(s);
            model = Some(m);
        }
    }
    if r.wants(Stage::Design) {
        let m = model.as_ref().unwrap();
        let g1 = gamma1(cfg, &m.spec);
        let out = build_design(cfg, m, g1);
        let msg = if m.spec.n_unstable == 0 {
            Some("no control needed".to_string())
        } else if g1 <= m.spec.gamma0 {
            Some(format!("gamma1 = {g1:.4} does not exceed gamma0 = {:.4}; decay below gamma0 is not guaranteed", m.spec.gamma0))
        } else {
            None
        };
        if let Some(d) = r.record(Stage::Design, out, msg) {
            r.report.design = d.as_ref().map(design_summary);
            design = d;
        }
    }
    if r.wants(Stage::Simulate) {
        let m = model.as_ref().unwrap();
        let out = simulate_stage(cfg, m, design.as_ref());
        if let Some((summary, lin, nl)) = r.record(Stage::Simulate, out, None) {
            r.report.simulation = Some(summary);
            linear = Some(lin);
            nonlinear = nl;
        }
    }
    if r.wants(Stage::Verify) {
        let core = r.report.canonical_json();
        let inputs = CheckInputs {
            cfg,
            model: model.as_ref(),
            design: design.as_ref(),
            sim: r.report.simulation.as_ref(),
            core_json: Some(&core),
        };
        let checks = run_checks(&inputs);
        r.report.checks = checks;
        let failing = r.report.failing_checks().len();
        r.report.stages.push(StageStatus {
            stage: Stage::Verify.name().into(),
            status: Status::Ok,
            message: (failing > 0).then(|| format!("{failing} check(s) failed")),
        });
    }
    r.skip_rest();
    let (ops, eq) = eq.unzip();
    Outcome { report: r.report, mesh, eq, ops, model, design, linear, nonlinear, error: r.error }
}

fn simulate_stage(cfg: &RunConfig, m: &Model, design: Option<&Design>) -> Result<(SimulationSummary, Trajectory, Vec<Trajectory>)> {
    let real = design.map(|d| &d.real);
    let plant = Plant::new(&m.ops, &m.red, real)?;
    let opts = sim_options(cfg, &m.spec);
    let t = horizon(cfg, &m.spec);
    let probe = probe(m);
    let unit = m.norms.l2(&probe);
    let w0: Vec<f64> = probe.iter().map(|v| v / unit).collect();
    let lin = simulate_linear(&plant, &m.norms, &w0, &opts)?;
    if lin.truncated() {
        bail!("linear closed-loop run blew up or hit the CFL limit");
    }
    let fits = [NormKind::L2, NormKind::Lq, NormKind::Besov].map(|k| fit_tail(&lin, k, t).ok());
    let mut runs = Vec::new();
    let mut trajectories = Vec::new();
    for &a in &cfg.sim.amplitudes {
        let (run, tr) = nonlinear_run(&plant, &m.norms, &probe, a, &opts, t)?;
        runs.push(run);
        trajectories.push(tr);
    }
    let doubled_rate = match design {
        Some(d) => {
            let (_, _, real2) = design_law(cfg, m, &d.act, &d.psys, 2.0 * d.gamma1())?;
            let plant2 = Plant::new(&m.ops, &m.red, Some(&real2))?;
            let mut o = opts.clone();
            o.besov = false;
            o.pressure = false;
            o.snapshot_stride = 0;
            Some(nonlinear_run(&plant2, &m.norms, &probe, cfg.sim.amplitudes[0], &o, t)?.0)
        }
        None => None,
    };
    let basin = if cfg.sim.basin {
        let b = basin_search(&plant, &m.norms, &probe, &opts, t, cfg.sim.basin_range[0], cfg.sim.basin_range[1], cfg.sim.basin_iterations)?;
        Some(BasinSummary { r1_est: b.r1_est, trace: b.trace, diagnostic: b.diagnostic })
    } else {
        None
    };
    let maxreg = (cfg.sim.maxreg_samples > 0).then(|| maxreg(cfg, m, design, cfg.sim.maxreg_samples)).transpose()?;
    let [l2, lq, besov] = fits;
    let summary = SimulationSummary {
        horizon: t,
        dt: opts.dt,
        t_end: opts.t_end,
        logged_rows: lin.times.len(),
        linear: l2,
        linear_lq: lq,
        linear_besov: besov,
        nonlinear: runs,
        doubled_rate,
        basin,
        maxreg,
    };
    Ok((summary, lin, trajectories))
}

/// Writes the report, spectrum, norm series, snapshots and optional dumps.
pub fn export(out: &Outcome, cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    out.report.write(&dir.join("report.json"))?;
    if let Some(mesh) = out.mesh() {
        mesh.dump_boundary(&dir.join("mesh_boundary.txt"))?;
    }
    if let Some((ops, eq)) = out.equilibrium() {
        let path = dir.join("equilibrium.csv");
        ops.write_field_csv(&eq.ye, create_file(&path)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let Some(m) = &out.model else { return Ok(()) };
    let path = dir.join("spectrum.csv");
    m.spec.write_csv(create_file(&path)?).with_context(|| format!("writing {}", path.display()))?;
    if let Some(lin) = &out.linear {
        write_norms(lin, &dir.join("norms_linear.csv"))?;
        if !lin.states.is_empty() {
            let snap = dir.join("snapshots");
            std::fs::create_dir_all(&snap).with_context(|| format!("creating {}", snap.display()))?;
            lin.write_snapshots(&m.ops, &m.red, &snap)?;
        }
    }
    for (k, tr) in out.nonlinear.iter().enumerate() {
        write_norms(tr, &dir.join(format!("norms_nonlinear_{k}.csv")))?;
    }
    if cfg.output.matrices {
        let mdir = dir.join("matrices");
        std::fs::create_dir_all(&mdir).with_context(|| format!("creating {}", mdir.display()))?;
        for which in ["laplacian", "advection", "divergence", "oseen"] {
            m.ops.write_matrix(which, &mdir.join(format!("{which}.mtx")))?;
        }
        if let Some(d) = &out.design {
            let path = mdir.join("closed_loop.csv");
            write_dense(&d.real.af, &path)?;
        }
    }
    Ok(())
}

pub fn write_norms(tr: &Trajectory, path: &Path) -> Result<()> {
    tr.write_csv(create_file(path)?).with_context(|| format!("writing {}", path.display()))
}

fn write_dense(a: &Mat<f64>, path: &Path) -> Result<()> {
    use std::io::Write;
    let mut w = create_file(path)?;
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format!("{:e}", a[(i, j)])).collect();
        writeln!(w, "{}", row.join(",")).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
