//! Time integration of the linearized and nonlinear feedback dynamics on
//! reduced coordinates, pressure recovery, decay fits and the basin search.

use std::io::Write;

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedback::RealLaw;
use crate::linalg::{matvec, matvec_t, norm2};
use crate::norms::Norms;
use crate::ops::{Leray, Operators, Reduced};

pub const BLOWUP_FACTOR: f64 = 1e3;
pub const CFL_MAX: f64 = 0.5;
pub const MAX_HALVINGS: usize = 4;
/// Default step as a fraction of the horizon.
pub const STEPS_PER_HORIZON: f64 = 2000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    Lq,
    Besov,
}

impl NormKind {
    fn index(self) -> usize {
        match self {
            NormKind::L2 => 0,
            NormKind::Lq => 1,
            NormKind::Besov => 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub t_end: f64,
    pub dt: f64,
    /// Log norms and controls every `log_stride` steps (and at the end).
    pub log_stride: usize,
    /// Keep a state snapshot every `snapshot_stride` logged rows; 0 keeps none.
    pub snapshot_stride: usize,
    pub pressure: bool,
    pub besov: bool,
}

impl SimOptions {
    /// Horizon `T = 10/γ₀` repeated `periods` times, `dt = T/2000`.
    pub fn for_rate(gamma0: f64, periods: usize) -> Self {
        let t = 10.0 / gamma0;
        Self {
            t_end: t * periods as f64,
            dt: t / STEPS_PER_HORIZON,
            log_stride: 5,
            snapshot_stride: 0,
            pressure: false,
            besov: true,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `[l2, lq, besov]` per logged time; besov is NaN when disabled.
    pub norms: Vec<[f64; 3]>,
    /// Boundary channels `ν_k` followed by interior channels `μ_k`.
    pub controls: Vec<Vec<f64>>,
    pub n_nu: usize,
    pub n_mu: usize,
    /// Zero-mean pressure L² norm per logged time, when recovered.
    pub pressure: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<(f64, Vec<f64>)>,
    pub blowup: bool,
    pub cfl_truncated: bool,
    pub halvings: usize,
    pub final_dt: f64,
    /// Largest `‖div z‖_∞` over logged states.
    pub max_divergence: f64,
}

impl Trajectory {
    pub fn series(&self, kind: NormKind) -> Vec<f64> {
        self.norms.iter().map(|n| n[kind.index()]).collect()
    }

    pub fn truncated(&self) -> bool {
        self.blowup || self.cfl_truncated
    }

    /// Norm at time `t` by log-linear interpolation between logged samples.
    pub fn norm_at(&self, kind: NormKind, t: f64) -> Option<f64> {
        let s = self.series(kind);
        let k = self.times.iter().position(|&x| x >= t - 1e-12)?;
        if k == 0 || (self.times[k] - t).abs() <= 1e-12 {
            return Some(s[k]);
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        if s[k - 1] > 0.0 && s[k] > 0.0 {
            Some((s[k - 1].ln() * (1.0 - w) + s[k].ln() * w).exp())
        } else {
            Some(s[k - 1] * (1.0 - w) + s[k] * w)
        }
    }

    /// `t,l2,lq,besov,nu_1..,mu_1..,pressure_norm`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let mut header = vec!["t".to_string(), "l2".into(), "lq".into(), "besov".into()];
        header.extend((1..=self.n_nu).map(|k| format!("nu_{k}")));
        header.extend((1..=self.n_mu).map(|k| format!("mu_{k}")));
        header.push("pressure_norm".into());
        writeln!(w, "{}", header.join(","))?;
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![format!("{t:.9e}")];
            row.extend(self.norms[i].iter().map(|v| format!("{v:.9e}")));
            row.extend(self.controls[i].iter().map(|v| format!("{v:.9e}")));
            row.push(self.pressure.get(i).map_or(String::new(), |p| format!("{p:.9e}")));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Writes every snapshot as a `x,y,u,v` grid, one file per snapshot.
    pub fn write_snapshots(&self, ops: &Operators, red: &Reduced, dir: &std::path::Path) -> Result<()> {
        for (k, (t, x)) in self.states.iter().enumerate() {
            let path = dir.join(format!("snapshot_{k:04}.csv"));
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = std::io::BufWriter::new(f);
            writeln!(w, "# t = {t:.9e}").map_err(|e| Error::io(&path, e))?;
            ops.write_field_csv(&red.lift(x), &mut w).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

/// Operators, closed-loop generator and feedback law for one run.
pub struct Plant<'a> {
    pub ops: &'a Operators,
    pub red: &'a Reduced,
    pub law: Option<&'a RealLaw>,
    leray: Leray,
}

impl<'a> Plant<'a> {
    pub fn new(ops: &'a Operators, red: &'a Reduced, law: Option<&'a RealLaw>) -> Result<Self> {
        Ok(Self { ops, red, law, leray: ops.leray()? })
    }

    pub fn generator(&self) -> &Mat<f64> {
        self.law.map_or(&self.red.a, |l| &l.af)
    }

    /// Tangential boundary trace `F x`.
    pub fn trace(&self, x: &[f64]) -> Vec<f64> {
        match self.law {
            Some(l) => l.boundary_data(x),
            None => vec![0.0; self.ops.layout.n_bd],
        }
    }

    /// Interior control field `m u` on faces.
    pub fn interior_control(&self, x: &[f64]) -> Vec<f64> {
        match self.law {
            Some(l) if l.u.ncols() > 0 => matvec(&l.u, &matvec(&l.gain_u, x)),
            _ => vec![0.0; self.ops.layout.n_int],
        }
    }

    pub fn controls(&self, x: &[f64]) -> Vec<f64> {
        match self.law {
            Some(l) => {
                let (mut nu, mu) = l.controls(x);
                nu.extend(mu);
                nu
            }
            None => Vec::new(),
        }
    }

    /// Extended state `[Z x; F x]`.
    pub fn extended(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.red.lift(x);
        z.extend(self.trace(x));
        z
    }

    /// Reduced coordinates of `P[(z·∇)z]`.
    pub fn nonlinear_term(&self, x: &[f64]) -> Vec<f64> {
        let z = self.extended(x);
        matvec_t(&self.red.z, &self.ops.nonlinear(&z))
    }

    pub fn leray(&self) -> &Leray {
        &self.leray
    }

    /// Zero-mean pressure from the momentum residual
    /// `r = ν₀Δz − L_e z − (z·∇)z + m u − z_t` on interior faces.
    pub fn recover_pressure(&self, x: &[f64], x_dot: &[f64], nonlinear: bool) -> Vec<f64> {
        let z = self.extended(x);
        let mut r = self.ops.oseen.matvec(&z);
        if nonlinear {
            let c = self.ops.nonlinear(&z);
            r.iter_mut().zip(c).for_each(|(a, b)| *a -= b);
        }
        let mu = self.interior_control(x);
        let zt = self.red.lift(x_dot);
        for i in 0..r.len() {
            r[i] += mu[i] - zt[i];
        }
        pressure_from_residual(self.ops, &self.leray, &r)
    }
}

/// Solves `Gχ = (I − P) r` through the pinned Poisson system and removes
/// the mean.
pub fn pressure_from_residual(ops: &Operators, leray: &Leray, r: &[f64]) -> Vec<f64> {
    let d = ops.div_int();
    let s = leray.poisson_solve(&d.matvec(r));
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    s.iter().map(|v| -(v - mean)).collect()
}

/// Pressure of a steady state `y` under force `f`, zero mean.
pub fn steady_pressure(ops: &Operators, leray: &Leray, y: &[f64], f: &[f64]) -> Vec<f64> {
    let l = &ops.layout;
    let lap = l.laplacian(y);
    let conv = l.convection(y, y);
    let r: Vec<f64> = (0..l.n_int).map(|k| f[k] + ops.nu0 * lap[k] - conv[k]).collect();
    pressure_from_residual(ops, leray, &r)
}

fn pressure_norm(ops: &Operators, p: &[f64]) -> f64 {
    let area = ops.layout.hx * ops.layout.hy;
    (p.iter().map(|v| v * v).sum::<f64>() * area).sqrt()
}

struct Stepper {
    dt: f64,
    explicit: Mat<f64>,
    implicit_inv: Mat<f64>,
}

impl Stepper {
    fn new(a: &Mat<f64>, dt: f64) -> Self {
        let n = a.nrows();
        let lhs = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 0.5 * dt * a[(i, j)]);
        let explicit = Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.5 * dt * a[(i, j)]);
        let implicit_inv = lhs.partial_piv_lu().inverse();
        Self { dt, explicit, implicit_inv }
    }

    /// One Crank–Nicolson step with explicit forcing `g` (held over the step).
    fn step(&self, x: &[f64], g: Option<&[f64]>) -> Vec<f64> {
        let mut r = matvec(&self.explicit, x);
        if let Some(g) = g {
            r.iter_mut().zip(g).for_each(|(a, b)| *a += self.dt * b);
        }
        matvec(&self.implicit_inv, &r)
    }
}

fn max_face_speed(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Integrates `x' = 𝔸_F x − 𝒩(x)` (or the linear part alone) with
/// Crank–Nicolson on `𝔸_F` and second-order Adams–Bashforth on `𝒩`.
pub fn simulate(plant: &Plant, norms: &Norms, x0: &[f64], opts: &SimOptions, nonlinear: bool) -> Result<Trajectory> {
    let n = plant.red.dim();
    if x0.len() != n {
        return Err(Error::Shape(format!("initial state has length {}, expected {n}", x0.len())));
    }
    if !(opts.dt > 0.0 && opts.t_end > 0.0) {
        return Err(Error::Simulation("time step and horizon must be positive".into()));
    }
    let dt_max = opts.t_end / 100.0;
    let mut dt = opts.dt.min(dt_max);
    let a = plant.generator();
    let h = plant.ops.layout.hx.min(plant.ops.layout.hy);
    let mut stepper = Stepper::new(a, dt);
    let mut traj = Trajectory {
        n_nu: plant.law.map_or(0, |l| l.gain_f.nrows()),
        n_mu: plant.law.map_or(0, |l| l.gain_u.nrows()),
        ..Default::default()
    };
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let n0 = norms.l2(&x);
    let mut nl_prev: Option<(Vec<f64>, f64)> = None;
    let mut rows = 0usize;
    let log = |traj: &mut Trajectory, t: f64, x: &[f64], x_dot: Option<&[f64]>, rows: &mut usize| {
        let besov = if opts.besov { norms.besov(x) } else { f64::NAN };
        traj.times.push(t);
        traj.norms.push([norms.l2(x), norms.lq(x), besov]);
        traj.controls.push(plant.controls(x));
        let div = plant.ops.layout.divergence(&plant.red.lift(x));
        traj.max_divergence = traj.max_divergence.max(div.iter().fold(0.0, |m, v| m.max(v.abs())));
        if opts.pressure {
            let xd: Vec<f64> = match x_dot {
                Some(v) => v.to_vec(),
                None => matvec(a, x),
            };
            traj.pressure.push(pressure_norm(plant.ops, &plant.recover_pressure(x, &xd, nonlinear)));
        }
        if opts.snapshot_stride > 0 && (*rows).is_multiple_of(opts.snapshot_stride) {
            traj.states.push((t, x.to_vec()));
        }
        *rows += 1;
    };
    let rhs = |x: &[f64], nl: Option<&[f64]>| -> Vec<f64> {
        let mut d = matvec(a, x);
        if let Some(nl) = nl {
            d.iter_mut().zip(nl).for_each(|(a, b)| *a -= b);
        }
        d
    };
    let nl0 = nonlinear.then(|| plant.nonlinear_term(&x));
    log(&mut traj, t, &x, Some(&rhs(&x, nl0.as_deref())), &mut rows);
    let mut step = 0usize;
    while t < opts.t_end - 1e-12 * opts.t_end {
        let dt_step = dt.min(opts.t_end - t);
        let local = if (dt_step - dt).abs() > 1e-15 { Some(Stepper::new(a, dt_step)) } else { None };
        let st = local.as_ref().unwrap_or(&stepper);
        let nl_now = nonlinear.then(|| plant.nonlinear_term(&x));
        let forcing: Option<Vec<f64>> = nl_now.as_ref().map(|cur| {
            // −𝒩 extrapolated to the midpoint; the first step uses 𝒩(x₀)
            match &nl_prev {
                Some((prev, dt_prev)) => {
                    let w = 0.5 * dt_step / dt_prev;
                    cur.iter().zip(prev).map(|(c, p)| -((1.0 + w) * c - w * p)).collect()
                }
                None => cur.iter().map(|c| -c).collect(),
            }
        });
        let x_new = st.step(&x, forcing.as_deref());
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::Simulation(format!("non-finite state at t = {t:.4e}")));
        }
        if nonlinear {
            let speed = max_face_speed(&plant.extended(&x_new));
            if speed * dt_step / h > CFL_MAX {
                if traj.halvings < MAX_HALVINGS {
                    traj.halvings += 1;
                    dt *= 0.5;
                    stepper = Stepper::new(a, dt);
                    continue;
                }
                traj.cfl_truncated = true;
                break;
            }
        }
        t += dt_step;
        step += 1;
        if let Some(cur) = nl_now {
            nl_prev = Some((cur, dt_step));
        }
        let x_dot: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| (a - b) / dt_step).collect();
        x = x_new;
        let done = t >= opts.t_end - 1e-12 * opts.t_end;
        let norm = norms.l2(&x);
        let blow = n0 > 0.0 && norm > BLOWUP_FACTOR * n0;
        if step.is_multiple_of(opts.log_stride.max(1)) || done || blow {
            log(&mut traj, t, &x, Some(&x_dot), &mut rows);
        }
        if blow {
            traj.blowup = true;
            break;
        }
    }
    traj.final_dt = dt;
    Ok(traj)
}

/// Crank–Nicolson run of `w' = 𝔸_F w`.
pub fn simulate_linear(plant: &Plant, norms: &Norms, w0: &[f64], opts: &SimOptions) -> Result<Trajectory> {
    simulate(plant, norms, w0, opts, false)
}

/// IMEX run of the translated nonlinear feedback system.
pub fn simulate_nonlinear(plant: &Plant, norms: &Norms, z0: &[f64], opts: &SimOptions) -> Result<Trajectory> {
    simulate(plant, norms, z0, opts, true)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub gamma_fit: f64,
    /// `e^{intercept}/‖z₀‖`.
    pub c_fit: f64,
    pub window: [f64; 2],
    pub r2: f64,
    /// `‖z(T)‖/‖z₀‖` for the horizon `T`.
    pub beta_t: f64,
    pub horizon: f64,
    pub low_confidence: bool,
    pub samples: usize,
}

/// Least-squares line through `log‖z‖` on `window`, plus the contraction
/// factor over `horizon`.
pub fn fit_decay(times: &[f64], values: &[f64], window: [f64; 2], horizon: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= window[0] - 1e-12 && **t <= window[1] + 1e-12)
        .map(|(t, v)| (*t, *v))
        .collect();
    if pts.len() < 10 {
        return Err(Error::Simulation(format!("{} samples in the fit window, need at least 10", pts.len())));
    }
    if pts.iter().any(|(_, v)| !(*v > 0.0)) || !(values[0] > 0.0) {
        return Err(Error::Simulation("norms must be positive to fit a decay rate".into()));
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, v)| (a + t, b + v.ln()));
    let (tm, ym) = (st / m, sy / m);
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (t, v) in &pts {
        let (dx, dy) = (t - tm, v.ln() - ym);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * tm;
    let ss_res: f64 = pts.iter().map(|(t, v)| (v.ln() - intercept - slope * t).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let monotone = pts.windows(2).all(|w| w[1].1 <= w[0].1) || pts.windows(2).all(|w| w[1].1 >= w[0].1);
    let beta = interpolate(times, values, horizon).map_or(f64::NAN, |v| v / values[0]);
    Ok(DecayFit {
        gamma_fit: -slope,
        c_fit: intercept.exp() / values[0],
        window,
        r2,
        beta_t: beta,
        horizon,
        low_confidence: r2 < 0.9 && !monotone,
        samples: pts.len(),
    })
}

fn interpolate(times: &[f64], values: &[f64], t: f64) -> Option<f64> {
    let k = times.iter().position(|&x| x >= t - 1e-12)?;
    if k == 0 || (times[k] - t).abs() <= 1e-12 {
        return Some(values[k]);
    }
    let w = (t - times[k - 1]) / (times[k] - times[k - 1]);
    Some(values[k - 1] * (1.0 - w) + values[k] * w)
}

/// Fit over the tail half of a trajectory.
pub fn fit_tail(traj: &Trajectory, kind: NormKind, horizon: f64) -> Result<DecayFit> {
    let t_last = *traj.times.last().ok_or_else(|| Error::Simulation("empty trajectory".into()))?;
    fit_decay(&traj.times, &traj.series(kind), [0.5 * t_last, t_last], horizon)
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinProbe {
    pub amplitude: f64,
    pub accepted: bool,
    pub beta_t: f64,
    pub blowup: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinResult {
    pub r1_est: f64,
    #[serde(skip)]
    pub probe: Vec<f64>,
    pub trace: Vec<BasinProbe>,
    pub diagnostic: Option<String>,
}

/// Bisection (geometric) on the initial amplitude along a unit probe:
/// an amplitude is accepted when the run contracts over the horizon
/// without blow-up or CFL truncation.
#[allow(clippy::too_many_arguments)]
pub fn basin_search(
    plant: &Plant,
    norms: &Norms,
    probe: &[f64],
    opts: &SimOptions,
    horizon: f64,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> Result<BasinResult> {
    let unit = norms.l2(probe);
    if !(unit > 0.0) {
        return Err(Error::Simulation("basin probe is zero".into()));
    }
    let mut run_opts = opts.clone();
    run_opts.t_end = horizon;
    run_opts.besov = false;
    run_opts.pressure = false;
    let mut trace = Vec::new();
    let try_amp = |a: f64, trace: &mut Vec<BasinProbe>| -> Result<bool> {
        let x0: Vec<f64> = probe.iter().map(|v| v * a / unit).collect();
        let tr = simulate_nonlinear(plant, norms, &x0, &run_opts)?;
        let beta = if tr.truncated() {
            f64::INFINITY
        } else {
            tr.norm_at(NormKind::L2, horizon).unwrap_or(f64::INFINITY) / tr.norms[0][0]
        };
        let accepted = !tr.truncated() && beta < 1.0;
        trace.push(BasinProbe { amplitude: a, accepted, beta_t: beta, blowup: tr.blowup });
        Ok(accepted)
    };
    if !try_amp(lo, &mut trace)? {
        return Ok(BasinResult {
            r1_est: 0.0,
            probe: probe.to_vec(),
            trace,
            diagnostic: Some(format!("amplitude {lo:e} already fails to contract over T = {horizon:.4}")),
        });
    }
    if try_amp(hi, &mut trace)? {
        return Ok(BasinResult {
            r1_est: hi,
            probe: probe.to_vec(),
            trace,
            diagnostic: Some(format!("upper amplitude {hi:e} still contracts; r1_est is a lower bound")),
        });
    }
    let (mut a, mut b) = (lo, hi);
    for _ in 0..iterations {
        let mid = (a * b).sqrt();
        if try_amp(mid, &mut trace)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(BasinResult { r1_est: a, probe: probe.to_vec(), trace, diagnostic: None })
}

/// Real part of a complex vector scaled to unit Euclidean norm.
pub fn real_probe(v: &[faer::c64]) -> Vec<f64> {
    let mut re: Vec<f64> = v.iter().map(|c| c.re).collect();
    if norm2(&re) < 1e-12 * v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt() {
        re = v.iter().map(|c| c.im).collect();
    }
    let s = norm2(&re);
    re.iter().map(|a| a / s).collect()
}
