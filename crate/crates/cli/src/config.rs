//! Run configuration: strict TOML with load-time gate checks.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use nsstab::feedback::DesignMethod;
use nsstab::mesh::PatchSide;
use nsstab::norms::NormSuite;
use serde::{Deserialize, Serialize};

use crate::checks::CHECK_IDS;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    mesh: Option<RawMesh>,
    physics: Option<RawPhysics>,
    norms: Option<RawNorms>,
    design: Option<RawDesign>,
    sim: Option<RawSim>,
    output: Option<RawOutput>,
    checks: Option<RawChecks>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Dims {
    Uniform(usize),
    Each(Vec<usize>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    dims: Option<Dims>,
    lengths: Option<Vec<f64>>,
    d: Option<usize>,
    patch_side: Option<String>,
    patch_fraction: Option<f64>,
    collar_depth: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    nu0: Option<f64>,
    equilibrium: Option<String>,
    amplitude: Option<f64>,
    cells: Option<u32>,
    skew: Option<f64>,
    force_file: Option<PathBuf>,
    newton_max_iter: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNorms {
    p: Option<f64>,
    q: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawGamma1 {
    Multiple(f64),
    Named(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDesign {
    gamma1: Option<RawGamma1>,
    method: Option<String>,
    svd_tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    horizon: Option<f64>,
    dt: Option<f64>,
    periods: Option<usize>,
    amplitudes: Option<Vec<f64>>,
    probe_seed: Option<u64>,
    log_stride: Option<usize>,
    basin: Option<bool>,
    basin_range: Option<[f64; 2]>,
    basin_iterations: Option<usize>,
    maxreg_samples: Option<usize>,
    maxreg_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    snapshot_stride: Option<usize>,
    matrices: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChecks {
    enabled: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshConfig {
    pub dims: Vec<usize>,
    pub lengths: Vec<f64>,
    pub d: usize,
    pub patch_side: String,
    pub patch_fraction: f64,
    pub collar_depth: usize,
}

impl MeshConfig {
    pub fn patch(&self) -> PatchSide {
        self.patch_side.parse().expect("validated at load time")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EquilibriumMode {
    Rest,
    Cellular,
    Newton,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsConfig {
    pub nu0: f64,
    pub equilibrium: EquilibriumMode,
    pub amplitude: f64,
    pub cells: u32,
    pub skew: f64,
    pub force_file: Option<PathBuf>,
    pub newton_max_iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormsConfig {
    pub p: f64,
    pub q: f64,
}

/// How the design rate `γ₁` is chosen from the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Gamma1Policy {
    /// Midpoint of `(γ₀, |Re λ_{N+1}|)`.
    Window,
    /// A multiple of `|Re λ₁|`.
    Multiple(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignConfig {
    pub gamma1: Gamma1Policy,
    pub method: DesignMethod,
    pub svd_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    /// Horizon `T`; `None` means `10/γ₀`.
    pub horizon: Option<f64>,
    /// Step; `None` means `T/2000`.
    pub dt: Option<f64>,
    pub periods: usize,
    pub amplitudes: Vec<f64>,
    pub probe_seed: u64,
    pub log_stride: usize,
    pub basin: bool,
    pub basin_range: [f64; 2],
    pub basin_iterations: usize,
    pub maxreg_samples: usize,
    pub maxreg_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub snapshot_stride: usize,
    pub matrices: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub mesh: MeshConfig,
    pub physics: PhysicsConfig,
    pub norms: NormsConfig,
    pub design: DesignConfig,
    pub sim: SimConfig,
    pub output: OutputConfig,
    pub checks: Vec<String>,
}

impl RunConfig {
    pub fn suite(&self) -> NormSuite {
        NormSuite::new(self.norms.q, self.norms.p, self.mesh.d).expect("validated at load time")
    }

    pub fn check_enabled(&self, id: &str) -> bool {
        self.checks.iter().any(|c| c == id)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = parse_config(&text).with_context(|| format!("in config {}", path.display()))?;
    if let Some(f) = cfg.physics.force_file.as_mut() {
        if f.is_relative() {
            *f = path.parent().unwrap_or(Path::new(".")).join(&*f);
        }
    }
    Ok(cfg)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| anyhow!("{e}"))?;
    validate(raw)
}

fn required<T>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| anyhow!("{key} required"))
}

fn validate(raw: RawConfig) -> Result<RunConfig> {
    let m = raw.mesh.unwrap_or_default();
    let d = m.d.unwrap_or(2);
    if d == 3 {
        bail!("mesh.d = 3: operators and simulation support d = 2 only");
    }
    if d != 2 {
        bail!("mesh.d must be 2 (got {d})");
    }
    let dims = match m.dims.unwrap_or(Dims::Uniform(24)) {
        Dims::Uniform(n) => vec![n; d],
        Dims::Each(v) => v,
    };
    if dims.len() != d {
        bail!("mesh.dims has {} entries, expected d = {d}", dims.len());
    }
    if let Some(n) = dims.iter().find(|&&n| n < 4) {
        bail!("mesh.dims >= 4 violated (got {n})");
    }
    let lengths = m.lengths.unwrap_or_else(|| vec![1.0; d]);
    if lengths.len() != d || lengths.iter().any(|l| !(*l > 0.0)) {
        bail!("mesh.lengths must hold {d} positive values");
    }
    let patch_side = m.patch_side.unwrap_or_else(|| "left".into());
    patch_side.parse::<PatchSide>().map_err(|e| anyhow!("mesh.patch_side: {e}"))?;
    let patch_fraction = m.patch_fraction.unwrap_or(0.5);
    if !(patch_fraction > 0.0 && patch_fraction <= 1.0) {
        bail!("mesh.patch_fraction: 0 < fraction <= 1 violated (got {patch_fraction})");
    }
    let collar_depth = m.collar_depth.unwrap_or(2);
    let min_dim = *dims.iter().min().unwrap();
    if collar_depth > min_dim / 2 {
        bail!("mesh.collar_depth <= dims/2 violated (got {collar_depth}, limit {})", min_dim / 2);
    }

    let ph = raw.physics.unwrap_or_default();
    let nu0 = required(ph.nu0, "physics.nu0")?;
    if !(nu0 > 0.0) {
        bail!("physics.nu0 > 0 violated (got {nu0})");
    }
    let equilibrium = match ph.equilibrium.as_deref().unwrap_or("rest") {
        "rest" => EquilibriumMode::Rest,
        "cellular" => EquilibriumMode::Cellular,
        "newton" => EquilibriumMode::Newton,
        other => bail!("physics.equilibrium: unknown mode `{other}` (expected rest, cellular or newton)"),
    };
    if equilibrium == EquilibriumMode::Newton && ph.force_file.is_none() {
        bail!("physics.force_file required for newton mode");
    }
    let amplitude = ph.amplitude.unwrap_or(0.0);
    let cells = ph.cells.unwrap_or(2);
    if cells == 0 {
        bail!("physics.cells >= 1 violated");
    }

    let n = raw.norms.unwrap_or_default();
    let norms = NormsConfig { q: n.q.unwrap_or(4.0), p: n.p.unwrap_or(9.0 / 8.0) };
    NormSuite::new(norms.q, norms.p, d).map_err(|e| anyhow!("norms: {e}"))?;

    let de = raw.design.unwrap_or_default();
    let gamma1 = match de.gamma1 {
        None => Gamma1Policy::Window,
        Some(RawGamma1::Named(s)) if s == "window" => Gamma1Policy::Window,
        Some(RawGamma1::Named(s)) => bail!("design.gamma1: expected \"window\" or a positive number, got `{s}`"),
        Some(RawGamma1::Multiple(x)) if x > 0.0 => Gamma1Policy::Multiple(x),
        Some(RawGamma1::Multiple(x)) => bail!("design.gamma1 > 0 violated (got {x})"),
    };
    let method: DesignMethod = de.method.as_deref().unwrap_or("place").parse().map_err(|e| anyhow!("design.method: {e}"))?;
    let svd_tol = de.svd_tol.unwrap_or(1e-8);
    if !(svd_tol > 0.0 && svd_tol < 1.0) {
        bail!("design.svd_tol in (0, 1) violated (got {svd_tol})");
    }

    let s = raw.sim.unwrap_or_default();
    let positive = |v: Option<f64>, key: &str| -> Result<Option<f64>> {
        match v {
            Some(x) if !(x > 0.0) => bail!("{key} > 0 violated (got {x})"),
            other => Ok(other),
        }
    };
    let horizon = positive(s.horizon, "sim.horizon")?;
    let dt = positive(s.dt, "sim.dt")?;
    let periods = s.periods.unwrap_or(3);
    if periods < 3 {
        bail!("sim.periods >= 3 violated (got {periods})");
    }
    let amplitudes = s.amplitudes.unwrap_or_else(|| vec![1e-3, 1e-4]);
    if amplitudes.is_empty() || amplitudes.iter().any(|a| !(*a > 0.0)) {
        bail!("sim.amplitudes must be a non-empty list of positive values");
    }
    let basin_range = s.basin_range.unwrap_or([1e-3, 100.0]);
    if !(basin_range[0] > 0.0 && basin_range[1] > basin_range[0]) {
        bail!("sim.basin_range: 0 < lo < hi violated");
    }
    let log_stride = s.log_stride.unwrap_or(5);
    if log_stride == 0 {
        bail!("sim.log_stride >= 1 violated");
    }
    let maxreg_steps = s.maxreg_steps.unwrap_or(200);
    if maxreg_steps < 2 {
        bail!("sim.maxreg_steps >= 2 violated");
    }

    let o = raw.output.unwrap_or_default();
    let checks = match raw.checks.and_then(|c| c.enabled) {
        None => CHECK_IDS.iter().map(|s| s.to_string()).collect(),
        Some(list) => {
            for id in &list {
                if !CHECK_IDS.contains(&id.as_str()) {
                    bail!("checks.enabled: unknown check `{id}`");
                }
            }
            list
        }
    };

    Ok(RunConfig {
        seed: raw.seed.unwrap_or(1),
        mesh: MeshConfig { dims, lengths, d, patch_side, patch_fraction, collar_depth },
        physics: PhysicsConfig {
            nu0,
            equilibrium,
            amplitude,
            cells,
            skew: ph.skew.unwrap_or(0.0),
            force_file: ph.force_file,
            newton_max_iter: ph.newton_max_iter.unwrap_or(20),
        },
        norms,
        design: DesignConfig { gamma1, method, svd_tol },
        sim: SimConfig {
            horizon,
            dt,
            periods,
            amplitudes,
            probe_seed: s.probe_seed.unwrap_or(1),
            log_stride,
            basin: s.basin.unwrap_or(true),
            basin_range,
            basin_iterations: s.basin_iterations.unwrap_or(6),
            maxreg_samples: s.maxreg_samples.unwrap_or(20),
            maxreg_steps,
        },
        output: OutputConfig {
            dir: o.dir.unwrap_or_else(|| PathBuf::from("out")),
            snapshot_stride: o.snapshot_stride.unwrap_or(0),
            matrices: o.matrices.unwrap_or(false),
        },
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[mesh]\nd = 2\ndims = 16\n[physics]\nnu0 = 0.1\n[norms]\nq = 4\np = 1.125\n";

    #[test]
    fn minimal_config_loads() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.mesh.dims, vec![16, 16]);
        assert_eq!(cfg.physics.equilibrium, EquilibriumMode::Rest);
        assert_eq!(cfg.checks.len(), CHECK_IDS.len());
    }

    #[test]
    fn tight_index_gate_names_the_inequality() {
        let err = parse_config(&MINIMAL.replace("1.125", "1.2")).unwrap_err().to_string();
        assert!(err.contains("p < 2q/(2q−1) violated"), "{err}");
    }

    #[test]
    fn missing_viscosity_is_reported() {
        let err = parse_config("[mesh]\ndims = 16\n").unwrap_err().to_string();
        assert_eq!(err, "physics.nu0 required");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_line() {
        let err = parse_config(&format!("{MINIMAL}viscosity = 3\n")).unwrap_err().to_string();
        assert!(err.contains("unknown field"), "{err}");
        assert!(err.contains("line 9"), "{err}");
    }

    #[test]
    fn gates_checked_at_load() {
        let bad = MINIMAL.replace("d = 2\n", "d = 2\npatch_fraction = 0.0\n");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("0 < fraction"));
        let bad = MINIMAL.replace("nu0 = 0.1", "nu0 = -1");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("nu0 > 0"));
        let bad = format!("{MINIMAL}[physics]\n");
        assert!(parse_config(&bad).is_err());
        let bad = MINIMAL.replace("nu0 = 0.1", "nu0 = 0.1\nequilibrium = \"newton\"");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("force_file required"));
    }

    #[test]
    fn gamma1_policy_forms() {
        let w = parse_config(&format!("{MINIMAL}[design]\ngamma1 = \"window\"\n")).unwrap();
        assert_eq!(w.design.gamma1, Gamma1Policy::Window);
        let m = parse_config(&format!("{MINIMAL}[design]\ngamma1 = 2.0\n")).unwrap();
        assert_eq!(m.design.gamma1, Gamma1Policy::Multiple(2.0));
        assert!(parse_config(&format!("{MINIMAL}[design]\ngamma1 = \"fast\"\n")).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
