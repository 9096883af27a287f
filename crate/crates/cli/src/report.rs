//! Machine-readable run report and file exports.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use nsstab::norms::MaxRegResult;
use nsstab::simulation::{BasinProbe, DecayFit};
use nsstab::stabilizability::ControllabilityReport;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageStatus {
    pub stage: String,
    pub status: Status,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    /// Measured quantities behind the verdict.
    pub values: BTreeMap<String, f64>,
    pub note: Option<String>,
}

impl CheckResult {
    pub fn new(name: &str) -> Self {
        Self { name: name.into(), status: CheckStatus::Skipped, values: BTreeMap::new(), note: None }
    }

    pub fn value(mut self, key: &str, v: f64) -> Self {
        self.values.insert(key.into(), v);
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.status = if pass { CheckStatus::Pass } else { CheckStatus::Fail };
        self
    }

    pub fn skipped(mut self, why: impl Into<String>) -> Self {
        self.status = CheckStatus::Skipped;
        self.note = Some(why.into());
        self
    }

    pub fn note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct MeshSummary {
    pub dims: Vec<usize>,
    pub h: Vec<f64>,
    pub boundary_nodes: usize,
    pub patch_nodes: usize,
    pub collar_cells: usize,
    pub interior_dofs: usize,
    pub boundary_dofs: usize,
    pub solenoidal_dim: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumSummary {
    pub mode: String,
    pub residual_norm: f64,
    pub divergence_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_velocity: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    /// `N`, unstable eigenvalues with multiplicity.
    pub n_unstable: usize,
    /// `M`, distinct unstable eigenvalues.
    pub n_distinct: usize,
    pub multiplicities: Vec<usize>,
    /// `K = max ℓ_i`.
    pub k: usize,
    pub unstable: Vec<[f64; 2]>,
    pub leading: Vec<[f64; 2]>,
    pub next_stable: Option<[f64; 2]>,
    pub gap: f64,
    pub gamma0: f64,
    pub stable_abscissa: f64,
    pub max_eigen_residual: f64,
    pub biorthogonality_error: f64,
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub gamma1: f64,
    pub method: String,
    pub fell_back: bool,
    pub rank: ControllabilityReport,
    pub projected_abscissa: f64,
    pub boundary_gain_norms: Vec<f64>,
    pub interior_gain_norms: Vec<f64>,
    pub closed_loop_abscissa: f64,
    pub real_abscissa: f64,
    pub real_channels: [usize; 2],
    pub realify_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NonlinearRun {
    pub amplitude: f64,
    pub fit: Option<DecayFit>,
    /// `‖z(nT)‖/(β_T^n‖z₀‖)` for `n = 1..=periods`.
    pub chain: Vec<f64>,
    pub blowup: bool,
    pub cfl_truncated: bool,
    pub max_divergence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BasinSummary {
    pub r1_est: f64,
    pub trace: Vec<BasinProbe>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub horizon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub logged_rows: usize,
    pub linear: Option<DecayFit>,
    pub linear_lq: Option<DecayFit>,
    pub linear_besov: Option<DecayFit>,
    pub nonlinear: Vec<NonlinearRun>,
    /// Nonlinear run at the smallest amplitude with the rate `2γ₁`.
    pub doubled_rate: Option<NonlinearRun>,
    pub basin: Option<BasinSummary>,
    pub maxreg: Option<MaxRegResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub provenance: Provenance,
    /// Seconds since the Unix epoch; excluded from determinism comparisons.
    pub timestamp: u64,
    pub stages: Vec<StageStatus>,
    pub mesh: Option<MeshSummary>,
    pub equilibrium: Option<EquilibriumSummary>,
    pub spectrum: Option<SpectrumSummary>,
    pub design: Option<DesignSummary>,
    pub simulation: Option<SimulationSummary>,
    pub checks: BTreeMap<String, CheckResult>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// JSON with the timestamp zeroed.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.timestamp = 0;
        r.to_json()
    }

    pub fn failed_stage(&self) -> Option<&StageStatus> {
        self.stages.iter().find(|s| s.status == Status::Failed)
    }

    pub fn failing_checks(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|(_, c)| c.status == CheckStatus::Fail)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn print_checks(&self, mut w: impl Write) -> std::io::Result<()> {
        for (id, c) in &self.checks {
            let status = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Fail => "FAIL",
                CheckStatus::Skipped => "SKIP",
            };
            let values: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
            write!(w, "{id} {status} {}: {}", c.name, values.join(" "))?;
            if let Some(n) = &c.note {
                write!(w, " ({n})")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

pub fn now_seconds() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}
