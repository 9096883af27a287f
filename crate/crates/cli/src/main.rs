use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use nsstab_cli::config::load_config;
use nsstab_cli::pipeline::{export, run_pipeline, Stage};

#[derive(Parser)]
#[command(name = "nsstab", version, about = "Boundary feedback stabilization of Navier-Stokes flow near an unstable equilibrium")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Seed; overrides `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Evaluate and print checks without writing files.
    #[arg(long, global = true)]
    check_only: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Build the mesh, boundary patch and collar.
    Mesh,
    /// Solve for the equilibrium.
    Equilibrium,
    /// Compute the unstable spectrum.
    Spectrum,
    /// Select actuators and design the feedback.
    Design,
    /// Simulate the closed loop.
    Simulate,
    /// Run every stage and evaluate the acceptance checks.
    Verify,
    /// Same as `verify`.
    Run,
}

impl Command {
    fn stage(self) -> Stage {
        match self {
            Command::Mesh => Stage::Mesh,
            Command::Equilibrium => Stage::Equilibrium,
            Command::Spectrum => Stage::Spectrum,
            Command::Design => Stage::Design,
            Command::Simulate => Stage::Simulate,
            Command::Verify | Command::Run => Stage::Verify,
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    let path = cli.config.ok_or_else(|| anyhow::anyhow!("--config PATH is required"))?;
    let mut cfg = load_config(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    let outcome = run_pipeline(&cfg, cli.command.stage());
    let report = &outcome.report;
    for s in &report.stages {
        let msg = s.message.as_deref().map(|m| format!(": {m}")).unwrap_or_default();
        eprintln!("[{}] {:?}{msg}", s.stage, s.status);
    }
    if !report.checks.is_empty() {
        report.print_checks(std::io::stdout())?;
    }
    if !cli.check_only {
        export(&outcome, &cfg, &cfg.output.dir)?;
        eprintln!("wrote {}", cfg.output.dir.join("report.json").display());
    }
    if let Some(e) = &outcome.error {
        eprintln!("error: {e:#}");
    }
    let failing = report.failing_checks();
    if !failing.is_empty() {
        eprintln!("failing checks: {}", failing.join(", "));
    }
    Ok(outcome.success())
}
