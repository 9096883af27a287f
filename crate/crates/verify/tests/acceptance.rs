//! Acceptance suite: runs the standard unstable configuration end to end and
//! judges every criterion from the measured values with the tolerances below.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use nsstab_cli::checks::CHECK_IDS;
use nsstab_cli::config::load_config;
use nsstab_cli::pipeline::{run_pipeline, Stage};
use nsstab_cli::report::{CheckResult, CheckStatus};

const PROJECTION: f64 = 1e-10;
const ADJOINT_RESIDUAL: f64 = 0.05;
const ADJOINT_DECREASE: f64 = 1.5;
const TANGENTIAL_ORDER: f64 = 1.0;
const COUNTEREXAMPLE: f64 = 1e-12;
const PLACEMENT: f64 = 1e-6;
const LINEAR_FIT_REL: f64 = 0.10;
const PRIMARY_AMPLITUDE: f64 = 1e-3;
const CHAIN_FACTOR: f64 = 1.1;
const SMALL_AMPLITUDE_REL: f64 = 0.05;
const BASIN_SLACK: f64 = 0.10;
const REALIFY: f64 = 1e-7;
const REAL_FIT_REL: f64 = 0.05;
const MAXREG_SAMPLES: f64 = 20.0;
const MAXREG_SPREAD: f64 = 2.0;

type Values = BTreeMap<String, f64>;

fn get(v: &Values, key: &str) -> f64 {
    v.get(key).copied().unwrap_or(f64::NAN)
}

fn rate_error(rate: f64, abscissa: f64) -> f64 {
    (rate - abscissa.abs()).abs() / abscissa.abs()
}

fn judge(id: &str, v: &Values) -> bool {
    match id {
        "AC01" => get(v, "idempotency_fro") <= PROJECTION && get(v, "gradient_ratio_max") <= PROJECTION,
        "AC02" => ["rest", "unstable"].iter().all(|f| {
            get(v, &format!("{f}_max_32")) <= ADJOINT_RESIDUAL && get(v, &format!("{f}_decrease")) >= ADJOINT_DECREASE
        }),
        "AC03" => get(v, "order_min") >= TANGENTIAL_ORDER,
        "AC04" => ["interior_a1", "interior_a2", "cauchy_a1", "cauchy_a2"].iter().all(|k| get(v, k) <= COUNTEREXAMPLE),
        "AC05" => {
            let n = v.keys().filter(|k| k.starts_with("rank_")).count();
            n > 0 && (1..=n).all(|i| get(v, &format!("rank_{i}")) == get(v, &format!("multiplicity_{i}")))
        }
        "AC06" => {
            let l1 = get(v, "re_lambda1").abs();
            get(v, "projected_abscissa_x1") <= -l1 + PLACEMENT && get(v, "projected_abscissa_x2") <= -2.0 * l1 + PLACEMENT
        }
        "AC07" => {
            let a = get(v, "abscissa");
            a <= -get(v, "gamma0") && rate_error(get(v, "fitted_rate"), a) <= LINEAR_FIT_REL
        }
        "AC08" => {
            get(v, "amplitude") == PRIMARY_AMPLITUDE
                && get(v, "fitted_rate") > 0.0
                && (1..=3).all(|n| get(v, &format!("chain_{n}")) <= CHAIN_FACTOR)
                && get(v, "small_amplitude_error") <= SMALL_AMPLITUDE_REL
        }
        "AC09" => get(v, "rate_2gamma1") >= (1.0 - BASIN_SLACK) * get(v, "rate_gamma1"),
        "AC10" => {
            get(v, "spectrum_mismatch") <= REALIFY
                && rate_error(get(v, "fitted_rate"), get(v, "complex_abscissa")) <= REAL_FIT_REL
        }
        "AC11" => {
            let c = [get(v, "constant_16"), get(v, "constant_32")];
            c.iter().all(|x| x.is_finite() && *x > 0.0)
                && get(v, "samples_16") == MAXREG_SAMPLES
                && get(v, "samples_32") == MAXREG_SAMPLES
                && c[0].max(c[1]) / c[0].min(c[1]) <= MAXREG_SPREAD
        }
        "AC12" => get(v, "accepted") == 1.0 && get(v, "rejected_named") == 1.0,
        "AC13" => get(v, "differing_lines") == 0.0,
        _ => false,
    }
}

fn line(id: &str, c: &CheckResult, pass: bool) -> String {
    let values: Vec<String> = c.values.iter().map(|(k, v)| format!("{k}={v:.4e}")).collect();
    format!("{id} {} {}: {}", if pass { "PASS" } else { "FAIL" }, c.name, values.join(" "))
}

fn main() -> ExitCode {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/standard.toml");
    let cfg = load_config(&path).expect("standard config loads");
    let outcome = run_pipeline(&cfg, Stage::Verify);
    if let Some(e) = &outcome.error {
        println!("pipeline failed: {e:#}");
        return ExitCode::FAILURE;
    }
    let checks = &outcome.report.checks;
    let mut failing = Vec::new();
    for id in CHECK_IDS {
        let Some(c) = checks.get(id) else {
            println!("{id} FAIL missing from report");
            failing.push(id);
            continue;
        };
        let pass = c.status != CheckStatus::Skipped && judge(id, &c.values);
        let agrees = (c.status == CheckStatus::Pass) == pass;
        println!("{}{}", line(id, c, pass), if agrees { "" } else { " [report disagrees]" });
        if !pass || !agrees {
            failing.push(id);
        }
    }
    assert_eq!(checks.len(), CHECK_IDS.len(), "every check appears exactly once");
    if failing.is_empty() {
        println!("acceptance: {} of {} criteria pass", CHECK_IDS.len(), CHECK_IDS.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing {}", failing.join(", "));
        ExitCode::FAILURE
    }
}
