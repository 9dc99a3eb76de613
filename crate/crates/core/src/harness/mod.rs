//! Experiment plumbing: configuration, replicated consistency runs, the
//! separation audit, and report persistence and plotting.

mod config;
mod experiment;
mod identities;
mod plot;

use std::fs;
use std::path::Path;

pub use config::{
    ExperimentConfig, OptimizerKind, DEFAULT_GRID_STEP, DEFAULT_MC_BUDGET, DEFAULT_N_SCHEDULE, DEFAULT_REPLICATES,
};
pub use experiment::{fit_single, quantile_sorted, run_consistency, Aggregate, ExperimentReport, ReplicateRecord, CSV_HEADER};
pub use identities::{run_identity_suite, IdentityCheck, IdentityReport};
pub use plot::{emit_plot, loglog_slope, render_svg};

use crate::error::Result;
use crate::models::MixingMeasure;
use crate::rng::Rng;
use crate::separation::{check_a2_over_grid, default_theta_grid, A2Report};

pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_JSON: &str = "report.json";
pub const AUDIT_JSON: &str = "audit.json";
pub const PLOT_SVG: &str = "convergence.svg";

/// Wasserstein-1 distance between probability measures on the line.
pub fn wasserstein1(mu: &MixingMeasure, nu: &MixingMeasure) -> Result<f64> {
    mu.wasserstein1(nu)
}

/// Runs the separation audit described by `config`.
///
/// The audited parameters are `config.theta_grid` when given, otherwise the
/// model's default grid. The Monte Carlo generator is seeded by the master
/// seed, so the report is deterministic.
pub fn run_separation_audit(config: &ExperimentConfig) -> Result<A2Report> {
    config.validate()?;
    let model = config.model()?;
    let contrast = config.contrast()?;
    let grid = match &config.theta_grid {
        Some(grid) => grid.clone(),
        None => default_theta_grid(&model, &config.true_parameter, config.radius)?,
    };
    let mut rng = Rng::derive(config.master_seed, &[u64::from_le_bytes(*b"audit\0\0\0")]);
    let mut run = || {
        check_a2_over_grid(
            &contrast,
            &model,
            &config.true_parameter,
            config.a_star,
            &grid,
            config.radius,
            config.net_size,
            config.mc_budget,
            &mut rng,
        )
    };
    match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::Error::Config(format!("cannot start {threads} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Runs the audit and writes `audit.json` into `out_dir`.
pub fn write_separation_audit(config: &ExperimentConfig, out_dir: &Path) -> Result<A2Report> {
    let report = run_separation_audit(config)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join(AUDIT_JSON), serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Runs the consistency experiment and writes `report.csv`, `report.json`
/// and, when at least two sample sizes succeeded, `convergence.svg`.
pub fn write_consistency(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let report = run_consistency(config)?;
    fs::create_dir_all(out_dir)?;
    report.write_csv(&out_dir.join(REPORT_CSV))?;
    report.write_json(&out_dir.join(REPORT_JSON))?;
    match emit_plot(&report, &out_dir.join(PLOT_SVG)) {
        Ok(()) => {}
        Err(crate::Error::Argument(msg)) => log::info!("no plot written: {msg}"),
        Err(e) => return Err(e),
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Parameter;
    use crate::separation::AStar;

    #[test]
    fn audit_verdicts() {
        let mut c = ExperimentConfig::for_model("gaussian_location").unwrap();
        c.mc_budget = 5_000;
        c.net_size = 8;
        assert!(run_separation_audit(&c).unwrap().pass);
        c.a_star = AStar::Identity;
        assert!(!run_separation_audit(&c).unwrap().pass);
        c.theta_grid = Some(Vec::new());
        assert!(run_separation_audit(&c).is_err());
    }

    #[test]
    fn writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = ExperimentConfig::for_model("gaussian_location").unwrap();
        c.n_schedule = vec![100, 400];
        c.replicates = 2;
        write_consistency(&c, dir.path()).unwrap();
        for name in [REPORT_CSV, REPORT_JSON, PLOT_SVG] {
            assert!(dir.path().join(name).exists(), "{name}");
        }
        c.mc_budget = 1_000;
        c.net_size = 4;
        c.theta_grid = Some(vec![Parameter::Vector(vec![1.0])]);
        write_separation_audit(&c, dir.path()).unwrap();
        assert!(dir.path().join(AUDIT_JSON).exists());
    }

    #[test]
    fn wasserstein_examples() {
        let d0 = MixingMeasure::dirac(0.0);
        let d1 = MixingMeasure::dirac(1.0);
        assert_eq!(wasserstein1(&d0, &d0).unwrap(), 0.0);
        assert_eq!(wasserstein1(&d0, &d1).unwrap(), 1.0);
        let half = MixingMeasure::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(wasserstein1(&half, &d0).unwrap(), 0.5);
        assert!(wasserstein1(&d0.scaled(0.5).unwrap(), &d1).is_err());
    }
}
