use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::contrast::PhiContrast;
use crate::error::{Error, Result};
use crate::estimation::{fit_grid, fit_mixture_em, fit_mixture_fw, EmpiricalContrast, FitResult, StopReason};
use crate::extended::ExtendedReal;
use crate::models::{linspace, ModelFamily, Parameter};
use crate::quadrature::QuadratureRule;
use crate::rng::Rng;

use super::config::{ExperimentConfig, OptimizerKind};

/// Header of `report.csv`.
pub const CSV_HEADER: &str = "n,replicate,distance,mass_deficit,certified_gap,m_n,wall_ms";

/// Outcome of one fit of the consistency experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub n: usize,
    pub replicate: usize,
    pub theta_hat: Option<Parameter>,
    /// Distance to the true parameter: Euclidean, or W1 between normalized measures.
    pub distance: Option<f64>,
    pub mass_deficit: Option<f64>,
    pub certified_gap: Option<f64>,
    pub m_n_value: Option<ExtendedReal>,
    pub iterations: Option<usize>,
    pub stop_reason: Option<StopReason>,
    /// Wall-clock milliseconds of sampling plus fitting; only when timing is enabled.
    pub wall_ms: Option<f64>,
    pub failure: Option<String>,
}

/// Reads `null` (how JSON stores NaN) back as NaN.
fn nan_if_null<'de, D: Deserializer<'de>>(deserializer: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(deserializer)?.unwrap_or(f64::NAN))
}

/// Distances at one sample size, over the replicates that did not fail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    #[serde(deserialize_with = "nan_if_null")]
    pub median_distance: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub decile_low: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub decile_high: f64,
    #[serde(deserialize_with = "nan_if_null")]
    pub median_certified_gap: f64,
    pub succeeded: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub records: Vec<ReplicateRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl ExperimentReport {
    pub fn aggregate(&self, n: usize) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.n == n)
    }

    /// One line per record under [`CSV_HEADER`]; missing values are empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.n,
                r.replicate,
                opt(r.distance),
                opt(r.mass_deficit),
                opt(r.certified_gap),
                r.m_n_value.map(|v| v.to_string()).unwrap_or_default(),
                opt(r.wall_ms),
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_csv())?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_json()?)?)
    }
}

/// Sample quantile with linear interpolation between order statistics.
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Runs every `(n, replicate)` fit of `config`.
///
/// Replicate `r` at sample size `n` draws its sample from a generator seeded
/// by `(master_seed, n, r)`, so the records do not depend on the number of
/// worker threads. A fit that fails (for instance an inadmissible contrast)
/// is recorded with its error and the run continues.
pub fn run_consistency(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let model = config.model()?;
    let contrast = config.contrast()?;
    let q = model.quadrature_rule()?;
    let tasks: Vec<(usize, usize)> = config
        .n_schedule
        .iter()
        .flat_map(|&n| (0..config.replicates).map(move |r| (n, r)))
        .collect();
    let run = || -> Vec<ReplicateRecord> {
        tasks
            .par_iter()
            .map(|&(n, r)| run_replicate(config, &model, &contrast, &q, n, r))
            .collect()
    };
    let records = match config.threads {
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {threads} workers: {e}")))?
            .install(run),
        None => run(),
    };
    let aggregates = config.n_schedule.iter().map(|&n| aggregate(n, &records)).collect();
    Ok(ExperimentReport { config: config.clone(), records, aggregates })
}

fn run_replicate(
    config: &ExperimentConfig,
    model: &ModelFamily,
    contrast: &PhiContrast,
    q: &QuadratureRule,
    n: usize,
    replicate: usize,
) -> ReplicateRecord {
    let start = Instant::now();
    let outcome = fit_replicate(config, model, contrast, q, n, replicate);
    let wall_ms = config.timing.then(|| start.elapsed().as_secs_f64() * 1e3);
    let empty = ReplicateRecord {
        n,
        replicate,
        theta_hat: None,
        distance: None,
        mass_deficit: None,
        certified_gap: None,
        m_n_value: None,
        iterations: None,
        stop_reason: None,
        wall_ms,
        failure: None,
    };
    match outcome.and_then(|fit| Ok((model.distance(&fit.theta_hat, &config.true_parameter)?, fit))) {
        Ok((distance, fit)) => ReplicateRecord {
            distance: Some(distance),
            mass_deficit: Some(fit.mass_deficit()),
            certified_gap: Some(fit.gap_bound),
            m_n_value: Some(fit.m_n_value),
            iterations: Some(fit.iterations),
            stop_reason: Some(fit.stop_reason),
            theta_hat: Some(fit.theta_hat),
            ..empty
        },
        Err(e) => {
            log::warn!("fit failed at n = {n}, replicate {replicate}: {e}");
            ReplicateRecord { failure: Some(e.to_string()), ..empty }
        }
    }
}

/// Fits replicate `replicate` at sample size `n` exactly as
/// [`run_consistency`] does, returning the fit and its distance to the truth.
pub fn fit_single(config: &ExperimentConfig, n: usize, replicate: usize) -> Result<(FitResult, f64)> {
    config.validate()?;
    if n == 0 {
        return Err(Error::argument("sample size must be positive"));
    }
    let model = config.model()?;
    let contrast = config.contrast()?;
    let q = model.quadrature_rule()?;
    let fit = fit_replicate(config, &model, &contrast, &q, n, replicate)?;
    let distance = model.distance(&fit.theta_hat, &config.true_parameter)?;
    Ok((fit, distance))
}

fn fit_replicate(
    config: &ExperimentConfig,
    model: &ModelFamily,
    contrast: &PhiContrast,
    q: &QuadratureRule,
    n: usize,
    replicate: usize,
) -> Result<FitResult> {
    let mut rng = Rng::derive(config.master_seed, &[n as u64, replicate as u64]);
    let sample = model.sample(&config.true_parameter, n, &mut rng)?;
    let ec = EmpiricalContrast::new(contrast, model, sample, q)?;
    match (config.optimizer, model) {
        (OptimizerKind::Grid, ModelFamily::Parametric(p)) => {
            let resolution: Vec<usize> = p
                .theta_box()
                .iter()
                .map(|&(lo, hi)| ((hi - lo) / config.grid_step).round() as usize + 1)
                .collect();
            fit_grid(&ec, &resolution)
        }
        (OptimizerKind::Em | OptimizerKind::Fw, ModelFamily::Mixture(k)) => {
            let (lo, hi) = k.z_domain();
            let grid = linspace(lo, hi, config.support_size);
            if config.optimizer == OptimizerKind::Em {
                fit_mixture_em(&ec, &grid, config.tol, config.max_iter)
            } else {
                fit_mixture_fw(&ec, &grid, config.tol, config.max_iter)
            }
        }
        _ => Err(Error::Config("optimizer does not match the model".into())),
    }
}

fn aggregate(n: usize, records: &[ReplicateRecord]) -> Aggregate {
    let at_n: Vec<&ReplicateRecord> = records.iter().filter(|r| r.n == n).collect();
    let mut distances: Vec<f64> = at_n.iter().filter_map(|r| r.distance).collect();
    let mut gaps: Vec<f64> = at_n.iter().filter_map(|r| r.certified_gap).collect();
    distances.sort_by(f64::total_cmp);
    gaps.sort_by(f64::total_cmp);
    let q = |v: &[f64], p: f64| if v.is_empty() { f64::NAN } else { quantile_sorted(v, p) };
    Aggregate {
        n,
        median_distance: q(&distances, 0.5),
        decile_low: q(&distances, 0.1),
        decile_high: q(&distances, 0.9),
        median_certified_gap: q(&gaps, 0.5),
        succeeded: distances.len(),
        failed: at_n.len() - distances.len(),
    }
}
