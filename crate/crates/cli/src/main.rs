use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mestim_core::harness::{
    self, fit_single, loglog_slope, run_identity_suite, write_consistency, write_separation_audit, PLOT_SVG,
    REPORT_JSON,
};
use mestim_core::{ExperimentConfig, ExperimentReport};

/// Process exit status when an audit or identity check fails.
const EXIT_FAIL: u8 = 2;

#[derive(Parser)]
#[command(name = "mestim", version, about = "Contrast M-estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file, key = value or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registry model to use with default settings when no config is given.
    #[arg(long)]
    model: Option<String>,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving the output files.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form identity suite of the built-in contrasts.
    Identities,
    /// One fit at a single sample size; writes fit.json.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Sample size; the largest size of the schedule when omitted.
        #[arg(long)]
        n: Option<usize>,
        /// Replicate index selecting the sample.
        #[arg(long, default_value_t = 0)]
        replicate: usize,
    },
    /// Separation audit over a parameter grid; writes audit.json.
    CheckA2 {
        #[command(flatten)]
        common: Common,
    },
    /// Replicated consistency experiment; writes report.csv, report.json and convergence.svg.
    Consistency {
        #[command(flatten)]
        common: Common,
    },
    /// Renders convergence.svg from a report.json.
    Plot {
        /// Report to plot; `<out-dir>/report.json` when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Runs a subcommand; `Ok(false)` means a check ran and failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Identities => identities(),
        Command::Fit { common, n, replicate } => fit(&common, n, replicate),
        Command::CheckA2 { common } => check_a2(&common),
        Command::Consistency { common } => consistency(&common),
        Command::Plot { report, out_dir } => plot(report.as_deref(), &out_dir),
    }
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut config = match (&common.config, &common.model) {
        (Some(path), None) => {
            ExperimentConfig::load(path).with_context(|| format!("reading config {}", path.display()))?
        }
        (None, Some(model)) => ExperimentConfig::for_model(model)?,
        (Some(_), Some(_)) => bail!("--config and --model are mutually exclusive"),
        (None, None) => bail!("either --config or --model is required"),
    };
    if let Some(seed) = common.seed {
        config.master_seed = seed;
    }
    if common.threads.is_some() {
        config.threads = common.threads;
    }
    config.validate()?;
    Ok(config)
}

fn identities() -> Result<bool> {
    let report = run_identity_suite()?;
    for c in &report.checks {
        println!("{} {} (max error {:.3e}, tolerance {:.0e})", verdict(c.pass), c.name, c.max_error, c.tolerance);
    }
    println!("identities: {}", verdict(report.pass));
    Ok(report.pass)
}

fn fit(common: &Common, n: Option<usize>, replicate: usize) -> Result<bool> {
    let config = load_config(common)?;
    let n = n.or_else(|| config.n_schedule.last().copied()).context("empty sample-size schedule")?;
    let (fit, distance) = fit_single(&config, n, replicate)?;
    println!("model {} contrast {} n {n} replicate {replicate}", config.model_id, config.contrast_id);
    println!("theta_hat {}", fit.theta_hat);
    println!("m_n {}", fit.m_n_value);
    println!("gap_bound {:.3e}", fit.gap_bound);
    println!("iterations {} ({:?}, converged {})", fit.iterations, fit.stop_reason, fit.converged);
    println!("mass_deficit {:.3e}", fit.mass_deficit());
    println!("distance {distance}");
    fs::create_dir_all(&common.out_dir)?;
    let path = common.out_dir.join("fit.json");
    fs::write(&path, serde_json::to_string_pretty(&fit)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(true)
}

fn check_a2(common: &Common) -> Result<bool> {
    let config = load_config(common)?;
    let report = write_separation_audit(&config, &common.out_dir)?;
    for r in &report.records {
        match &r.error {
            Some(e) => println!("{} theta {}: {e}", verdict(false), r.theta),
            None => println!(
                "{} theta {}: gap {:.4e} (99% upper {:.4e}), sup mean {:.4e}, tail ratio {:.2}",
                verdict(r.pass),
                r.theta,
                r.gap.mean,
                r.gap.ci_upper_99,
                r.sup_mean,
                r.tail_ratio
            ),
        }
    }
    println!("separation audit: {}", verdict(report.pass));
    Ok(report.pass)
}

fn consistency(common: &Common) -> Result<bool> {
    let config = load_config(common)?;
    let report = write_consistency(&config, &common.out_dir)?;
    summarize(&report);
    Ok(true)
}

fn plot(report: Option<&Path>, out_dir: &Path) -> Result<bool> {
    let path = report.map(Path::to_path_buf).unwrap_or_else(|| out_dir.join(REPORT_JSON));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report = ExperimentReport::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    fs::create_dir_all(out_dir)?;
    harness::emit_plot(&report, &out_dir.join(PLOT_SVG))?;
    summarize(&report);
    Ok(true)
}

fn summarize(report: &ExperimentReport) {
    for a in &report.aggregates {
        println!(
            "n {:>6}: median distance {:.4e} [{:.4e}, {:.4e}], ok {}, failed {}",
            a.n, a.median_distance, a.decile_low, a.decile_high, a.succeeded, a.failed
        );
    }
    if let Some(slope) = loglog_slope(report) {
        println!("log-log slope {slope:.3}");
    }
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
