use std::collections::BTreeMap;

use mestim_core::harness::{
    emit_plot, loglog_slope, render_svg, run_consistency, run_separation_audit, wasserstein1, CSV_HEADER,
};
use mestim_core::{AStar, ExperimentConfig, MixingMeasure, ModelFamily, OptimizerKind, Parameter};
use proptest::prelude::*;

/// `int |F_mu - F_nu|` by a midpoint rule on `[-5, 5]`.
fn cdf_oracle(mu: &MixingMeasure, nu: &MixingMeasure) -> f64 {
    let cdf = |m: &MixingMeasure, t: f64| m.iter().filter(|&(z, _)| z <= t).map(|(_, w)| w).sum::<f64>();
    let steps = 200_000;
    let h = 10.0 / steps as f64;
    (0..steps)
        .map(|i| {
            let t = -5.0 + (i as f64 + 0.5) * h;
            (cdf(mu, t) - cdf(nu, t)).abs()
        })
        .sum::<f64>()
        * h
}

fn measure(pairs: &[(f64, f64)]) -> MixingMeasure {
    MixingMeasure::from_pairs(pairs).unwrap()
}

fn config(model_id: &str, schedule: &[usize], replicates: usize, seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig::for_model(model_id).unwrap();
    config.n_schedule = schedule.to_vec();
    config.replicates = replicates;
    config.master_seed = seed;
    config
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

#[test]
fn wasserstein_examples() {
    let half = measure(&[(0.0, 0.5), (1.0, 0.5)]);
    let zero = MixingMeasure::dirac(0.0);
    assert_eq!(wasserstein1(&half, &half).unwrap(), 0.0);
    assert_eq!(wasserstein1(&zero, &MixingMeasure::dirac(1.0)).unwrap(), 1.0);
    let oracle = cdf_oracle(&half, &zero);
    assert!((oracle - 0.5).abs() < 1e-4);
    assert!((wasserstein1(&half, &zero).unwrap() - 0.5).abs() < 1e-15);
    assert!(wasserstein1(&measure(&[(0.0, 0.5)]), &zero).is_err());
}

fn probability_measure() -> impl Strategy<Value = MixingMeasure> {
    prop::collection::btree_map(-300i32..=300, 0.05f64..1.0, 1..5).prop_map(|m: BTreeMap<i32, f64>| {
        let total: f64 = m.values().sum();
        let pairs: Vec<(f64, f64)> = m.into_iter().map(|(z, w)| (z as f64 / 100.0, w / total)).collect();
        MixingMeasure::from_pairs(&pairs).unwrap()
    })
}

proptest! {
    #[test]
    fn wasserstein_is_a_metric(a in probability_measure(), b in probability_measure(), c in probability_measure()) {
        let d = |x: &MixingMeasure, y: &MixingMeasure| wasserstein1(x, y).unwrap();
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
        prop_assert!(d(&a, &a) <= 1e-12);
        prop_assert!(d(&a, &b) >= 0.0);
        if a != b {
            prop_assert!(d(&a, &b) > 1e-12);
        }
    }

    #[test]
    fn wasserstein_matches_cdf_integral(a in probability_measure(), b in probability_measure()) {
        prop_assert!((wasserstein1(&a, &b).unwrap() - cdf_oracle(&a, &b)).abs() <= 1e-4);
    }
}

#[test]
fn single_replicate_gives_one_record() {
    let report = run_consistency(&config("gaussian_location", &[100], 1, 1)).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.aggregates.len(), 1);
    assert!(report.records[0].distance.unwrap() >= 0.0);
    assert!(report.records[0].wall_ms.is_none());
}

#[test]
fn gaussian_location_rate() {
    let report = run_consistency(&config("gaussian_location", &[10_000], 20, 2)).unwrap();
    let med = median(report.records.iter().map(|r| r.distance.unwrap()).collect());
    assert!(med <= 0.005 + 3.0 / 100.0, "median {med}");
    assert_eq!(report.aggregate(10_000).unwrap().median_distance, med);
}

#[test]
fn runs_are_byte_identical() {
    let c = config("gaussian_mixture", &[100, 300], 3, 3);
    let a = run_consistency(&c).unwrap().to_csv();
    assert_eq!(a, run_consistency(&c).unwrap().to_csv());
    assert!(a.starts_with(CSV_HEADER));
    assert_eq!(a.lines().count(), 7);
    let mut threaded = c.clone();
    threaded.threads = Some(2);
    assert_eq!(a, run_consistency(&threaded).unwrap().to_csv());
}

#[test]
fn plot_slope_and_determinism() {
    let report = run_consistency(&config("gaussian_location", &[100, 1000, 10_000], 20, 4)).unwrap();
    // ordinary least squares of log median on log n from the records
    let points: Vec<(f64, f64)> = [100usize, 1000, 10_000]
        .iter()
        .map(|&n| {
            let d = report.records.iter().filter(|r| r.n == n).map(|r| r.distance.unwrap()).collect();
            ((n as f64).ln(), median(d).ln())
        })
        .collect();
    let k = points.len() as f64;
    let (sx, sy) = (points.iter().map(|p| p.0).sum::<f64>(), points.iter().map(|p| p.1).sum::<f64>());
    let sxy = points.iter().map(|p| p.0 * p.1).sum::<f64>();
    let sxx = points.iter().map(|p| p.0 * p.0).sum::<f64>();
    let oracle = (k * sxy - sx * sy) / (k * sxx - sx * sx);
    let slope = loglog_slope(&report).unwrap();
    assert!((slope - oracle).abs() <= 1e-12);
    assert!((-0.7..=-0.3).contains(&slope), "slope {slope}");

    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    emit_plot(&report, &a).unwrap();
    emit_plot(&report.clone(), &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let two = run_consistency(&config("gaussian_location", &[100, 1000], 3, 5)).unwrap();
    assert_eq!(render_svg(&two).unwrap().matches("class=\"marker\"").count(), 2);
    let one = run_consistency(&config("gaussian_location", &[100], 3, 5)).unwrap();
    assert!(render_svg(&one).is_err());
}

#[test]
fn every_registry_model_is_consistent() {
    for id in ModelFamily::REGISTRY {
        let report = run_consistency(&config(id, &[100, 10_000], 5, 6)).unwrap();
        let small = report.aggregate(100).unwrap().median_distance;
        let large = report.aggregate(10_000).unwrap().median_distance;
        assert!(large < small, "{id}: {large} vs {small}");
        assert!(report.records.iter().all(|r| r.failure.is_none()));
    }
}

#[test]
fn key_value_and_json_configs_agree() {
    let text = "\
# audit settings
model.id = gaussian_mixture
model.true_parameter = -1:0.3, 1:0.7
schedule.n = 100, 1000
schedule.replicates = 4
seed = 17
opt.kind = em
opt.tol = 1e-7
separation.a_star = contraction
separation.lambda = 0.25
";
    let json = r#"{
        "model": {"id": "gaussian_mixture", "true_parameter": "-1:0.3, 1:0.7"},
        "schedule": {"n": [100, 1000], "replicates": 4},
        "seed": 17,
        "opt": {"kind": "em", "tol": 1e-7},
        "separation": {"a_star": "contraction", "lambda": 0.25}
    }"#;
    let a = ExperimentConfig::parse(text).unwrap();
    assert_eq!(a, ExperimentConfig::parse(json).unwrap());
    assert_eq!(a.optimizer, OptimizerKind::Em);
    assert_eq!(a.a_star, AStar::Contraction(0.25));
    assert_eq!(a.true_parameter, Parameter::from(measure(&[(-1.0, 0.3), (1.0, 0.7)])));
    assert!(ExperimentConfig::parse("model.id = gaussian_location\nbogus = 1\n").is_err());
    assert!(ExperimentConfig::parse("model.id = gaussian_location\nschedule.n = 100, 10\n").is_err());
}

#[test]
fn separation_audit_verdicts() {
    let mut c = ExperimentConfig::for_model("gaussian_location").unwrap();
    c.mc_budget = 20_000;
    assert!(run_separation_audit(&c).unwrap().pass);
    c.a_star = AStar::Identity;
    assert!(!run_separation_audit(&c).unwrap().pass);
    c.theta_grid = Some(vec![]);
    assert!(run_separation_audit(&c).is_err());
}
