use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::contrast::PhiContrast;
use crate::error::{Error, Result};
use crate::estimation::{DEFAULT_EM_MAX_ITER, DEFAULT_FW_MAX_ITER, DEFAULT_SUPPORT_SIZE, DEFAULT_TOL};
use crate::models::{ModelFamily, Parameter};
use crate::separation::{AStar, DEFAULT_LAMBDA, DEFAULT_NET_SIZE, DEFAULT_RADIUS};

pub const DEFAULT_N_SCHEDULE: [usize; 5] = [100, 316, 1000, 3162, 10000];
pub const DEFAULT_REPLICATES: usize = 20;
/// Spacing of the parameter grid searched by the grid optimizer.
pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const DEFAULT_MC_BUDGET: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Grid,
    Em,
    Fw,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(OptimizerKind::Grid),
            "em" => Ok(OptimizerKind::Em),
            "fw" => Ok(OptimizerKind::Fw),
            other => Err(Error::Config(format!("unknown optimizer '{other}' (expected grid, em or fw)"))),
        }
    }
}

/// Settings of a consistency experiment and of a separation audit.
///
/// Read from a flat `key = value` file with dotted keys, or from JSON with
/// the same keys (nested objects are flattened with dots). Recognized keys:
///
/// | key | meaning |
/// |---|---|
/// | `model.id` | registry key of the model |
/// | `model.true_parameter` | `a,b` for vectors, `z:w,z:w` for measures |
/// | `contrast.id` | `log`, `identity`, `inv_1p_sq`, `inv_sq_1p` |
/// | `schedule.n` | strictly increasing comma-separated sample sizes |
/// | `schedule.replicates` | replicates per sample size |
/// | `seed` | master seed |
/// | `opt.kind` | `grid`, `em` or `fw` |
/// | `opt.grid_step` | spacing of the grid optimizer |
/// | `opt.support_size` | atoms of the latent support grid |
/// | `opt.tol` / `opt.max_iter` | stopping rule of the mixture optimizers |
/// | `separation.a_star` | `constant`, `contraction` or `identity` |
/// | `separation.lambda` | contraction coefficient |
/// | `separation.mc_budget` | Monte Carlo draws per audited parameter |
/// | `separation.radius` / `separation.net_size` | neighbourhood net |
/// | `separation.grid` | `;`-separated parameters to audit |
/// | `output.timing` | record wall-clock times (`true`/`false`) |
/// | `run.threads` | worker threads |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_id: String,
    pub contrast_id: String,
    pub true_parameter: Parameter,
    pub n_schedule: Vec<usize>,
    pub replicates: usize,
    pub master_seed: u64,
    pub optimizer: OptimizerKind,
    pub grid_step: f64,
    pub support_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub a_star: AStar,
    pub mc_budget: usize,
    pub radius: f64,
    pub net_size: usize,
    pub theta_grid: Option<Vec<Parameter>>,
    pub timing: bool,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Defaults for a registered model: the grid optimizer and `a* = theta*`
    /// for parametric families, the vertex-direction optimizer and the
    /// contraction for mixtures.
    pub fn for_model(model_id: &str) -> Result<Self> {
        let model = ModelFamily::from_id(model_id)?;
        let mixture = model.is_mixture();
        let optimizer = if mixture { OptimizerKind::Fw } else { OptimizerKind::Grid };
        Ok(Self {
            model_id: model_id.to_string(),
            contrast_id: "log".to_string(),
            true_parameter: model.default_true_parameter(),
            n_schedule: DEFAULT_N_SCHEDULE.to_vec(),
            replicates: DEFAULT_REPLICATES,
            master_seed: 0,
            optimizer,
            grid_step: DEFAULT_GRID_STEP,
            support_size: DEFAULT_SUPPORT_SIZE,
            tol: DEFAULT_TOL,
            max_iter: default_max_iter(optimizer),
            a_star: if mixture { AStar::Contraction(DEFAULT_LAMBDA) } else { AStar::Constant },
            mc_budget: DEFAULT_MC_BUDGET,
            radius: DEFAULT_RADIUS,
            net_size: DEFAULT_NET_SIZE,
            theta_grid: None,
            timing: false,
            threads: None,
        })
    }

    /// Reads a config file; JSON when the first non-blank character is `{`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(text)?;
            let mut pairs = BTreeMap::new();
            flatten_json("", &value, &mut pairs)?;
            pairs.into_iter().collect()
        } else {
            parse_key_values(text)?
        };
        Self::from_pairs(&pairs)
    }

    /// Builds a config from `(key, value)` pairs; later keys override earlier ones.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let map: BTreeMap<&str, &str> = pairs.iter().map(|(k, v)| (k.as_str(), v.trim())).collect();
        let model_id = map.get("model.id").ok_or_else(|| Error::Config("missing key 'model.id'".into()))?;
        let mut config = Self::for_model(model_id)?;
        let mut lambda = match config.a_star {
            AStar::Contraction(l) => l,
            _ => DEFAULT_LAMBDA,
        };
        let mut a_star_id = None;
        let mut max_iter = None;
        for (&key, &value) in &map {
            match key {
                "model.id" => {}
                "model.true_parameter" => config.true_parameter = value.parse()?,
                "contrast.id" => config.contrast_id = value.to_string(),
                "schedule.n" => config.n_schedule = parse_list(key, value)?,
                "schedule.replicates" => config.replicates = parse_value(key, value)?,
                "seed" => config.master_seed = parse_value(key, value)?,
                "opt.kind" => config.optimizer = value.parse()?,
                "opt.grid_step" => config.grid_step = parse_value(key, value)?,
                "opt.support_size" => config.support_size = parse_value(key, value)?,
                "opt.tol" => config.tol = parse_value(key, value)?,
                "opt.max_iter" => max_iter = Some(parse_value(key, value)?),
                "separation.a_star" => a_star_id = Some(value.to_string()),
                "separation.lambda" => lambda = parse_value(key, value)?,
                "separation.mc_budget" => config.mc_budget = parse_value(key, value)?,
                "separation.radius" => config.radius = parse_value(key, value)?,
                "separation.net_size" => config.net_size = parse_value(key, value)?,
                "separation.grid" => {
                    config.theta_grid = Some(
                        value
                            .split(';')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(str::parse)
                            .collect::<Result<_>>()?,
                    )
                }
                "output.timing" => config.timing = parse_value(key, value)?,
                "run.threads" => config.threads = Some(parse_value(key, value)?),
                other => return Err(Error::Config(format!("unknown key '{other}'"))),
            }
        }
        config.max_iter = max_iter.unwrap_or_else(|| default_max_iter(config.optimizer));
        config.a_star = match a_star_id {
            Some(id) => AStar::parse(&id, lambda)?,
            None => match config.a_star {
                AStar::Contraction(_) => AStar::parse("contraction", lambda)?,
                other => other,
            },
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let model = ModelFamily::from_id(&self.model_id)?;
        PhiContrast::from_id(&self.contrast_id)?;
        model.validate(&self.true_parameter)?;
        if self.n_schedule.is_empty() || self.n_schedule[0] == 0 {
            return Err(Error::Config("schedule.n must list positive sample sizes".into()));
        }
        if self.n_schedule.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Config("schedule.n must be strictly increasing".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("schedule.replicates must be at least 1".into()));
        }
        match (self.optimizer, model.is_mixture()) {
            (OptimizerKind::Grid, true) => {
                return Err(Error::Config("the grid optimizer needs a parametric model".into()))
            }
            (OptimizerKind::Em | OptimizerKind::Fw, false) => {
                return Err(Error::Config("em and fw need a mixture model".into()))
            }
            _ => {}
        }
        if !(self.grid_step > 0.0) || self.support_size == 0 || !(self.tol > 0.0) {
            return Err(Error::Config("grid step, support size and tolerance must be positive".into()));
        }
        if self.mc_budget == 0 || self.net_size == 0 || !(self.radius >= 0.0) {
            return Err(Error::Config("separation budget, net size and radius must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("run.threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelFamily> {
        ModelFamily::from_id(&self.model_id)
    }

    pub fn contrast(&self) -> Result<PhiContrast> {
        PhiContrast::from_id(&self.contrast_id)
    }
}

fn default_max_iter(kind: OptimizerKind) -> usize {
    match kind {
        OptimizerKind::Em => DEFAULT_EM_MAX_ITER,
        OptimizerKind::Fw | OptimizerKind::Grid => DEFAULT_FW_MAX_ITER,
    }
}

fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        out.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(out)
}

fn flatten_json(prefix: &str, value: &serde_json::Value, out: &mut BTreeMap<String, String>) -> Result<()> {
    use serde_json::Value;
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten_json(&key(k), v, out)?;
            }
        }
        Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(|v| scalar_text(prefix, v)).collect::<Result<_>>()?;
            out.insert(prefix.to_string(), parts.join(","));
        }
        other => {
            out.insert(prefix.to_string(), scalar_text(prefix, other)?);
        }
    }
    Ok(())
}

fn scalar_text(key: &str, value: &serde_json::Value) -> Result<String> {
    use serde_json::Value;
    match value {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        _ => Err(Error::Config(format!("key '{key}' must hold a scalar or a list of scalars"))),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse '{value}' for key '{key}'")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_value_and_json_agree() {
        let kv = "\
# consistency run
model.id = gaussian_mixture
model.true_parameter = -1:0.3,1:0.7
schedule.n = 100, 1000
schedule.replicates = 3
seed = 42
opt.kind = fw
separation.lambda = 0.25
";
        let json = r#"{"model": {"id": "gaussian_mixture", "true_parameter": "-1:0.3,1:0.7"},
            "schedule": {"n": [100, 1000], "replicates": 3}, "seed": 42,
            "opt.kind": "fw", "separation": {"lambda": 0.25}}"#;
        let a = ExperimentConfig::parse(kv).unwrap();
        let b = ExperimentConfig::parse(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_schedule, vec![100, 1000]);
        assert_eq!(a.a_star, AStar::Contraction(0.25));
        assert_eq!(a.max_iter, DEFAULT_FW_MAX_ITER);
    }

    #[test]
    fn defaults_follow_the_model() {
        let c = ExperimentConfig::parse("model.id = gaussian_location").unwrap();
        assert_eq!(c.optimizer, OptimizerKind::Grid);
        assert_eq!(c.a_star, AStar::Constant);
        assert_eq!(c.n_schedule, DEFAULT_N_SCHEDULE.to_vec());
        assert_eq!(c.replicates, 20);
        let c = ExperimentConfig::parse("model.id = exponential_mixture\nopt.kind = em").unwrap();
        assert_eq!(c.max_iter, DEFAULT_EM_MAX_ITER);
    }

    #[test]
    fn rejects_invalid_configs() {
        for text in [
            "",
            "model.id = nope",
            "model.id = gaussian_location\nschedule.n = 100, 100",
            "model.id = gaussian_location\nschedule.replicates = 0",
            "model.id = gaussian_location\nopt.kind = em",
            "model.id = gaussian_mixture\nopt.kind = grid",
            "model.id = gaussian_location\nunknown.key = 1",
            "model.id = gaussian_location\ncontrast.id = cubic",
            "model.id = gaussian_location\nseed",
            "model.id = gaussian_location\nmodel.true_parameter = 5",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn parses_audit_grid() {
        let c = ExperimentConfig::parse(
            "model.id = gaussian_mixture\nseparation.grid = -2:1; 2:1\nseparation.a_star = identity",
        )
        .unwrap();
        assert_eq!(c.theta_grid.as_ref().unwrap().len(), 2);
        assert_eq!(c.a_star, AStar::Identity);
    }
}
