//! Model families: parametric densities on a box and kernel mixtures over a
//! compact latent interval, with their reference quadrature and contraction
//! map.

mod kernel;
mod measure;
mod parametric;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use kernel::{KernelFn, KernelSampler, MixtureKernel, EXPONENTIAL_X_MAX, GAUSSIAN_MARGIN};
pub use measure::{MixingMeasure, ATOM_MERGE_TOL, MASS_TOL};
pub use parametric::{DensityFn, ParamSampler, ParametricFamily};

use crate::contrast::PhiContrast;
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::quadrature::QuadratureRule;
use crate::rng::Rng;

/// Number of latent points on which kernel normalization is checked at registration.
pub const REGISTRATION_GRID: usize = 32;
/// Tolerance of the registration normalization check.
pub const NORMALIZATION_TOL: f64 = 1e-6;

/// A point of the parameter space: a vector in a box, or a mixing measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Vector(Vec<f64>),
    Measure(MixingMeasure),
}

impl Parameter {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Parameter::Vector(v) => Some(v),
            Parameter::Measure(_) => None,
        }
    }

    pub fn as_measure(&self) -> Option<&MixingMeasure> {
        match self {
            Parameter::Measure(m) => Some(m),
            Parameter::Vector(_) => None,
        }
    }
}

impl From<MixingMeasure> for Parameter {
    fn from(m: MixingMeasure) -> Self {
        Parameter::Measure(m)
    }
}

impl From<Vec<f64>> for Parameter {
    fn from(v: Vec<f64>) -> Self {
        Parameter::Vector(v)
    }
}

/// Vectors print as `a,b,...`; measures as `z:w,z:w,...`.
impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Parameter::Vector(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                f.write_str(&parts.join(","))
            }
            Parameter::Measure(m) => {
                let parts: Vec<String> = m.iter().map(|(z, w)| format!("{z}:{w}")).collect();
                f.write_str(&parts.join(","))
            }
        }
    }
}

impl FromStr for Parameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| -> Result<f64> {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{t}' in parameter '{s}'")))
        };
        let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        if items.is_empty() {
            return Err(Error::Config("empty parameter".into()));
        }
        if items.iter().any(|t| t.contains(':')) {
            let pairs = items
                .iter()
                .map(|t| {
                    let (z, w) = t
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("expected atom:weight, got '{t}'")))?;
                    Ok((parse(z)?, parse(w)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Parameter::Measure(MixingMeasure::from_pairs(&pairs)?))
        } else {
            Ok(Parameter::Vector(items.into_iter().map(parse).collect::<Result<_>>()?))
        }
    }
}

/// A registered model: either a parametric family or a kernel mixture.
#[derive(Debug, Clone)]
pub enum ModelFamily {
    Parametric(ParametricFamily),
    Mixture(MixtureKernel),
}

impl ModelFamily {
    /// Identifiers of the built-in registry.
    pub const REGISTRY: [&'static str; 3] = ["gaussian_location", "gaussian_mixture", "exponential_mixture"];

    /// Looks up a built-in model and verifies its normalization.
    pub fn from_id(id: &str) -> Result<Self> {
        let model = match id {
            "gaussian_location" => ModelFamily::Parametric(ParametricFamily::gaussian_location()?),
            "gaussian_mixture" => ModelFamily::Mixture(MixtureKernel::gaussian((-3.0, 3.0))?),
            "exponential_mixture" => {
                ModelFamily::Mixture(MixtureKernel::exponential((0.2, 5.0), EXPONENTIAL_X_MAX)?)
            }
            other => return Err(Error::argument(format!("unknown model '{other}'"))),
        };
        model.verify_registration()?;
        Ok(model)
    }

    /// Checks that densities integrate to one under the reference quadrature
    /// on a grid of parameters.
    pub fn verify_registration(&self) -> Result<()> {
        let q = self.quadrature_rule()?;
        let err = match self {
            ModelFamily::Mixture(k) => {
                let (lo, hi) = k.z_domain();
                k.normalization_error(&q, &linspace(lo, hi, REGISTRATION_GRID))
            }
            ModelFamily::Parametric(p) => {
                let thetas = p.theta_box().iter().map(|&(lo, hi)| linspace(lo, hi, REGISTRATION_GRID));
                // diagonal of the box suffices for a smoke check in d > 1
                let per_dim: Vec<Vec<f64>> = thetas.collect();
                let diag: Vec<Vec<f64>> = (0..REGISTRATION_GRID)
                    .map(|i| per_dim.iter().map(|g| g[i]).collect())
                    .collect();
                p.normalization_error(&q, &diag)
            }
        };
        if err > NORMALIZATION_TOL {
            return Err(Error::Verification(format!(
                "model '{}' densities integrate to 1 only within {err:e}",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        match self {
            ModelFamily::Parametric(p) => p.name(),
            ModelFamily::Mixture(k) => k.name(),
        }
    }

    pub fn is_mixture(&self) -> bool {
        matches!(self, ModelFamily::Mixture(_))
    }

    pub fn x_domain(&self) -> (f64, f64) {
        match self {
            ModelFamily::Parametric(p) => p.x_domain(),
            ModelFamily::Mixture(k) => k.x_domain(),
        }
    }

    /// Default reference quadrature on the truncated observation space.
    pub fn quadrature_rule(&self) -> Result<QuadratureRule> {
        let (a, b) = self.x_domain();
        QuadratureRule::standard(a, b)
    }

    /// The designated true parameter of the built-in models.
    pub fn default_true_parameter(&self) -> Parameter {
        match self {
            ModelFamily::Parametric(p) => Parameter::Vector(p.true_theta().to_vec()),
            ModelFamily::Mixture(k) if k.name() == "exponential" => {
                Parameter::Measure(MixingMeasure::new(vec![0.5, 2.0], vec![0.4, 0.6]).expect("valid"))
            }
            ModelFamily::Mixture(_) => {
                Parameter::Measure(MixingMeasure::new(vec![-1.0, 1.0], vec![0.3, 0.7]).expect("valid"))
            }
        }
    }

    pub fn validate(&self, theta: &Parameter) -> Result<()> {
        match (self, theta) {
            (ModelFamily::Parametric(p), Parameter::Vector(v)) => {
                if p.contains(v) {
                    Ok(())
                } else {
                    Err(Error::argument(format!("parameter {theta} outside the parameter box")))
                }
            }
            (ModelFamily::Mixture(k), Parameter::Measure(m)) => {
                if m.supported_in(k.z_domain()) {
                    Ok(())
                } else {
                    Err(Error::argument(format!("mixing measure {theta} not supported in the latent domain")))
                }
            }
            _ => Err(Error::argument(format!(
                "parameter {theta} has the wrong kind for model '{}'",
                self.name()
            ))),
        }
    }

    /// `f_theta(x)` without the domain check.
    pub(crate) fn density_unchecked(&self, theta: &Parameter, x: f64) -> f64 {
        match (self, theta) {
            (ModelFamily::Parametric(p), Parameter::Vector(v)) => p.density(v, x),
            (ModelFamily::Mixture(k), Parameter::Measure(m)) => k.mixture_density_unchecked(m, x),
            _ => f64::NAN,
        }
    }

    pub fn density(&self, theta: &Parameter, x: f64) -> Result<f64> {
        self.validate(theta)?;
        let (lo, hi) = self.x_domain();
        if !(x >= lo && x <= hi) {
            return Err(Error::domain(format!("observation {x} outside [{lo}, {hi}]")));
        }
        Ok(self.density_unchecked(theta, x))
    }

    /// `P_theta(X)`: one for parametric members, the mass of the mixing measure otherwise.
    pub fn total_mass(&self, theta: &Parameter) -> f64 {
        match theta {
            Parameter::Vector(_) => 1.0,
            Parameter::Measure(m) => m.mass(),
        }
    }

    /// `n` i.i.d. draws from `P_theta`.
    pub fn sample(&self, theta: &Parameter, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        self.validate(theta)?;
        match (self, theta) {
            (ModelFamily::Parametric(p), Parameter::Vector(v)) => {
                if n == 0 {
                    return Err(Error::argument("sample size must be at least 1"));
                }
                Ok((0..n).map(|_| p.sample_one(v, rng)).collect())
            }
            (ModelFamily::Mixture(k), Parameter::Measure(m)) => k.sample_mixture(m, n, rng),
            _ => unreachable!("validated above"),
        }
    }

    /// `lambda theta* + (1 - lambda) theta`.
    pub fn contraction(&self, theta: &Parameter, theta_star: &Parameter, lambda: f64) -> Result<Parameter> {
        contraction(theta, theta_star, lambda)
    }

    /// Euclidean distance for vectors; Wasserstein-1 between normalized
    /// measures for mixing measures.
    pub fn distance(&self, a: &Parameter, b: &Parameter) -> Result<f64> {
        parameter_distance(a, b)
    }

    /// `int psi(f_theta) dQ` under `q_rule`.
    pub fn psi_integral(&self, contrast: &PhiContrast, theta: &Parameter, q_rule: &QuadratureRule) -> Result<f64> {
        self.validate(theta)?;
        let mut total = 0.0;
        for (&x, &w) in q_rule.nodes().iter().zip(q_rule.weights()) {
            total += w * contrast.psi_nonnegative(self.density_unchecked(theta, x))?;
        }
        Ok(total)
    }

    /// Population contrast `M*(theta) = int m_theta f_{theta*} dQ`.
    pub fn population_contrast(
        &self,
        contrast: &PhiContrast,
        theta: &Parameter,
        theta_star: &Parameter,
        q_rule: &QuadratureRule,
    ) -> Result<ExtendedReal> {
        self.validate(theta_star)?;
        let psi_int = self.psi_integral(contrast, theta, q_rule)?;
        let mass = self.total_mass(theta);
        let mut total = 0.0;
        for (&x, &w) in q_rule.nodes().iter().zip(q_rule.weights()) {
            let f_star = self.density_unchecked(theta_star, x);
            if f_star == 0.0 {
                continue;
            }
            match contrast.m_value(self.density_unchecked(theta, x), psi_int, mass.min(1.0))? {
                ExtendedReal::Finite(m) => total += w * m * f_star,
                ExtendedReal::NegInfinity => return Ok(ExtendedReal::NegInfinity),
            }
        }
        Ok(ExtendedReal::Finite(total))
    }
}

/// `lambda theta* + (1 - lambda) theta`, computed as `theta + lambda (theta* - theta)`.
pub fn contraction(theta: &Parameter, theta_star: &Parameter, lambda: f64) -> Result<Parameter> {
    match (theta, theta_star) {
        (Parameter::Vector(t), Parameter::Vector(s)) => {
            measure::check_lambda(lambda)?;
            if t.len() != s.len() {
                return Err(Error::argument("parameters differ in dimension"));
            }
            Ok(Parameter::Vector(t.iter().zip(s).map(|(a, b)| a + lambda * (b - a)).collect()))
        }
        (Parameter::Measure(t), Parameter::Measure(s)) => Ok(Parameter::Measure(t.contract_towards(s, lambda)?)),
        _ => Err(Error::argument("cannot contract parameters of different kinds")),
    }
}

pub fn parameter_distance(a: &Parameter, b: &Parameter) -> Result<f64> {
    match (a, b) {
        (Parameter::Vector(x), Parameter::Vector(y)) => {
            if x.len() != y.len() {
                return Err(Error::argument("parameters differ in dimension"));
            }
            Ok(x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        }
        (Parameter::Measure(x), Parameter::Measure(y)) => {
            let (_, xn) = x.decompose()?;
            let (_, yn) = y.decompose()?;
            xn.wasserstein1(&yn)
        }
        _ => Err(Error::argument("cannot compare parameters of different kinds")),
    }
}

/// `n` equispaced points covering `[lo, hi]`, endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn registry_models_load() {
        for id in ModelFamily::REGISTRY {
            let m = ModelFamily::from_id(id).unwrap();
            m.validate(&m.default_true_parameter()).unwrap();
        }
        assert!(ModelFamily::from_id("cauchy").is_err());
    }

    #[test]
    fn parameter_strings_round_trip() {
        let v: Parameter = "0.5, -1.25".parse().unwrap();
        assert_eq!(v, Parameter::Vector(vec![0.5, -1.25]));
        let m: Parameter = "1:0.7,-1:0.3".parse().unwrap();
        assert_eq!(m.to_string(), "-1:0.3,1:0.7");
        assert_eq!(m.to_string().parse::<Parameter>().unwrap(), m);
        assert!("".parse::<Parameter>().is_err());
        assert!("a:b".parse::<Parameter>().is_err());
    }

    #[test]
    fn contraction_examples() {
        let got = contraction(&Parameter::Vector(vec![0.0, 0.0]), &Parameter::Vector(vec![1.0, 2.0]), 0.25).unwrap();
        assert_eq!(got, Parameter::Vector(vec![0.25, 0.5]));
        // theta* carries weight lambda
        let star = Parameter::Vector(vec![1.0, 2.0]);
        assert_eq!(contraction(&star, &star, 0.3).unwrap(), star);
        assert!(contraction(&star, &star, 1.5).is_err());
        assert!(contraction(&star, &MixingMeasure::dirac(0.0).into(), 0.5).is_err());
    }

    #[test]
    fn psi_integral_examples() {
        let q = QuadratureRule::standard(0.0, 1.0).unwrap();
        // f == 1 on [0, 1]: exponential kernel is not constant, so use a custom flat family.
        let flat = ModelFamily::Parametric(
            ParametricFamily::new(
                "flat",
                vec![(-1.0, 1.0)],
                std::sync::Arc::new(|_, _| 1.0),
                std::sync::Arc::new(|_, rng| rng.uniform()),
                vec![0.0],
                (0.0, 1.0),
            )
            .unwrap(),
        );
        let theta = Parameter::Vector(vec![0.0]);
        assert_relative_eq!(flat.psi_integral(&PhiContrast::identity(), &theta, &q).unwrap(), 0.5, max_relative = 1e-13);
        assert_relative_eq!(flat.psi_integral(&PhiContrast::inv_1p_sq(), &theta, &q).unwrap(), 0.25, max_relative = 1e-13);

        let mix = ModelFamily::from_id("gaussian_mixture").unwrap();
        let q = mix.quadrature_rule().unwrap();
        let pi = mix.psi_integral(&PhiContrast::log(), &mix.default_true_parameter(), &q).unwrap();
        assert!((pi - 1.0).abs() < 1e-6);
    }

    #[test]
    fn population_contrast_log_uniform_is_zero() {
        let flat = ModelFamily::Parametric(
            ParametricFamily::new(
                "uniform",
                vec![(-1.0, 1.0)],
                std::sync::Arc::new(|_, _| 1.0),
                std::sync::Arc::new(|_, rng| rng.uniform()),
                vec![0.0],
                (0.0, 1.0),
            )
            .unwrap(),
        );
        let q = QuadratureRule::standard(0.0, 1.0).unwrap();
        let t = Parameter::Vector(vec![0.0]);
        let v = flat.population_contrast(&PhiContrast::log(), &t, &t, &q).unwrap();
        assert!(v.finite().unwrap().abs() < 1e-13);
    }

    #[test]
    fn population_contrast_kl_identity() {
        let model = ModelFamily::from_id("gaussian_location").unwrap();
        let q = model.quadrature_rule().unwrap();
        let log = PhiContrast::log();
        let star = Parameter::Vector(vec![0.0]);
        let at_star = model.population_contrast(&log, &star, &star, &q).unwrap().to_f64();
        let at_one = model.population_contrast(&log, &Parameter::Vector(vec![1.0]), &star, &q).unwrap().to_f64();
        // -KL(N(0,1) | N(1,1)) = -1/2
        assert!((at_one - at_star + 0.5).abs() < 1e-4);
        // -M*(theta*) is the Shannon entropy 0.5 log(2 pi e)
        let entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((at_star + entropy).abs() < 1e-8);
    }

    #[test]
    fn population_contrast_quadratic_at_truth() {
        let model = ModelFamily::from_id("gaussian_mixture").unwrap();
        let q = model.quadrature_rule().unwrap();
        let star = model.default_true_parameter();
        let got = model.population_contrast(&PhiContrast::identity(), &star, &star, &q).unwrap().to_f64();
        let norm_sq = q.integrate(|x| model.density_unchecked(&star, x).powi(2));
        assert_relative_eq!(got, 0.5 * norm_sq + 1.0, max_relative = 1e-10);
    }

    #[test]
    fn null_measure_has_sentinel_contrast() {
        let model = ModelFamily::from_id("gaussian_mixture").unwrap();
        let q = model.quadrature_rule().unwrap();
        let star = model.default_true_parameter();
        let null = Parameter::Measure(MixingMeasure::null());
        let v = model.population_contrast(&PhiContrast::log(), &null, &star, &q).unwrap();
        assert_eq!(v, ExtendedReal::NegInfinity);
    }

    #[test]
    fn identifiability_probe() {
        // distinct coarse-grid parameters give L1-separated densities
        for id in ModelFamily::REGISTRY {
            let model = ModelFamily::from_id(id).unwrap();
            let q = model.quadrature_rule().unwrap();
            let params: Vec<Parameter> = match &model {
                ModelFamily::Parametric(_) => linspace(-3.0, 3.0, 7).into_iter().map(|t| Parameter::Vector(vec![t])).collect(),
                ModelFamily::Mixture(k) => {
                    let (lo, hi) = k.z_domain();
                    linspace(lo, hi, 7).into_iter().map(|z| MixingMeasure::dirac(z).into()).collect()
                }
            };
            for (i, a) in params.iter().enumerate() {
                for b in &params[i + 1..] {
                    let l1 = q.integrate(|x| (model.density_unchecked(a, x) - model.density_unchecked(b, x)).abs());
                    assert!(l1 > 1e-4, "{id}: {a} vs {b} gives {l1}");
                }
            }
        }
    }

    #[test]
    fn distances() {
        let a = Parameter::Vector(vec![0.0, 0.0]);
        let b = Parameter::Vector(vec![3.0, 4.0]);
        assert_eq!(parameter_distance(&a, &b).unwrap(), 5.0);
        let sub = Parameter::Measure(MixingMeasure::new(vec![1.0], vec![0.5]).unwrap());
        let d = Parameter::Measure(MixingMeasure::dirac(1.0));
        assert_eq!(parameter_distance(&sub, &d).unwrap(), 0.0);
    }
}
