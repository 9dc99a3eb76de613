use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::rng::Rng;

use super::kernel::{normal_pdf, GAUSSIAN_MARGIN};

pub type DensityFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type ParamSampler = Arc<dyn Fn(&[f64], &mut Rng) -> f64 + Send + Sync>;

/// Parametric family `(P_theta)` indexed by a compact box in `R^d`.
#[derive(Clone)]
pub struct ParametricFamily {
    name: String,
    theta_box: Vec<(f64, f64)>,
    density: DensityFn,
    sampler: ParamSampler,
    true_theta: Vec<f64>,
    x_domain: (f64, f64),
}

impl fmt::Debug for ParametricFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricFamily")
            .field("name", &self.name)
            .field("theta_box", &self.theta_box)
            .field("true_theta", &self.true_theta)
            .field("x_domain", &self.x_domain)
            .finish()
    }
}

impl ParametricFamily {
    pub fn new(
        name: impl Into<String>,
        theta_box: Vec<(f64, f64)>,
        density: DensityFn,
        sampler: ParamSampler,
        true_theta: Vec<f64>,
        x_domain: (f64, f64),
    ) -> Result<Self> {
        if theta_box.is_empty() || theta_box.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::argument("parameter box must have positive extent in every dimension"));
        }
        if true_theta.len() != theta_box.len()
            || true_theta.iter().zip(&theta_box).any(|(t, &(lo, hi))| !(*t > lo && *t < hi))
        {
            return Err(Error::argument("true parameter must lie strictly inside the box"));
        }
        if !(x_domain.0 < x_domain.1) {
            return Err(Error::argument("observation domain must be a nonempty interval"));
        }
        Ok(Self { name: name.into(), theta_box, density, sampler, true_theta, x_domain })
    }

    /// Gaussian location family `N(theta, 1)`, `theta in [-3, 3]`, `theta* = 0`.
    pub fn gaussian_location() -> Result<Self> {
        let theta_box = vec![(-3.0, 3.0)];
        let x_domain = (-3.0 - GAUSSIAN_MARGIN, 3.0 + GAUSSIAN_MARGIN);
        let (lo, hi) = x_domain;
        Self::new(
            "gaussian_location",
            theta_box,
            Arc::new(|theta, x| normal_pdf(x - theta[0])),
            Arc::new(move |theta, rng| loop {
                let x = theta[0] + rng.standard_normal();
                if x >= lo && x <= hi {
                    break x;
                }
            }),
            vec![0.0],
            x_domain,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.theta_box.len()
    }

    pub fn theta_box(&self) -> &[(f64, f64)] {
        &self.theta_box
    }

    pub fn true_theta(&self) -> &[f64] {
        &self.true_theta
    }

    pub fn x_domain(&self) -> (f64, f64) {
        self.x_domain
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(&self.theta_box).all(|(t, &(lo, hi))| *t >= lo && *t <= hi)
    }

    pub fn density(&self, theta: &[f64], x: f64) -> f64 {
        (self.density)(theta, x)
    }

    pub fn sample_one(&self, theta: &[f64], rng: &mut Rng) -> f64 {
        (self.sampler)(theta, rng)
    }

    /// Largest `|int f_theta dQ - 1|` over `thetas`.
    pub fn normalization_error(&self, q_rule: &QuadratureRule, thetas: &[Vec<f64>]) -> f64 {
        thetas
            .iter()
            .map(|t| (q_rule.integrate(|x| self.density(t, x)) - 1.0).abs())
            .fold(0.0, f64::max)
    }
}
