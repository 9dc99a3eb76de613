use serde::Serialize;

use crate::contrast::PhiKind;
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::models::{linspace, MixingMeasure, ModelFamily, Parameter};
use crate::rng::Rng;

use super::{lindsay_derivative, EmpiricalContrast, FitResult};

/// Bracket on `sup M_n - M_n(theta_hat)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCertificate {
    /// Largest improvement over `theta_hat` among the probes, clamped at zero.
    pub lower_bound: f64,
    /// `max_z D(z)` over the fit's support grid; present for mixtures under
    /// the log family.
    pub upper_bound: Option<f64>,
}

/// Brackets the optimization gap of `fit` using `probes` as witnesses.
pub fn certify_gap(ec: &EmpiricalContrast<'_>, fit: &FitResult, probes: &[Parameter]) -> Result<GapCertificate> {
    if probes.is_empty() {
        return Err(Error::argument("gap certification needs at least one probe"));
    }
    let reference = ec.evaluate(&fit.theta_hat)?;
    let mut lower: f64 = 0.0;
    for probe in probes {
        let value = ec.evaluate(probe)?;
        let diff = match (value, reference) {
            (ExtendedReal::NegInfinity, _) => continue,
            (ExtendedReal::Finite(_), ExtendedReal::NegInfinity) => f64::INFINITY,
            (ExtendedReal::Finite(a), ExtendedReal::Finite(b)) => a - b,
        };
        lower = lower.max(diff);
    }
    let upper_bound = match (&fit.theta_hat, &fit.support_grid) {
        (Parameter::Measure(theta), Some(grid)) if ec.contrast().kind() == PhiKind::Log => {
            let d = lindsay_derivative(ec, theta, grid)?;
            Some(d.into_iter().fold(0.0, f64::max))
        }
        _ => None,
    };
    Ok(GapCertificate { lower_bound: lower, upper_bound })
}

/// Grid probes plus `random` random probes inside the parameter space.
///
/// Parametric boxes get an 11-point-per-axis tensor grid; mixtures get the
/// Dirac at each support atom of the fit (or 11 equispaced atoms) and random
/// measures on that grid.
pub fn default_probes(model: &ModelFamily, fit: &FitResult, random: usize, rng: &mut Rng) -> Vec<Parameter> {
    let mut probes = vec![fit.theta_hat.clone()];
    match model {
        ModelFamily::Parametric(p) => {
            let axes: Vec<Vec<f64>> = p.theta_box().iter().map(|&(lo, hi)| linspace(lo, hi, 11)).collect();
            let mut index = vec![0usize; axes.len()];
            'grid: loop {
                probes.push(Parameter::Vector(index.iter().zip(&axes).map(|(&i, a)| a[i]).collect()));
                for d in (0..index.len()).rev() {
                    index[d] += 1;
                    if index[d] < axes[d].len() {
                        continue 'grid;
                    }
                    index[d] = 0;
                }
                break;
            }
            for _ in 0..random {
                let theta = p.theta_box().iter().map(|&(lo, hi)| lo + (hi - lo) * rng.uniform()).collect();
                probes.push(Parameter::Vector(theta));
            }
        }
        ModelFamily::Mixture(k) => {
            let (lo, hi) = k.z_domain();
            let grid = fit.support_grid.clone().unwrap_or_else(|| linspace(lo, hi, 11));
            probes.extend(grid.iter().map(|&z| Parameter::Measure(MixingMeasure::dirac(z))));
            for _ in 0..random {
                let raw: Vec<f64> = grid.iter().map(|_| -rng.uniform().max(f64::MIN_POSITIVE).ln()).collect();
                let total: f64 = raw.iter().sum();
                let weights = raw.into_iter().map(|w| w / total).collect();
                if let Ok(m) = MixingMeasure::new(grid.clone(), weights) {
                    probes.push(Parameter::Measure(m));
                }
            }
        }
    }
    probes
}
