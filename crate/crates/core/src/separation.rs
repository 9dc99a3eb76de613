//! Numerical checks of the separation hypothesis and the inequalities used
//! to establish it for mixtures.
//!
//! The hypothesis asks, for every `theta != theta*`, that
//! `P*(m_theta - m_{a*(theta)}) < 0` and that the supremum of
//! `(m - m_{a*})^+` over a neighbourhood of `theta` be `P*`-integrable. Both
//! are probed by Monte Carlo under `P*`; the neighbourhood supremum is taken
//! over a finite net of a metric ball.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::PhiContrast;
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::models::{linspace, MixingMeasure, ModelFamily, Parameter};
use crate::quadrature::QuadratureRule;
use crate::rng::Rng;

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.576;
pub const DEFAULT_LAMBDA: f64 = 0.5;
pub const DEFAULT_NET_SIZE: usize = 32;
pub const DEFAULT_RADIUS: f64 = 0.1;
/// Ceiling on `q_0.999 / mean` for the integrability proxy.
pub const TAIL_RATIO_CEILING: f64 = 50.0;
pub const TAIL_QUANTILE: f64 = 0.999;
/// Parameters closer than this to `theta*` count as `theta*`.
pub const SAME_PARAMETER_TOL: f64 = 1e-9;

/// Monte Carlo estimate of `P*(m_theta - m_{a*(theta)})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_mc: usize,
    pub ci_upper_99: f64,
}

impl GapEstimate {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 && mean.is_finite() {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error, n_mc: n, ci_upper_99: mean + Z_99 * std_error }
    }
}

/// The map `a*` of the separation hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "lambda")]
pub enum AStar {
    /// `a*(theta) = theta*`.
    Constant,
    /// `a*(theta) = lambda theta* + (1 - lambda) theta`.
    Contraction(f64),
    /// `a*(theta) = theta`; never separates.
    Identity,
}

impl AStar {
    pub fn apply(&self, model: &ModelFamily, theta: &Parameter, theta_star: &Parameter) -> Result<Parameter> {
        match *self {
            AStar::Constant => Ok(theta_star.clone()),
            AStar::Contraction(lambda) => model.contraction(theta, theta_star, lambda),
            AStar::Identity => Ok(theta.clone()),
        }
    }

    pub fn parse(id: &str, lambda: f64) -> Result<Self> {
        match id {
            "constant" => Ok(AStar::Constant),
            "contraction" => {
                if !(lambda > 0.0 && lambda < 1.0) {
                    return Err(Error::argument(format!("lambda must lie in (0, 1), got {lambda}")));
                }
                Ok(AStar::Contraction(lambda))
            }
            "identity" => Ok(AStar::Identity),
            other => Err(Error::argument(format!(
                "unknown a* '{other}' (expected constant, contraction or identity)"
            ))),
        }
    }
}

/// `m_theta(x)` with the parameter-level terms precomputed.
struct PointContrast<'a> {
    contrast: &'a PhiContrast,
    model: &'a ModelFamily,
    theta: Parameter,
    psi_integral: f64,
    mass: f64,
}

impl<'a> PointContrast<'a> {
    fn new(contrast: &'a PhiContrast, model: &'a ModelFamily, theta: Parameter, q: &QuadratureRule) -> Result<Self> {
        let psi_integral = model.psi_integral(contrast, &theta, q)?;
        let mass = model.total_mass(&theta).min(1.0);
        Ok(Self { contrast, model, theta, psi_integral, mass })
    }

    fn at(&self, x: f64) -> Result<ExtendedReal> {
        self.contrast
            .m_value(self.model.density_unchecked(&self.theta, x), self.psi_integral, self.mass)
    }
}

/// `m_theta(x) - m_{a*(theta)}(x)` at each observation; `-inf` where only
/// `m_theta` is infinite.
fn contrast_differences(theta: &PointContrast<'_>, a_star: &PointContrast<'_>, xs: &[f64]) -> Result<Vec<f64>> {
    xs.iter()
        .map(|&x| {
            let ma = match a_star.at(x)? {
                ExtendedReal::Finite(v) => v,
                ExtendedReal::NegInfinity => {
                    return Err(Error::Verification(format!(
                        "m is -inf at a*(theta) = {} for x = {x}",
                        a_star.theta
                    )))
                }
            };
            Ok(theta.at(x)?.to_f64() - ma)
        })
        .collect()
}

/// Monte Carlo estimate of `P*(m_theta - m_{a*(theta)})` from `n_mc` draws of `P*`.
///
/// Requires `theta` to differ from `theta*`; see [`estimate_gap_forced`].
#[allow(clippy::too_many_arguments)]
pub fn estimate_gap(
    contrast: &PhiContrast,
    model: &ModelFamily,
    theta: &Parameter,
    a_star_of_theta: &Parameter,
    theta_star: &Parameter,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<GapEstimate> {
    if model.distance(theta, theta_star)? <= SAME_PARAMETER_TOL {
        return Err(Error::argument("gap estimation needs theta != theta*"));
    }
    estimate_gap_forced(contrast, model, theta, a_star_of_theta, theta_star, n_mc, rng)
}

/// [`estimate_gap`] without the `theta != theta*` precondition.
#[allow(clippy::too_many_arguments)]
pub fn estimate_gap_forced(
    contrast: &PhiContrast,
    model: &ModelFamily,
    theta: &Parameter,
    a_star_of_theta: &Parameter,
    theta_star: &Parameter,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<GapEstimate> {
    if n_mc == 0 {
        return Err(Error::argument("n_mc must be at least 1"));
    }
    let q = model.quadrature_rule()?;
    let xs = model.sample(theta_star, n_mc, rng)?;
    let m_theta = PointContrast::new(contrast, model, theta.clone(), &q)?;
    if theta == a_star_of_theta {
        // the integrand vanishes identically
        return Ok(GapEstimate::from_values(&vec![0.0; n_mc]));
    }
    let m_a = PointContrast::new(contrast, model, a_star_of_theta.clone(), &q)?;
    Ok(GapEstimate::from_values(&contrast_differences(&m_theta, &m_a, &xs)?))
}

fn mixture_measures<'p>(
    model: &ModelFamily,
    theta: &'p Parameter,
    theta_star: &'p Parameter,
) -> Result<(&'p MixingMeasure, &'p MixingMeasure)> {
    if !model.is_mixture() {
        return Err(Error::argument("this check applies to mixture models"));
    }
    model.validate(theta)?;
    model.validate(theta_star)?;
    match (theta.as_measure(), theta_star.as_measure()) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::argument("mixture checks need mixing measures")),
    }
}

/// `min_x [m_{a*(theta)}(x) - m_theta(x) - log(1 - lambda)]` over `sample`
/// for the log family and the contraction `a*`. Nonnegative up to rounding
/// because `f_{a*(theta)} >= (1 - lambda) f_theta` pointwise.
pub fn check_log_lower_bound(
    model: &ModelFamily,
    theta: &Parameter,
    theta_star: &Parameter,
    lambda: f64,
    sample: &[f64],
) -> Result<f64> {
    mixture_measures(model, theta, theta_star)?;
    let a_star = model.contraction(theta, theta_star, lambda)?;
    let log = PhiContrast::log();
    let q = model.quadrature_rule()?;
    let m_theta = PointContrast::new(&log, model, theta.clone(), &q)?;
    let m_a = PointContrast::new(&log, model, a_star, &q)?;
    let floor = (1.0 - lambda).ln();
    let mut margin = f64::INFINITY;
    for &x in sample {
        let diff = match (m_a.at(x)?, m_theta.at(x)?) {
            (_, ExtendedReal::NegInfinity) => f64::INFINITY,
            (ExtendedReal::NegInfinity, _) => f64::NEG_INFINITY,
            (ExtendedReal::Finite(a), ExtendedReal::Finite(t)) => a - t,
        };
        margin = margin.min(diff - floor);
    }
    Ok(margin)
}

/// Which side of the Jensen inequality carries the strict sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JensenBranch {
    /// `mass(theta) < 1`, so the right-hand side is already positive.
    SubProbability,
    /// `mass(theta) = 1`, so strictness must come from the left-hand side.
    FullMass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JensenCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub branch: JensenBranch,
}

/// Jensen's inequality behind the contraction argument for mixtures.
///
/// With `g(u) = u log(lambda u + 1 - lambda)` and `h(u) = u g(1/u)`,
/// compares `lhs = int g(f* / f_theta) f_theta dQ` with
/// `rhs = h(mass(theta))`; `slack = lhs - rhs >= 0`.
pub fn check_jensen_bound(
    model: &ModelFamily,
    theta: &Parameter,
    theta_star: &Parameter,
    lambda: f64,
    q_rule: &QuadratureRule,
) -> Result<JensenCheck> {
    let (measure, _) = mixture_measures(model, theta, theta_star)?;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::argument(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let mass = measure.mass();
    if !(mass > 0.0) {
        return Err(Error::argument("Jensen check needs a measure of positive mass"));
    }
    let g = |u: f64| u * (lambda * u + 1.0 - lambda).ln();
    let mut lhs = 0.0;
    for (&x, &w) in q_rule.nodes().iter().zip(q_rule.weights()) {
        let f = model.density_unchecked(theta, x);
        let f_star = model.density_unchecked(theta_star, x);
        lhs += w * if f > 0.0 {
            g(f_star / f) * f
        } else if f_star > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
    }
    let rhs = mass * g(1.0 / mass);
    let branch = if (1.0 - mass).abs() <= crate::models::MASS_TOL {
        JensenBranch::FullMass
    } else {
        JensenBranch::SubProbability
    };
    Ok(JensenCheck { lhs, rhs, slack: lhs - rhs, branch })
}

/// Per-parameter outcome of [`check_a2_over_grid`].
#[derive(Debug, Clone, Serialize)]
pub struct A2Record {
    pub theta: Parameter,
    pub a_star_theta: Parameter,
    pub gap: GapEstimate,
    pub gap_negative: bool,
    /// Monte Carlo mean of `sup_V (m - m_{a*})^+`.
    pub sup_mean: f64,
    /// 0.999 quantile of the positive values of the supremum.
    pub sup_quantile: f64,
    /// `sup_quantile` over the mean of the positive values; zero when the
    /// supremum vanishes on every draw.
    pub tail_ratio: f64,
    pub integrable: bool,
    pub pass: bool,
    /// Set when the check could not be carried out.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct A2Report {
    pub contrast: String,
    pub model: String,
    pub theta_star: Parameter,
    pub a_star: AStar,
    pub radius: f64,
    pub net_size: usize,
    pub n_mc: usize,
    pub tail_ratio_ceiling: f64,
    pub records: Vec<A2Record>,
    pub pass: bool,
}

/// Finite net of the metric ball of `radius` around `theta`: equispaced
/// shifts for one-dimensional boxes, uniform draws in the ball otherwise,
/// and common shifts of every atom for mixing measures (each shift `s`
/// moves a probability measure by exactly `|s|` in W1). Points are clipped
/// to the parameter space, which never increases their distance.
pub fn neighbourhood_net(
    model: &ModelFamily,
    theta: &Parameter,
    radius: f64,
    net_size: usize,
    rng: &mut Rng,
) -> Result<Vec<Parameter>> {
    if net_size == 0 || !(radius >= 0.0) {
        return Err(Error::argument("net needs at least one point and a nonnegative radius"));
    }
    model.validate(theta)?;
    match (model, theta) {
        (ModelFamily::Parametric(p), Parameter::Vector(t)) => {
            let clip = |v: Vec<f64>| -> Parameter {
                Parameter::Vector(v.iter().zip(p.theta_box()).map(|(x, &(lo, hi))| x.clamp(lo, hi)).collect())
            };
            if t.len() == 1 {
                let shifts = if net_size == 1 { vec![0.0] } else { linspace(-radius, radius, net_size) };
                return Ok(shifts.into_iter().map(|s| clip(vec![t[0] + s])).collect());
            }
            Ok((0..net_size)
                .map(|_| {
                    let dir: Vec<f64> = t.iter().map(|_| rng.standard_normal()).collect();
                    let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    let r = radius * rng.uniform().powf(1.0 / t.len() as f64);
                    clip(t.iter().zip(&dir).map(|(x, d)| x + r * d / norm).collect())
                })
                .collect())
        }
        (ModelFamily::Mixture(k), Parameter::Measure(m)) => {
            let (lo, hi) = k.z_domain();
            let shifts = if net_size == 1 { vec![0.0] } else { linspace(-radius, radius, net_size) };
            shifts
                .into_iter()
                .map(|s| {
                    let pairs: Vec<(f64, f64)> = m.iter().map(|(z, w)| ((z + s).clamp(lo, hi), w)).collect();
                    Ok(Parameter::Measure(MixingMeasure::from_pairs(&pairs)?))
                })
                .collect()
        }
        _ => unreachable!("validated above"),
    }
}

/// Empirical `q`-quantile (the `ceil(q n)`-th order statistic).
fn quantile(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = ((q * values.len() as f64).ceil() as usize).clamp(1, values.len());
    values[k - 1]
}

/// Checks the separation hypothesis at every parameter of `theta_grid`.
///
/// Grid points run in parallel, each with an independent generator derived
/// from one draw of `rng`, so the report is a deterministic function of the
/// inputs and the state of `rng`. Failures of individual points are
/// recorded rather than raised.
#[allow(clippy::too_many_arguments)]
pub fn check_a2_over_grid(
    contrast: &PhiContrast,
    model: &ModelFamily,
    theta_star: &Parameter,
    a_star: AStar,
    theta_grid: &[Parameter],
    radius: f64,
    net_size: usize,
    n_mc: usize,
    rng: &mut Rng,
) -> Result<A2Report> {
    if theta_grid.is_empty() {
        return Err(Error::argument("theta grid is empty"));
    }
    if n_mc == 0 {
        return Err(Error::argument("n_mc must be at least 1"));
    }
    model.validate(theta_star)?;
    for theta in theta_grid {
        if model.distance(theta, theta_star)? <= radius {
            return Err(Error::argument(format!("grid point {theta} lies within {radius} of theta*")));
        }
    }
    let q = model.quadrature_rule()?;
    let master = rng.next_u64();
    let records: Vec<A2Record> = theta_grid
        .par_iter()
        .enumerate()
        .map(|(i, theta)| {
            let mut local = Rng::derive(master, &[i as u64]);
            audit_point(contrast, model, theta_star, a_star, theta, radius, net_size, n_mc, &q, &mut local)
                .unwrap_or_else(|e| A2Record {
                    theta: theta.clone(),
                    a_star_theta: theta.clone(),
                    gap: GapEstimate { mean: f64::NAN, std_error: f64::NAN, n_mc: 0, ci_upper_99: f64::NAN },
                    gap_negative: false,
                    sup_mean: f64::NAN,
                    sup_quantile: f64::NAN,
                    tail_ratio: f64::NAN,
                    integrable: false,
                    pass: false,
                    error: Some(e.to_string()),
                })
        })
        .collect();
    let pass = records.iter().all(|r| r.pass);
    Ok(A2Report {
        contrast: contrast.name().to_string(),
        model: model.name().to_string(),
        theta_star: theta_star.clone(),
        a_star,
        radius,
        net_size,
        n_mc,
        tail_ratio_ceiling: TAIL_RATIO_CEILING,
        records,
        pass,
    })
}

#[allow(clippy::too_many_arguments)]
fn audit_point(
    contrast: &PhiContrast,
    model: &ModelFamily,
    theta_star: &Parameter,
    a_star: AStar,
    theta: &Parameter,
    radius: f64,
    net_size: usize,
    n_mc: usize,
    q: &QuadratureRule,
    rng: &mut Rng,
) -> Result<A2Record> {
    let a_theta = a_star.apply(model, theta, theta_star)?;
    let xs = model.sample(theta_star, n_mc, rng)?;
    let m_theta = PointContrast::new(contrast, model, theta.clone(), q)?;
    let gap = if *theta == a_theta {
        GapEstimate::from_values(&vec![0.0; n_mc])
    } else {
        let m_a = PointContrast::new(contrast, model, a_theta.clone(), q)?;
        GapEstimate::from_values(&contrast_differences(&m_theta, &m_a, &xs)?)
    };
    let gap_negative = gap.ci_upper_99 < 0.0;

    let mut sup = vec![0.0f64; n_mc];
    for point in neighbourhood_net(model, theta, radius, net_size, rng)? {
        let a_point = a_star.apply(model, &point, theta_star)?;
        if point == a_point {
            continue;
        }
        let m_p = PointContrast::new(contrast, model, point, q)?;
        let m_a = PointContrast::new(contrast, model, a_point, q)?;
        for (s, d) in sup.iter_mut().zip(contrast_differences(&m_p, &m_a, &xs)?) {
            *s = s.max(d);
        }
    }
    let sup_mean = sup.iter().sum::<f64>() / n_mc as f64;
    let mut positive: Vec<f64> = sup.into_iter().filter(|&s| s > 0.0).collect();
    let (sup_quantile, tail_ratio) = if positive.is_empty() {
        (0.0, 0.0)
    } else {
        let positive_mean = positive.iter().sum::<f64>() / positive.len() as f64;
        let q = quantile(&mut positive, TAIL_QUANTILE);
        (q, q / positive_mean)
    };
    let integrable = sup_mean.is_finite() && tail_ratio <= TAIL_RATIO_CEILING;
    Ok(A2Record {
        theta: theta.clone(),
        a_star_theta: a_theta,
        gap,
        gap_negative,
        sup_mean,
        sup_quantile,
        tail_ratio,
        integrable,
        pass: gap_negative && integrable,
        error: None,
    })
}

/// Default audit grid: 16 equispaced points of a one-dimensional box, or 12
/// Diracs equispaced over the latent interval. Points within `radius` of
/// `theta*` are dropped.
pub fn default_theta_grid(model: &ModelFamily, theta_star: &Parameter, radius: f64) -> Result<Vec<Parameter>> {
    let grid: Vec<Parameter> = match model {
        ModelFamily::Parametric(p) => {
            if p.dim() != 1 {
                return Err(Error::argument("default audit grid needs a one-dimensional box"));
            }
            let (lo, hi) = p.theta_box()[0];
            linspace(lo, hi, 16).into_iter().map(|t| Parameter::Vector(vec![t])).collect()
        }
        ModelFamily::Mixture(k) => {
            let (lo, hi) = k.z_domain();
            linspace(lo, hi, 12).into_iter().map(|z| Parameter::Measure(MixingMeasure::dirac(z))).collect()
        }
    };
    let mut kept = Vec::with_capacity(grid.len());
    for theta in grid {
        if model.distance(&theta, theta_star)? > radius {
            kept.push(theta);
        }
    }
    Ok(kept)
}
