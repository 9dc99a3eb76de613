//! Phi-transform contrasts.
//!
//! A scalar function `phi` on `(0, inf)` generates the transform
//! `psi(u) = int_0^u v phi'(v) dv` and the two-argument map
//! `theta(u, v) = u phi(v) - psi(v)`. The per-observation contrast of a
//! density `f` is `phi(f(x)) - int psi(f) dQ + mass`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::quadrature::integrate_adaptive;

/// Absolute tolerance of the adaptive quadrature used for `psi`.
pub const PSI_ABS_TOL: f64 = 1e-10;
/// Subdivision cap for the adaptive quadrature used for `psi`.
pub const PSI_MAX_SUBDIVISIONS: usize = 1 << 15;
/// Relative step of the first-derivative central difference.
pub const FD_STEP_FIRST: f64 = 1e-6;
/// Relative step of the second-derivative central difference.
pub const FD_STEP_SECOND: f64 = 1e-5;
/// Tolerance of the concavity indicators.
pub const CONCAVITY_TOL: f64 = 1e-7;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Built-in contrast families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhiKind {
    /// `phi(u) = log u`, the log-likelihood.
    Log,
    /// `phi(u) = u`, the quadratic contrast.
    Identity,
    /// `phi(u) = -(1 + u^2)^-1`.
    InvSq1p,
    /// `phi(u) = -(1 + u)^-2`.
    Inv1pSq,
    Custom,
}

impl PhiKind {
    pub fn id(self) -> &'static str {
        match self {
            PhiKind::Log => "log",
            PhiKind::Identity => "identity",
            PhiKind::InvSq1p => "inv_sq_1p",
            PhiKind::Inv1pSq => "inv_1p_sq",
            PhiKind::Custom => "custom",
        }
    }
}

#[derive(Clone)]
pub struct PhiContrast {
    name: String,
    kind: PhiKind,
    phi: ScalarFn,
    phi_prime: ScalarFn,
    psi_closed_form: Option<ScalarFn>,
    bounded: bool,
}

impl fmt::Debug for PhiContrast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiContrast")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("closed_form_psi", &self.psi_closed_form.is_some())
            .field("bounded", &self.bounded)
            .finish()
    }
}

impl PhiContrast {
    pub fn log() -> Self {
        Self {
            name: "log".into(),
            kind: PhiKind::Log,
            phi: Arc::new(f64::ln),
            phi_prime: Arc::new(|u| 1.0 / u),
            psi_closed_form: Some(Arc::new(|u| u)),
            bounded: false,
        }
    }

    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            kind: PhiKind::Identity,
            phi: Arc::new(|u| u),
            phi_prime: Arc::new(|_| 1.0),
            psi_closed_form: Some(Arc::new(|u| 0.5 * u * u)),
            bounded: false,
        }
    }

    /// `phi(u) = -(1 + u)^-2`, with `psi(u) = u^2 / (1 + u)^2`.
    pub fn inv_1p_sq() -> Self {
        Self {
            name: "inv_1p_sq".into(),
            kind: PhiKind::Inv1pSq,
            phi: Arc::new(|u| -1.0 / ((1.0 + u) * (1.0 + u))),
            phi_prime: Arc::new(|u| 2.0 / (1.0 + u).powi(3)),
            psi_closed_form: Some(Arc::new(|u| {
                let r = u / (1.0 + u);
                r * r
            })),
            bounded: true,
        }
    }

    /// `phi(u) = -(1 + u^2)^-1`; `psi` is evaluated by quadrature.
    pub fn inv_sq_1p() -> Self {
        Self {
            name: "inv_sq_1p".into(),
            kind: PhiKind::InvSq1p,
            phi: Arc::new(|u| -1.0 / (1.0 + u * u)),
            phi_prime: Arc::new(|u| {
                let d = 1.0 + u * u;
                2.0 * u / (d * d)
            }),
            psi_closed_form: None,
            bounded: true,
        }
    }

    pub fn custom(
        name: impl Into<String>,
        phi: ScalarFn,
        phi_prime: ScalarFn,
        psi_closed_form: Option<ScalarFn>,
        bounded: bool,
    ) -> Self {
        Self { name: name.into(), kind: PhiKind::Custom, phi, phi_prime, psi_closed_form, bounded }
    }

    /// Looks up a built-in family by its identifier.
    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "log" => Ok(Self::log()),
            "identity" => Ok(Self::identity()),
            "inv_sq_1p" => Ok(Self::inv_sq_1p()),
            "inv_1p_sq" => Ok(Self::inv_1p_sq()),
            other => Err(Error::argument(format!("unknown contrast family '{other}'"))),
        }
    }

    /// The family `alpha * phi_1 + beta * phi_2`. `psi` stays closed-form when
    /// both parts have one, since the transform is linear in `phi`.
    pub fn linear_combination(alpha: f64, first: &PhiContrast, beta: f64, second: &PhiContrast) -> Self {
        let (p1, p2) = (first.phi.clone(), second.phi.clone());
        let (d1, d2) = (first.phi_prime.clone(), second.phi_prime.clone());
        let psi = match (&first.psi_closed_form, &second.psi_closed_form) {
            (Some(s1), Some(s2)) => {
                let (s1, s2) = (s1.clone(), s2.clone());
                Some(Arc::new(move |u| alpha * s1(u) + beta * s2(u)) as ScalarFn)
            }
            _ => None,
        };
        Self {
            name: format!("{alpha}*{}+{beta}*{}", first.name, second.name),
            kind: PhiKind::Custom,
            phi: Arc::new(move |u| alpha * p1(u) + beta * p2(u)),
            phi_prime: Arc::new(move |u| alpha * d1(u) + beta * d2(u)),
            psi_closed_form: psi,
            bounded: first.bounded && second.bounded,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> PhiKind {
        self.kind
    }

    pub fn is_bounded(&self) -> bool {
        self.bounded
    }

    pub fn has_closed_form_psi(&self) -> bool {
        self.psi_closed_form.is_some()
    }

    /// `phi(u)` for `u >= 0`; at `u = 0` this is the right limit, which is
    /// `-inf` for the log family.
    pub fn phi(&self, u: f64) -> f64 {
        (self.phi)(u)
    }

    pub fn phi_prime(&self, u: f64) -> f64 {
        (self.phi_prime)(u)
    }

    /// `phi''(u)` by a central difference of `phi'` with step `1e-5 u`.
    pub fn phi_second(&self, u: f64) -> f64 {
        let h = FD_STEP_SECOND * u;
        (self.phi_prime(u + h) - self.phi_prime(u - h)) / (2.0 * h)
    }

    /// `psi'(v) = v phi'(v)`, extended continuously to `v = 0`.
    pub fn psi_prime(&self, v: f64) -> f64 {
        let v = if v > 0.0 { v } else { f64::MIN_POSITIVE };
        v * (self.phi_prime)(v)
    }

    /// The Phi-transform `psi(u) = int_0^u v phi'(v) dv`.
    pub fn psi(&self, u: f64) -> Result<f64> {
        check_positive("psi", u)?;
        match &self.psi_closed_form {
            Some(psi) => Ok(psi(u)),
            None => self.psi_by_quadrature(u),
        }
    }

    /// `psi(u)` by adaptive quadrature regardless of any closed form.
    pub fn psi_by_quadrature(&self, u: f64) -> Result<f64> {
        check_positive("psi", u)?;
        let phi_prime = &self.phi_prime;
        integrate_adaptive(|v| v * phi_prime(v), 0.0, u, PSI_ABS_TOL, PSI_MAX_SUBDIVISIONS)
            .map(|r| r.value)
    }

    /// `psi(u)` for `u >= 0`, using `psi(0) = 0`.
    pub(crate) fn psi_nonnegative(&self, u: f64) -> Result<f64> {
        if u == 0.0 {
            Ok(0.0)
        } else {
            self.psi(u)
        }
    }

    /// `theta(u, v) = u phi(v) - psi(v)`.
    pub fn theta(&self, u: f64, v: f64) -> Result<f64> {
        check_positive("theta", u)?;
        check_positive("theta", v)?;
        Ok(u * self.phi(v) - self.psi(v)?)
    }

    /// `theta(u, v) - theta(u, u)`; nonpositive for admissible families.
    pub fn theta_gap(&self, u: f64, v: f64) -> Result<f64> {
        if u == v {
            check_positive("theta_gap", u)?;
            return Ok(0.0);
        }
        Ok(self.theta(u, v)? - self.theta(u, u)?)
    }

    /// Probes, at each grid point, that `phi` is concave, nondecreasing and
    /// that `phi'(v) + v phi''(v) >= 0` (convexity of `psi`). Second
    /// derivatives come from central differences of `phi'`.
    pub fn check_concavity_condition(&self, grid: &[f64]) -> Result<ConcavityReport> {
        if grid.is_empty() {
            return Err(Error::argument("concavity check needs a nonempty grid"));
        }
        let mut points = Vec::with_capacity(grid.len());
        for &v in grid {
            check_positive("check_concavity_condition", v)?;
            let first = self.phi_prime(v);
            let second = self.phi_second(v);
            let psi_curvature = first + v * second;
            let scale = 1.0f64.max(first.abs());
            let point = ConcavityPoint {
                v,
                phi_prime: first,
                phi_second: second,
                psi_curvature,
                concave: second <= CONCAVITY_TOL * scale,
                nondecreasing: first >= -CONCAVITY_TOL * scale,
                psi_convex: psi_curvature >= -CONCAVITY_TOL * scale,
            };
            points.push(point);
        }
        let pass = points.iter().all(ConcavityPoint::pass);
        Ok(ConcavityReport { points, pass })
    }

    /// Per-observation contrast `phi(f(x)) - int psi(f) dQ + mass`.
    ///
    /// A zero density under a family with `phi(0+) = -inf` yields the
    /// sentinel.
    pub fn m_value(&self, density_at_x: f64, psi_integral: f64, total_mass: f64) -> Result<ExtendedReal> {
        if !(density_at_x >= 0.0) {
            return Err(Error::domain(format!("density must be nonnegative, got {density_at_x}")));
        }
        if !(0.0..=1.0 + 1e-12).contains(&total_mass) {
            return Err(Error::domain(format!("total mass must lie in [0, 1], got {total_mass}")));
        }
        let phi = self.phi(density_at_x);
        if phi == f64::NEG_INFINITY {
            return Ok(ExtendedReal::NegInfinity);
        }
        Ok(ExtendedReal::Finite(phi - psi_integral + total_mass))
    }
}

fn check_positive(op: &str, u: f64) -> Result<()> {
    if u > 0.0 && u.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{op} requires a positive argument, got {u}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityPoint {
    pub v: f64,
    pub phi_prime: f64,
    pub phi_second: f64,
    /// `phi'(v) + v phi''(v)`, the second derivative of `psi`.
    pub psi_curvature: f64,
    pub concave: bool,
    pub nondecreasing: bool,
    pub psi_convex: bool,
}

impl ConcavityPoint {
    pub fn pass(&self) -> bool {
        self.concave && self.nondecreasing && self.psi_convex
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    pub points: Vec<ConcavityPoint>,
    pub pass: bool,
}

impl ConcavityReport {
    pub fn violations(&self) -> impl Iterator<Item = &ConcavityPoint> {
        self.points.iter().filter(|p| !p.pass())
    }
}

/// `count` log-spaced points spanning `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Independent midpoint-rule oracle for `int_0^u v phi'(v) dv`.
    fn brute_force_psi(phi_prime: impl Fn(f64) -> f64, u: f64) -> f64 {
        let steps = 200_000;
        let h = u / steps as f64;
        (0..steps)
            .map(|i| {
                let v = (i as f64 + 0.5) * h;
                v * phi_prime(v)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn psi_examples() {
        assert_eq!(PhiContrast::log().psi(2.0).unwrap(), 2.0);
        assert_eq!(PhiContrast::identity().psi(3.0).unwrap(), 4.5);
        let bounded = PhiContrast::inv_1p_sq();
        let oracle = brute_force_psi(|w| 2.0 / (1.0 + w).powi(3), 1.0);
        assert_relative_eq!(oracle, 0.25, max_relative = 1e-9);
        assert_relative_eq!(bounded.psi(1.0).unwrap(), oracle, max_relative = 1e-9);
        assert_relative_eq!(bounded.psi_by_quadrature(1.0).unwrap(), 0.25, max_relative = 1e-12);
    }

    #[test]
    fn psi_rejects_nonpositive() {
        for u in [0.0, -1.0, f64::NAN] {
            assert!(matches!(PhiContrast::log().psi(u), Err(Error::Domain(_))));
        }
    }

    #[test]
    fn theta_examples() {
        let bounded = PhiContrast::inv_1p_sq();
        assert_relative_eq!(bounded.theta(2.0, 3.0).unwrap(), -0.6875, max_relative = 1e-14);
        assert_relative_eq!(PhiContrast::identity().theta(1.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(PhiContrast::log().theta(1.0, 1.0).unwrap(), -1.0);
        assert!(PhiContrast::log().theta(0.0, 1.0).is_err());
    }

    #[test]
    fn theta_gap_examples() {
        let gap = PhiContrast::inv_1p_sq().theta_gap(1.0, 2.0).unwrap();
        assert_relative_eq!(gap, -1.0 / 18.0, max_relative = 1e-13);
        for c in [PhiContrast::log(), PhiContrast::identity(), PhiContrast::inv_1p_sq(), PhiContrast::inv_sq_1p()] {
            assert_eq!(c.theta_gap(0.7, 0.7).unwrap(), 0.0);
        }
        assert_relative_eq!(PhiContrast::identity().theta_gap(1.0, 3.0).unwrap(), -2.0);
    }

    #[test]
    fn concavity_examples() {
        let report = PhiContrast::log().check_concavity_condition(&[0.5, 1.0, 2.0]).unwrap();
        assert!(report.pass);
        for p in &report.points {
            // 1/v + v * (-1/v^2) = 0
            assert!(p.psi_curvature.abs() < 1e-8, "{p:?}");
        }
        assert!(PhiContrast::identity().check_concavity_condition(&[1.0]).unwrap().pass);

        let square = PhiContrast::custom("square", Arc::new(|u| u * u), Arc::new(|u| 2.0 * u), None, false);
        let report = square.check_concavity_condition(&[1.0]).unwrap();
        assert!(!report.pass);
        assert!(!report.points[0].concave);

        assert!(PhiContrast::log().check_concavity_condition(&[]).is_err());
    }

    #[test]
    fn concavity_of_bounded_families_depends_on_range() {
        // phi'(v) + v phi''(v) = 2(1 - 2v)/(1 + v)^4 changes sign at v = 1/2.
        let c = PhiContrast::inv_1p_sq();
        assert!(c.check_concavity_condition(&[0.1, 0.3, 0.49]).unwrap().pass);
        let report = c.check_concavity_condition(&[0.1, 1.0]).unwrap();
        assert!(!report.pass);
        assert_eq!(report.violations().count(), 1);
        // phi'' > 0 near the origin for -(1 + u^2)^-1.
        assert!(!PhiContrast::inv_sq_1p().check_concavity_condition(&[0.1]).unwrap().pass);
    }

    #[test]
    fn m_value_examples() {
        let log = PhiContrast::log();
        assert_eq!(log.m_value(1.0, 1.0, 1.0).unwrap(), ExtendedReal::Finite(0.0));
        assert_eq!(log.m_value(0.0, 0.3, 0.7).unwrap(), ExtendedReal::NegInfinity);
        let id = PhiContrast::identity().m_value(0.5, 0.3, 0.9).unwrap();
        assert_relative_eq!(id.finite().unwrap(), 1.1, max_relative = 1e-15);
        assert!(matches!(log.m_value(-0.1, 1.0, 1.0), Err(Error::Domain(_))));
        // bounded families stay finite at zero density
        assert!(PhiContrast::inv_1p_sq().m_value(0.0, 0.1, 1.0).unwrap().is_finite());
    }

    #[test]
    fn from_id_round_trips() {
        for id in ["log", "identity", "inv_sq_1p", "inv_1p_sq"] {
            assert_eq!(PhiContrast::from_id(id).unwrap().kind().id(), id);
        }
        assert!(PhiContrast::from_id("cubic").is_err());
    }

    #[test]
    fn log_grid_spans_endpoints() {
        let g = log_grid(1e-3, 1e3, 7);
        assert_eq!(g.len(), 7);
        assert_relative_eq!(g[0], 1e-3, max_relative = 1e-14);
        assert_relative_eq!(g[3], 1.0, max_relative = 1e-14);
        assert_relative_eq!(g[6], 1e3, max_relative = 1e-14);
    }
}
