use serde::Serialize;

use crate::contrast::{log_grid, PhiContrast};
use crate::error::Result;

/// Grid of the closed-form suite: 20 log-spaced points in `[1e-2, 1e2]`.
pub const IDENTITY_GRID: (f64, f64, usize) = (1e-2, 1e2, 20);
pub const CLOSED_FORM_TOL: f64 = 1e-12;
pub const QUADRATURE_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub checks: Vec<IdentityCheck>,
    pub pass: bool,
}

fn check(name: &str, tolerance: f64, errors: impl IntoIterator<Item = Result<f64>>) -> Result<IdentityCheck> {
    let mut max_error: f64 = 0.0;
    for e in errors {
        let e = e?;
        max_error = if e.is_nan() { f64::INFINITY } else { max_error.max(e) };
    }
    Ok(IdentityCheck { name: name.to_string(), max_error, tolerance, pass: max_error <= tolerance })
}

/// Closed-form identities of the built-in contrasts on a 20 x 20 log grid:
/// the bounded family's `theta` and gap formulas, `psi` of the log and
/// quadratic families, closed-form `psi` against quadrature, nonpositivity
/// of the gap, and linearity of `theta` in `phi`.
pub fn run_identity_suite() -> Result<IdentityReport> {
    let (lo, hi, count) = IDENTITY_GRID;
    let grid = log_grid(lo, hi, count);
    let pairs: Vec<(f64, f64)> = grid.iter().flat_map(|&u| grid.iter().map(move |&v| (u, v))).collect();
    let bounded = PhiContrast::inv_1p_sq();
    let log = PhiContrast::log();
    let quad = PhiContrast::identity();
    let families = [
        PhiContrast::log(),
        PhiContrast::identity(),
        PhiContrast::inv_1p_sq(),
        PhiContrast::inv_sq_1p(),
    ];

    let mut checks = vec![
        check(
            "inv_1p_sq theta = -(u + v^2) / (1 + v)^2",
            CLOSED_FORM_TOL,
            pairs.iter().map(|&(u, v)| {
                let reference = -(u + v * v) / ((1.0 + v) * (1.0 + v));
                Ok((bounded.theta(u, v)? - reference).abs())
            }),
        )?,
        check(
            "inv_1p_sq gap = -(v - u)^2 / ((1 + u)(1 + v)^2)",
            CLOSED_FORM_TOL,
            pairs.iter().map(|&(u, v)| {
                let reference = -(v - u) * (v - u) / ((1.0 + u) * (1.0 + v) * (1.0 + v));
                Ok((bounded.theta_gap(u, v)? - reference).abs())
            }),
        )?,
        check("log psi(u) = u", CLOSED_FORM_TOL, grid.iter().map(|&u| Ok((log.psi(u)? - u).abs())))?,
        check(
            "identity psi(u) = u^2 / 2",
            CLOSED_FORM_TOL,
            grid.iter().map(|&u| Ok((quad.psi(u)? - 0.5 * u * u).abs())),
        )?,
    ];
    for c in families.iter().filter(|c| c.has_closed_form_psi()) {
        checks.push(check(
            &format!("{} theta: closed-form psi = quadrature psi (relative)", c.name()),
            QUADRATURE_REL_TOL,
            pairs.iter().map(|&(u, v)| {
                let closed = c.theta(u, v)?;
                let by_quadrature = u * c.phi(v) - c.psi_by_quadrature(v)?;
                Ok((closed - by_quadrature).abs() / closed.abs().max(1.0))
            }),
        )?);
    }
    for c in &families {
        checks.push(check(
            &format!("{} gap <= 0", c.name()),
            CLOSED_FORM_TOL,
            pairs.iter().map(|&(u, v)| Ok(c.theta_gap(u, v)?.max(0.0))),
        )?);
    }
    let (alpha, beta) = (0.7, -1.3);
    let combined = PhiContrast::linear_combination(alpha, &log, beta, &bounded);
    checks.push(check(
        "theta linear in phi",
        1e-10,
        pairs.iter().map(|&(u, v)| {
            let expected = alpha * log.theta(u, v)? + beta * bounded.theta(u, v)?;
            Ok((combined.theta(u, v)? - expected).abs() / expected.abs().max(1.0))
        }),
    )?);
    let pass = checks.iter().all(|c| c.pass);
    Ok(IdentityReport { checks, pass })
}
