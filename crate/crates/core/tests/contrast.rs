use std::sync::Arc;

use approx::assert_relative_eq;
use mestim_core::contrast::log_grid;
use mestim_core::{ExtendedReal, PhiContrast};
use proptest::prelude::*;

fn families() -> Vec<PhiContrast> {
    vec![PhiContrast::log(), PhiContrast::identity(), PhiContrast::inv_1p_sq(), PhiContrast::inv_sq_1p()]
}

/// Midpoint rule with `steps` cells on `[a, b]`.
fn midpoint(f: impl Fn(f64) -> f64, a: f64, b: f64, steps: usize) -> f64 {
    let h = (b - a) / steps as f64;
    (0..steps).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[test]
fn psi_of_log_and_quadratic_families() {
    assert_eq!(PhiContrast::log().psi(2.0).unwrap(), 2.0);
    assert_eq!(PhiContrast::identity().psi(3.0).unwrap(), 4.5);
}

#[test]
fn psi_of_bounded_family_matches_brute_force_integral() {
    let oracle = midpoint(|w| 2.0 * w / (1.0 + w).powi(3), 0.0, 1.0, 200_000);
    assert!((oracle - 0.25).abs() < 1e-9);
    let c = PhiContrast::inv_1p_sq();
    assert_relative_eq!(c.psi(1.0).unwrap(), oracle, epsilon = 1e-9);
    assert_relative_eq!(c.psi_by_quadrature(1.0).unwrap(), oracle, epsilon = 1e-9);
}

#[test]
fn theta_examples() {
    assert_relative_eq!(PhiContrast::inv_1p_sq().theta(2.0, 3.0).unwrap(), -0.6875, epsilon = 1e-15);
    assert_relative_eq!(PhiContrast::identity().theta(1.0, 1.0).unwrap(), 0.5, epsilon = 1e-15);
    assert_relative_eq!(PhiContrast::log().theta(1.0, 1.0).unwrap(), 1.0f64.ln() - 1.0, epsilon = 1e-15);
}

#[test]
fn theta_gap_examples() {
    assert_relative_eq!(PhiContrast::inv_1p_sq().theta_gap(1.0, 2.0).unwrap(), -1.0 / 18.0, epsilon = 1e-15);
    assert_relative_eq!(PhiContrast::identity().theta_gap(1.0, 3.0).unwrap(), -2.0, epsilon = 1e-14);
    for c in families() {
        assert_eq!(c.theta_gap(0.7, 0.7).unwrap(), 0.0, "{}", c.name());
    }
}

#[test]
fn nonpositive_arguments_are_domain_errors() {
    for c in families() {
        assert!(c.psi(0.0).is_err());
        assert!(c.theta(-1.0, 1.0).is_err());
        assert!(c.theta(1.0, 0.0).is_err());
    }
}

#[test]
fn concavity_condition_examples() {
    let grid = [0.5, 1.0, 2.0];
    let report = PhiContrast::log().check_concavity_condition(&grid).unwrap();
    assert!(report.pass);
    // 1/v + v * (-1/v^2) = 0, cross-checked by finite differences of phi'
    let log = PhiContrast::log();
    for &v in &grid {
        let h = 1e-5 * v;
        let second = (log.phi_prime(v + h) - log.phi_prime(v - h)) / (2.0 * h);
        assert!((log.phi_prime(v) + v * second).abs() < 1e-6);
    }
    assert!(PhiContrast::identity().check_concavity_condition(&[1.0]).unwrap().pass);
    let convex = PhiContrast::custom("square", Arc::new(|u| u * u), Arc::new(|u| 2.0 * u), None, false);
    assert!(!convex.check_concavity_condition(&[1.0]).unwrap().pass);
    assert!(PhiContrast::log().check_concavity_condition(&[]).is_err());
}

#[test]
fn m_value_examples() {
    let log = PhiContrast::log();
    assert_eq!(log.m_value(1.0, 1.0, 1.0).unwrap(), ExtendedReal::Finite(0.0));
    assert_eq!(log.m_value(0.0, 0.5, 1.0).unwrap(), ExtendedReal::NegInfinity);
    let m = PhiContrast::identity().m_value(0.5, 0.3, 0.9).unwrap().to_f64();
    assert_relative_eq!(m, 1.1, epsilon = 1e-15);
    assert!(log.m_value(-0.1, 1.0, 1.0).is_err());
}

#[test]
fn closed_form_and_quadrature_psi_agree_on_log_grid() {
    let grid = log_grid(1e-2, 1e2, 20);
    for c in families().into_iter().filter(|c| c.has_closed_form_psi()) {
        for &u in &grid {
            for &v in &grid {
                let closed = c.theta(u, v).unwrap();
                let quad = u * c.phi(v) - c.psi_by_quadrature(v).unwrap();
                assert!((closed - quad).abs() <= 1e-8 * closed.abs().max(1.0), "{} at ({u}, {v})", c.name());
            }
        }
    }
}

proptest! {
    #[test]
    fn phi_prime_matches_finite_differences(log_u in -2.0f64..2.0) {
        let u = 10f64.powf(log_u);
        for c in families() {
            let h = 1e-6 * u;
            let fd = (c.phi(u + h) - c.phi(u - h)) / (2.0 * h);
            prop_assert!((fd - c.phi_prime(u)).abs() <= 1e-6 * c.phi_prime(u).abs().max(1.0), "{}", c.name());
        }
    }

    #[test]
    fn gap_is_nonpositive(log_u in -2.0f64..2.0, log_v in -2.0f64..2.0) {
        let (u, v) = (10f64.powf(log_u), 10f64.powf(log_v));
        for c in families() {
            prop_assert!(c.theta_gap(u, v).unwrap() <= 1e-12, "{}", c.name());
            prop_assert!(c.theta_gap(u, u).unwrap().abs() <= 1e-12);
        }
    }

    #[test]
    fn bounded_family_closed_forms(log_u in -2.0f64..2.0, log_v in -2.0f64..2.0) {
        let (u, v) = (10f64.powf(log_u), 10f64.powf(log_v));
        let c = PhiContrast::inv_1p_sq();
        let theta = -(u + v * v) / ((1.0 + v) * (1.0 + v));
        let gap = -(v - u) * (v - u) / ((1.0 + u) * (1.0 + v) * (1.0 + v));
        prop_assert!((c.theta(u, v).unwrap() - theta).abs() <= 1e-12);
        prop_assert!((c.theta_gap(u, v).unwrap() - gap).abs() <= 1e-12);
    }

    #[test]
    fn theta_is_linear_in_phi(
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        log_u in -2.0f64..2.0,
        log_v in -2.0f64..2.0,
        pick in 0usize..4,
    ) {
        let (u, v) = (10f64.powf(log_u), 10f64.powf(log_v));
        let fams = families();
        let (first, second) = (&fams[pick], &fams[(pick + 1) % 4]);
        let combined = PhiContrast::linear_combination(alpha, first, beta, second);
        let expected = alpha * first.theta(u, v).unwrap() + beta * second.theta(u, v).unwrap();
        prop_assert!((combined.theta(u, v).unwrap() - expected).abs() <= 1e-10 * expected.abs().max(1.0));
    }
}
