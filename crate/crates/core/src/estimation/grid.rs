use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::models::{linspace, ModelFamily, Parameter};

use super::{EmpiricalContrast, FitResult, StopReason, LIPSCHITZ_SAFETY, MAX_GRID_POINTS};

/// Exhaustive maximization of `M_n` on a tensor grid over the parameter box.
///
/// Points are visited in row-major order (first coordinate slowest) and ties
/// keep the first point visited. The gap bound is `L h / 2`, with `h` the
/// cell diagonal and `L` twice the steepest finite-difference slope between
/// neighbouring grid points.
pub fn fit_grid(ec: &EmpiricalContrast<'_>, resolution: &[usize]) -> Result<FitResult> {
    let family = match ec.model() {
        ModelFamily::Parametric(p) => p,
        ModelFamily::Mixture(_) => {
            return Err(Error::argument("grid search applies to parametric families"));
        }
    };
    if resolution.len() != family.dim() {
        return Err(Error::argument(format!(
            "resolution has {} entries for a {}-dimensional box",
            resolution.len(),
            family.dim()
        )));
    }
    if resolution.iter().any(|&r| r < 2) {
        return Err(Error::argument("grid resolution must be at least 2 per dimension"));
    }
    let total = resolution
        .iter()
        .try_fold(1usize, |acc, &r| acc.checked_mul(r).filter(|&t| t <= MAX_GRID_POINTS))
        .ok_or_else(|| Error::argument(format!("grid exceeds {MAX_GRID_POINTS} points")))?;

    let axes: Vec<Vec<f64>> = family
        .theta_box()
        .iter()
        .zip(resolution)
        .map(|(&(lo, hi), &r)| linspace(lo, hi, r))
        .collect();
    let steps: Vec<f64> = family
        .theta_box()
        .iter()
        .zip(resolution)
        .map(|(&(lo, hi), &r)| (hi - lo) / (r - 1) as f64)
        .collect();

    let mut values = Vec::with_capacity(total);
    let mut index = vec![0usize; axes.len()];
    for _ in 0..total {
        let theta: Vec<f64> = index.iter().zip(&axes).map(|(&i, axis)| axis[i]).collect();
        values.push(ec.evaluate(&Parameter::Vector(theta))?);
        advance(&mut index, resolution);
    }

    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }

    let slope = max_slope(&values, resolution, &steps);
    let diameter = steps.iter().map(|h| h * h).sum::<f64>().sqrt();
    let gap_bound = LIPSCHITZ_SAFETY * slope * diameter / 2.0;

    let best_index = unravel(best, resolution);
    let theta_hat: Vec<f64> = best_index.iter().zip(&axes).map(|(&i, axis)| axis[i]).collect();
    Ok(FitResult {
        theta_hat: Parameter::Vector(theta_hat),
        m_n_value: values[best],
        gap_bound,
        trace: vec![values[best].to_f64()],
        iterations: total,
        converged: true,
        stop_reason: StopReason::Exhaustive,
        support_grid: None,
        directional_derivatives: None,
    })
}

fn advance(index: &mut [usize], resolution: &[usize]) {
    for d in (0..index.len()).rev() {
        index[d] += 1;
        if index[d] < resolution[d] {
            return;
        }
        index[d] = 0;
    }
}

fn unravel(mut flat: usize, resolution: &[usize]) -> Vec<usize> {
    let mut index = vec![0; resolution.len()];
    for d in (0..resolution.len()).rev() {
        index[d] = flat % resolution[d];
        flat /= resolution[d];
    }
    index
}

fn max_slope(values: &[ExtendedReal], resolution: &[usize], steps: &[f64]) -> f64 {
    let mut strides = vec![1usize; resolution.len()];
    for d in (0..resolution.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * resolution[d + 1];
    }
    let mut slope: f64 = 0.0;
    for (k, v) in values.iter().enumerate() {
        let Some(a) = v.finite() else { continue };
        let index = unravel(k, resolution);
        for d in 0..resolution.len() {
            if index[d] + 1 < resolution[d] {
                if let Some(b) = values[k + strides[d]].finite() {
                    slope = slope.max((b - a).abs() / steps[d]);
                }
            }
        }
    }
    slope
}
