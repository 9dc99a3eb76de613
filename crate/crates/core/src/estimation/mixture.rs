use crate::contrast::{log_grid, PhiContrast, PhiKind};
use crate::error::{Error, Result};
use crate::extended::ExtendedReal;
use crate::models::{MixingMeasure, MixtureKernel, ModelFamily, Parameter};

use super::{EmpiricalContrast, FitResult, StopReason};

/// Precomputed kernel matrices for a mixture fit on a fixed latent grid.
///
/// The objective is `M_n(w) = (1/n) sum_i phi(f_i) - sum_q u_q psi(g_q) + sum_j w_j`,
/// with `f_i = sum_j K_ij w_j` at the observations and `g_q` the same at the
/// quadrature nodes. For the log family `psi` is the identity, so the middle
/// term collapses to `sum_j w_j c_j` with `c_j = int k(., z_j) dQ`.
pub struct MixtureProblem<'a> {
    contrast: &'a PhiContrast,
    atoms: Vec<f64>,
    n: usize,
    g: usize,
    /// `n x g`, row-major.
    data_kernel: Vec<f64>,
    kernel_mass: Vec<f64>,
    /// `nq x g`, row-major; empty for the log family.
    quad_kernel: Vec<f64>,
    quad_weights: Vec<f64>,
    is_log: bool,
}

/// Densities induced by a weight vector.
#[derive(Debug, Clone)]
struct State {
    weights: Vec<f64>,
    f_data: Vec<f64>,
    f_quad: Vec<f64>,
    /// `sum_j w_j c_j`.
    linear_quad: f64,
    mass: f64,
}

impl<'a> MixtureProblem<'a> {
    pub fn new(ec: &EmpiricalContrast<'a>, support_grid: &[f64]) -> Result<Self> {
        let kernel = mixture_kernel(ec.model())?;
        if support_grid.is_empty() {
            return Err(Error::argument("support grid must hold at least one atom"));
        }
        let (zlo, zhi) = kernel.z_domain();
        if support_grid.windows(2).any(|p| !(p[0] < p[1]))
            || support_grid.iter().any(|&z| z < zlo || z > zhi)
        {
            return Err(Error::argument("support grid must be strictly increasing inside the latent domain"));
        }
        let contrast = ec.contrast();
        let is_log = contrast.kind() == PhiKind::Log;
        let g = support_grid.len();
        let n = ec.n();
        let mut data_kernel = Vec::with_capacity(n * g);
        for &x in ec.sample() {
            data_kernel.extend(support_grid.iter().map(|&z| kernel.evaluate(x, z)));
        }
        let q = ec.q_rule();
        let kernel_mass = support_grid
            .iter()
            .map(|&z| q.integrate(|x| kernel.evaluate(x, z)))
            .collect();
        let mut quad_kernel = Vec::new();
        if !is_log {
            quad_kernel.reserve(q.len() * g);
            for &x in q.nodes() {
                quad_kernel.extend(support_grid.iter().map(|&z| kernel.evaluate(x, z)));
            }
        }
        Ok(Self {
            contrast,
            atoms: support_grid.to_vec(),
            n,
            g,
            data_kernel,
            kernel_mass,
            quad_kernel,
            quad_weights: q.weights().to_vec(),
            is_log,
        })
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    fn state(&self, weights: Vec<f64>) -> State {
        let f_data = mat_vec(&self.data_kernel, self.g, &weights);
        let f_quad = if self.is_log { Vec::new() } else { mat_vec(&self.quad_kernel, self.g, &weights) };
        let linear_quad = dot(&self.kernel_mass, &weights);
        let mass = weights.iter().sum();
        State { weights, f_data, f_quad, linear_quad, mass }
    }

    fn objective(&self, s: &State) -> Result<ExtendedReal> {
        self.objective_parts(&s.f_data, &s.f_quad, s.linear_quad, s.mass)
    }

    fn objective_parts(&self, f_data: &[f64], f_quad: &[f64], linear_quad: f64, mass: f64) -> Result<ExtendedReal> {
        let mut fit_term = 0.0;
        for &f in f_data {
            let v = self.contrast.phi(f);
            if v == f64::NEG_INFINITY {
                return Ok(ExtendedReal::NegInfinity);
            }
            fit_term += v;
        }
        fit_term /= self.n as f64;
        let psi_term = if self.is_log {
            linear_quad
        } else {
            let mut acc = 0.0;
            for (&gq, &u) in f_quad.iter().zip(&self.quad_weights) {
                acc += u * self.contrast.psi_nonnegative(gq)?;
            }
            acc
        };
        Ok(ExtendedReal::Finite(fit_term - psi_term + mass))
    }

    /// Directional derivative of `M_n` at `w` along `delta_{z_j} - w`, for every `j`.
    fn derivatives(&self, s: &State) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.g];
        if self.is_log {
            // Lindsay: (1/n) sum_i K_ij / f_i - 1
            for (i, &f) in s.f_data.iter().enumerate() {
                if !(f > 0.0) {
                    return Err(Error::Numeric {
                        message: format!("mixture density vanished at observation {i}"),
                        achieved: f,
                    });
                }
                let r = 1.0 / f;
                let row = &self.data_kernel[i * self.g..(i + 1) * self.g];
                for (o, k) in out.iter_mut().zip(row) {
                    *o += k * r;
                }
            }
            let n = self.n as f64;
            out.iter_mut().for_each(|o| *o = *o / n - 1.0);
            return Ok(out);
        }
        let n = self.n as f64;
        let mut offset = 0.0;
        for (i, &f) in s.f_data.iter().enumerate() {
            let d = self.contrast.phi_prime(f) / n;
            offset += d * f;
            let row = &self.data_kernel[i * self.g..(i + 1) * self.g];
            for (o, k) in out.iter_mut().zip(row) {
                *o += d * k;
            }
        }
        for (q, (&gq, &u)) in s.f_quad.iter().zip(&self.quad_weights).enumerate() {
            let d = u * self.contrast.psi_prime(gq);
            offset -= d * gq;
            let row = &self.quad_kernel[q * self.g..(q + 1) * self.g];
            for (o, k) in out.iter_mut().zip(row) {
                *o -= d * k;
            }
        }
        let mass_term = 1.0 - s.mass;
        out.iter_mut().for_each(|o| *o += mass_term - offset);
        Ok(out)
    }

    /// Direction from the current weights towards `target`.
    fn direction(&self, s: &State, target: Vec<f64>) -> Direction {
        let delta: Vec<(usize, f64)> = target
            .iter()
            .zip(&s.weights)
            .enumerate()
            .filter(|(_, (t, w))| t != w)
            .map(|(j, (t, w))| (j, t - w))
            .collect();
        let along = |matrix: &[f64], rows: usize| -> Vec<f64> {
            (0..rows)
                .map(|r| {
                    let row = &matrix[r * self.g..(r + 1) * self.g];
                    delta.iter().map(|&(j, d)| row[j] * d).sum()
                })
                .collect()
        };
        let df = along(&self.data_kernel, self.n);
        let dq = if self.is_log { Vec::new() } else { along(&self.quad_kernel, self.quad_weights.len()) };
        let dlin = delta.iter().map(|&(j, d)| self.kernel_mass[j] * d).sum();
        let dmass = delta.iter().map(|&(_, d)| d).sum();
        Direction { target, df, dq, dlin, dmass }
    }

    /// Objective at `w + t (target - w)`; `-inf` when a density vanishes.
    fn line_value(&self, s: &State, dir: &Direction, t: f64) -> Result<f64> {
        let mut fit_term = 0.0;
        for (&f, &d) in s.f_data.iter().zip(&dir.df) {
            let v = self.contrast.phi((f + t * d).max(0.0));
            if v == f64::NEG_INFINITY {
                return Ok(f64::NEG_INFINITY);
            }
            fit_term += v;
        }
        fit_term /= self.n as f64;
        let psi_term = if self.is_log {
            s.linear_quad + t * dir.dlin
        } else {
            let mut acc = 0.0;
            for ((&gq, &d), &u) in s.f_quad.iter().zip(&dir.dq).zip(&self.quad_weights) {
                acc += u * self.contrast.psi_nonnegative((gq + t * d).max(0.0))?;
            }
            acc
        };
        Ok(fit_term - psi_term + s.mass + t * dir.dmass)
    }

    /// Derivative of [`Self::line_value`] in `t`.
    fn line_slope(&self, s: &State, dir: &Direction, t: f64) -> f64 {
        let fit: f64 = s
            .f_data
            .iter()
            .zip(&dir.df)
            .map(|(&f, &d)| self.contrast.phi_prime((f + t * d).max(0.0)) * d)
            .sum::<f64>()
            / self.n as f64;
        let psi = if self.is_log {
            dir.dlin
        } else {
            s.f_quad
                .iter()
                .zip(&dir.dq)
                .zip(&self.quad_weights)
                .map(|((&gq, &d), &u)| u * self.contrast.psi_prime((gq + t * d).max(0.0)) * d)
                .sum()
        };
        fit - psi + dir.dmass
    }

    /// Maximizes the concave line objective on `[0, 1]` by bisection on its
    /// derivative. Returns the step and its value.
    fn line_search(&self, s: &State, dir: &Direction) -> Result<(f64, f64)> {
        if self.line_slope(s, dir, 1.0) >= 0.0 {
            return Ok((1.0, self.line_value(s, dir, 1.0)?));
        }
        let (mut lo, mut up) = (0.0, 1.0);
        for _ in 0..LINE_SEARCH_ITER {
            let mid = 0.5 * (lo + up);
            if mid <= lo || mid >= up {
                break;
            }
            if self.line_slope(s, dir, mid) > 0.0 {
                lo = mid;
            } else {
                up = mid;
            }
        }
        let t = 0.5 * (lo + up);
        Ok((t, self.line_value(s, dir, t)?))
    }

    fn step(&self, s: &mut State, dir: &Direction, t: f64) {
        if t == 1.0 {
            s.weights.copy_from_slice(&dir.target);
        } else {
            for (w, v) in s.weights.iter_mut().zip(&dir.target) {
                *w = (*w + t * (v - *w)).max(0.0);
            }
        }
        for (f, d) in s.f_data.iter_mut().zip(&dir.df) {
            *f += t * d;
        }
        for (g, d) in s.f_quad.iter_mut().zip(&dir.dq) {
            *g += t * d;
        }
        s.linear_quad += t * dir.dlin;
        s.mass += t * dir.dmass;
    }

    /// Negative Hessian of `M_n` in the weights, restricted to `support`
    /// (row-major, `|support| x |support|`). Positive semidefinite for
    /// admissible contrasts.
    fn curvature(&self, s: &State, support: &[usize]) -> Vec<f64> {
        let m = support.len();
        let mut out = vec![0.0; m * m];
        let mut accumulate = |row: &[f64], c: f64| {
            if !(c > 0.0) {
                return;
            }
            for (a, &ja) in support.iter().enumerate() {
                let ka = c * row[ja];
                for (b, &jb) in support.iter().enumerate().skip(a) {
                    out[a * m + b] += ka * row[jb];
                }
            }
        };
        let n = self.n as f64;
        for (i, &f) in s.f_data.iter().enumerate() {
            let c = -self.contrast.phi_second(f.max(f64::MIN_POSITIVE)) / n;
            accumulate(&self.data_kernel[i * self.g..(i + 1) * self.g], c);
        }
        for (q, (&gq, &u)) in s.f_quad.iter().zip(&self.quad_weights).enumerate() {
            let v = gq.max(f64::MIN_POSITIVE);
            let c = u * (self.contrast.phi_prime(v) + v * self.contrast.phi_second(v));
            accumulate(&self.quad_kernel[q * self.g..(q + 1) * self.g], c);
        }
        for a in 0..m {
            for b in 0..a {
                out[a * m + b] = out[b * m + a];
            }
        }
        out
    }

    fn finish(
        &self,
        s: &State,
        trace: Vec<f64>,
        iterations: usize,
        stop_reason: StopReason,
        derivatives: Vec<f64>,
    ) -> Result<FitResult> {
        let pairs: Vec<(f64, f64)> = self
            .atoms
            .iter()
            .zip(&s.weights)
            .filter(|&(_, &w)| w > 0.0)
            .map(|(&z, &w)| (z, w))
            .collect();
        let (atoms, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let theta_hat = MixingMeasure::new(atoms, weights)?;
        let gap_bound = derivatives.iter().copied().fold(0.0, f64::max);
        Ok(FitResult {
            theta_hat: Parameter::Measure(theta_hat),
            m_n_value: self.objective(s)?,
            gap_bound,
            trace,
            iterations,
            converged: stop_reason == StopReason::GradientCriterion,
            stop_reason,
            support_grid: Some(self.atoms.clone()),
            directional_derivatives: Some(derivatives),
        })
    }
}

fn mixture_kernel(model: &ModelFamily) -> Result<&MixtureKernel> {
    match model {
        ModelFamily::Mixture(k) => Ok(k),
        ModelFamily::Parametric(_) => Err(Error::argument("mixture fits need a mixture model")),
    }
}

fn mat_vec(matrix: &[f64], cols: usize, v: &[f64]) -> Vec<f64> {
    matrix.chunks_exact(cols).map(|row| dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Weights below this are set to zero so that products with small kernel
/// values never reach the subnormal range.
const WEIGHT_FLOOR: f64 = 1e-200;

/// One EM update `w_j <- w_j (1 + D_j)`, renormalized.
fn em_map(weights: &[f64], derivatives: &[f64]) -> Vec<f64> {
    let mut next: Vec<f64> = weights
        .iter()
        .zip(derivatives)
        .map(|(w, d)| {
            let v = w * (1.0 + d);
            if v < WEIGHT_FLOOR {
                0.0
            } else {
                v
            }
        })
        .collect();
    let total: f64 = next.iter().sum();
    next.iter_mut().for_each(|w| *w /= total);
    next
}

/// Largest number of halvings of the extrapolation length before falling
/// back to the plain EM iterate.
const SQUAREM_BACKTRACK: usize = 40;
/// Atoms heavier than this form the active support of an EM iterate.
pub const ACTIVE_WEIGHT: f64 = 1e-8;
/// Converged EM iterates satisfy `|D| <= ACTIVE_SLACK * tol` on the active support.
pub const ACTIVE_SLACK: f64 = 10.0;

/// EM for the nonparametric mixture likelihood on a fixed support grid.
///
/// Starting from uniform weights, applies the EM map
/// `w_j <- w_j (1/n) sum_i k(x_i, z_j) / f_w(x_i)` until the Lindsay
/// criterion `max_j D(z_j) <= tol` holds, with
/// `D(z) = (1/n) sum_i k(x_i, z) / f_w(x_i) - 1`.
///
/// Every two EM updates are followed by a squared extrapolation (SQUAREM)
/// and one more EM update from the extrapolated point; that candidate is
/// kept only if its log-likelihood is at least that of the plain iterate, so
/// the trace never decreases.
///
/// Convergence also requires `|D(z_j)| <= ACTIVE_SLACK * tol` on atoms
/// heavier than [`ACTIVE_WEIGHT`]. EM drains such atoms only geometrically,
/// so once `max D <= tol` each of them is emptied towards the atom of largest
/// derivative by a line-searched vertex exchange. `iterations` counts EM map
/// applications and accepted exchanges.
pub fn fit_mixture_em(ec: &EmpiricalContrast<'_>, support_grid: &[f64], tol: f64, max_iter: usize) -> Result<FitResult> {
    if ec.contrast().kind() != PhiKind::Log {
        return Err(Error::Admissibility(format!(
            "EM needs the log family, got '{}'",
            ec.contrast().name()
        )));
    }
    let problem = MixtureProblem::new(ec, support_grid)?;
    let g = problem.g;
    let mut state = problem.state(vec![1.0 / g as f64; g]);
    let mut derivatives = problem.derivatives(&state)?;
    let mut value = problem.objective(&state)?.to_f64();
    let mut trace = vec![value];
    let mut iterations = 0;

    let stop_reason = 'outer: loop {
        if max_of(&derivatives) <= tol && iterations > 0 {
            let slack = ACTIVE_SLACK * tol;
            let unbalanced: Vec<usize> =
                (0..g).filter(|&j| state.weights[j] > ACTIVE_WEIGHT && derivatives[j] < -slack).collect();
            if unbalanced.is_empty() {
                break StopReason::GradientCriterion;
            }
            if iterations >= max_iter {
                break StopReason::MaxIter;
            }
            // vertex exchanges: move the mass of each atom EM is still draining
            // to the atom with the largest derivative, with a line search
            let mut moved = false;
            for j in unbalanced {
                let (toward, _) = argmax(&derivatives);
                if toward == j || state.weights[j] <= 0.0 {
                    continue;
                }
                let mut target = state.weights.clone();
                target[toward] += target[j];
                target[j] = 0.0;
                let dir = problem.direction(&state, target);
                let (t, line_value) = problem.line_search(&state, &dir)?;
                if line_value > value {
                    problem.step(&mut state, &dir, t);
                    state = problem.state(std::mem::take(&mut state.weights));
                    derivatives = problem.derivatives(&state)?;
                    value = problem.objective(&state)?.to_f64();
                    trace.push(value);
                    iterations += 1;
                    moved = true;
                }
            }
            if moved {
                continue;
            }
        }
        let start = state.weights.clone();
        let mut plain = Vec::with_capacity(2);
        for _ in 0..2 {
            if iterations >= max_iter {
                break 'outer StopReason::MaxIter;
            }
            state = problem.state(em_map(&state.weights, &derivatives));
            derivatives = problem.derivatives(&state)?;
            value = problem.objective(&state)?.to_f64();
            trace.push(value);
            iterations += 1;
            if max_of(&derivatives) <= tol {
                continue 'outer;
            }
            plain.push(state.weights.clone());
        }
        if iterations >= max_iter {
            break StopReason::MaxIter;
        }
        let Some(candidate) = squarem_point(&start, &plain[0], &plain[1]) else { continue };
        let extrapolated = problem.state(candidate);
        let Ok(ext_derivatives) = problem.derivatives(&extrapolated) else { continue };
        let next = problem.state(em_map(&extrapolated.weights, &ext_derivatives));
        let next_value = problem.objective(&next)?.to_f64();
        if next_value >= value {
            let Ok(next_derivatives) = problem.derivatives(&next) else { continue };
            state = next;
            derivatives = next_derivatives;
            value = next_value;
            trace.push(value);
            iterations += 1;
        }
    };
    log::debug!("EM stopped after {iterations} iterations: {stop_reason:?}");
    problem.finish(&state, trace, iterations, stop_reason, derivatives)
}

/// `w0 - 2 a r + a^2 v` with `r = w1 - w0`, `v = w2 - 2 w1 + w0` and
/// `a = -|r| / |v|`, pulled back towards `a = -1` (which gives `w2`) until
/// every weight is nonnegative. `None` when no extrapolation is possible.
fn squarem_point(w0: &[f64], w1: &[f64], w2: &[f64]) -> Option<Vec<f64>> {
    let r: Vec<f64> = w1.iter().zip(w0).map(|(a, b)| a - b).collect();
    let v: Vec<f64> = w2.iter().zip(w1).zip(&r).map(|((a, b), r)| a - b - r).collect();
    let (rn, vn) = (dot(&r, &r).sqrt(), dot(&v, &v).sqrt());
    if !(vn > 0.0) || !(rn > 0.0) {
        return None;
    }
    let mut alpha = (-rn / vn).min(-1.0);
    for _ in 0..SQUAREM_BACKTRACK {
        if alpha >= -1.0 - 1e-12 {
            return None;
        }
        let point: Vec<f64> = w0
            .iter()
            .zip(&r)
            .zip(&v)
            .map(|((w, r), v)| w - 2.0 * alpha * r + alpha * alpha * v)
            .map(|w| if w.abs() < WEIGHT_FLOOR { 0.0 } else { w })
            .collect();
        if point.iter().all(|&w| w >= 0.0) {
            let total: f64 = point.iter().sum();
            return Some(point.into_iter().map(|w| w / total).collect());
        }
        alpha = 0.5 * (alpha - 1.0);
    }
    None
}

const LINE_SEARCH_ITER: usize = 200;
/// Cap on pairwise exchanges when solving the local quadratic model.
const QP_MAX_EXCHANGES: usize = 200_000;

/// A feasible direction in weight space with the induced density changes.
struct Direction {
    target: Vec<f64>,
    df: Vec<f64>,
    dq: Vec<f64>,
    dlin: f64,
    dmass: f64,
}

/// Density range probed by the admissibility check: kernel values at the
/// observations and quadrature nodes, floored at `1e-6`.
fn density_range(problem: &MixtureProblem<'_>) -> (f64, f64) {
    let values = problem.data_kernel.iter().chain(&problem.quad_kernel);
    let (lo, hi) = values.fold((f64::INFINITY, 0.0f64), |(lo, hi), &k| (lo.min(k), hi.max(k)));
    (lo.max(1e-6), hi.max(lo.max(1e-6)))
}

/// Atoms worth adding to the working support: positive local maxima of the
/// directional derivative over the grid, plus its global maximum.
fn candidate_atoms(derivatives: &[f64]) -> Vec<usize> {
    let g = derivatives.len();
    let mut out: Vec<usize> = (0..g)
        .filter(|&j| {
            let d = derivatives[j];
            d > 0.0 && (j == 0 || d >= derivatives[j - 1]) && (j + 1 == g || d >= derivatives[j + 1])
        })
        .collect();
    out.push(argmax(derivatives).0);
    out
}

/// Maximizes `d'(v - w) - (v - w)' N (v - w) / 2` over the simplex on the
/// working support by pairwise exchanges, starting from `v = w`.
fn solve_local_model(w: &[f64], d: &[f64], curvature: &[f64], tol: f64) -> Vec<f64> {
    let m = w.len();
    let mut v = w.to_vec();
    let mut grad = d.to_vec();
    for _ in 0..QP_MAX_EXCHANGES {
        let (a, ga) = argmax(&grad);
        let Some((b, gb)) = (0..m)
            .filter(|&k| v[k] > 0.0 && k != a)
            .map(|k| (k, grad[k]))
            .min_by(|x, y| x.1.total_cmp(&y.1))
        else {
            break;
        };
        let gap = ga - gb;
        if gap <= tol {
            break;
        }
        let kappa = curvature[a * m + a] + curvature[b * m + b] - 2.0 * curvature[a * m + b];
        let t = if kappa > 0.0 { (gap / kappa).min(v[b]) } else { v[b] };
        v[a] += t;
        if t >= v[b] {
            v[b] = 0.0;
        } else {
            v[b] -= t;
        }
        for (k, g) in grad.iter_mut().enumerate() {
            *g -= t * (curvature[k * m + a] - curvature[k * m + b]);
        }
    }
    v
}

/// Vertex-direction ascent with Newton steps over the simplex of weights on
/// `support_grid`.
///
/// Starts from the best single atom. Each iteration extends the active
/// support with the positive local maxima of the directional derivative,
/// maximizes the local quadratic model of `M_n` over the simplex on that
/// support, and line-searches towards the model optimum by bisection on the
/// line derivative. When that step fails to improve, a vertex exchange
/// (mass from the worst active atom to the best atom) and then a plain step
/// towards the best atom are tried. Stops once the largest directional
/// derivative is at most `tol`.
pub fn fit_mixture_fw(ec: &EmpiricalContrast<'_>, support_grid: &[f64], tol: f64, max_iter: usize) -> Result<FitResult> {
    let problem = MixtureProblem::new(ec, support_grid)?;
    let (lo, hi) = density_range(&problem);
    let report = ec.contrast().check_concavity_condition(&log_grid(lo, hi, 32))?;
    if !report.pass {
        let bad = report.violations().next().map(|p| p.v).unwrap_or(f64::NAN);
        return Err(Error::Admissibility(format!(
            "contrast '{}' fails the concavity condition at density {bad:e} within [{lo:e}, {hi:e}]",
            ec.contrast().name()
        )));
    }

    let g = problem.g;
    let mut best = (0, ExtendedReal::NegInfinity);
    for j in 0..g {
        let mut e = vec![0.0; g];
        e[j] = 1.0;
        let v = problem.objective(&problem.state(e))?;
        if v > best.1 {
            best = (j, v);
        }
    }
    let mut weights = vec![0.0; g];
    weights[best.0] = 1.0;
    let mut state = problem.state(weights);
    let mut trace = vec![problem.objective(&state)?.to_f64()];
    let mut iterations = 0;

    let stop_reason = loop {
        let derivatives = problem.derivatives(&state)?;
        let (toward, toward_gap) = argmax(&derivatives);
        if toward_gap <= tol {
            break StopReason::GradientCriterion;
        }
        if iterations >= max_iter {
            break StopReason::MaxIter;
        }

        let mut targets = Vec::with_capacity(3);
        let mut support: Vec<usize> = (0..g).filter(|&j| state.weights[j] > 0.0).collect();
        support.extend(candidate_atoms(&derivatives));
        support.sort_unstable();
        support.dedup();
        let curvature = problem.curvature(&state, &support);
        let w_s: Vec<f64> = support.iter().map(|&j| state.weights[j]).collect();
        let d_s: Vec<f64> = support.iter().map(|&j| derivatives[j]).collect();
        let v_s = solve_local_model(&w_s, &d_s, &curvature, 1e-3 * tol);
        let mut newton = vec![0.0; g];
        for (&j, &v) in support.iter().zip(&v_s) {
            newton[j] = v.max(0.0);
        }
        // pairwise exchanges accumulate rounding in the total mass
        let total: f64 = newton.iter().sum();
        newton.iter_mut().for_each(|v| *v /= total);
        targets.push(newton);

        let worst_active = (0..g)
            .filter(|&j| state.weights[j] > 0.0 && j != toward)
            .min_by(|&a, &b| derivatives[a].total_cmp(&derivatives[b]));
        if let Some(from) = worst_active {
            let mut exchange = state.weights.clone();
            exchange[toward] += exchange[from];
            exchange[from] = 0.0;
            targets.push(exchange);
        }
        let mut vertex = vec![0.0; g];
        vertex[toward] = 1.0;
        targets.push(vertex);

        let mut accepted = None;
        for target in targets {
            let dir = problem.direction(&state, target);
            let base = problem.line_value(&state, &dir, 0.0)?;
            let (t, value) = problem.line_search(&state, &dir)?;
            if value > base {
                accepted = Some((dir, t));
                break;
            }
        }
        let Some((dir, t)) = accepted else {
            break StopReason::ObjectiveStall;
        };
        problem.step(&mut state, &dir, t);
        // refresh the densities so rounding does not accumulate across steps
        state = problem.state(std::mem::take(&mut state.weights));
        iterations += 1;
        trace.push(problem.objective(&state)?.to_f64());
    };
    let derivatives = problem.derivatives(&state)?;
    log::debug!("vertex-direction stopped after {iterations} iterations: {stop_reason:?}");
    problem.finish(&state, trace, iterations, stop_reason, derivatives)
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc })
}

/// Directional derivatives of `M_n` at `theta` along `delta_z - theta` for
/// each `z` in `z_grid`. For the log family this is the Lindsay gradient
/// `(1/n) sum_i k(x_i, z) / f_theta(x_i) - 1`.
pub fn lindsay_derivative(ec: &EmpiricalContrast<'_>, theta: &MixingMeasure, z_grid: &[f64]) -> Result<Vec<f64>> {
    let kernel = mixture_kernel(ec.model())?;
    let contrast = ec.contrast();
    let n = ec.n() as f64;
    let f_data: Vec<f64> = ec.sample().iter().map(|&x| kernel.mixture_density_unchecked(theta, x)).collect();
    if contrast.kind() == PhiKind::Log {
        if let Some(i) = f_data.iter().position(|&f| !(f > 0.0)) {
            return Err(Error::Numeric {
                message: format!("mixture density vanished at observation {i}"),
                achieved: f_data[i],
            });
        }
        return Ok(z_grid
            .iter()
            .map(|&z| {
                ec.sample().iter().zip(&f_data).map(|(&x, f)| kernel.evaluate(x, z) / f).sum::<f64>() / n - 1.0
            })
            .collect());
    }
    let q = ec.q_rule();
    let f_quad: Vec<f64> = q.nodes().iter().map(|&x| kernel.mixture_density_unchecked(theta, x)).collect();
    let mass = theta.mass();
    Ok(z_grid
        .iter()
        .map(|&z| {
            let fit: f64 = ec
                .sample()
                .iter()
                .zip(&f_data)
                .map(|(&x, &f)| contrast.phi_prime(f) * (kernel.evaluate(x, z) - f))
                .sum::<f64>()
                / n;
            let psi: f64 = q
                .nodes()
                .iter()
                .zip(q.weights())
                .zip(&f_quad)
                .map(|((&x, &u), &gq)| u * contrast.psi_prime(gq) * (kernel.evaluate(x, z) - gq))
                .sum();
            fit - psi + (1.0 - mass)
        })
        .collect())
}
