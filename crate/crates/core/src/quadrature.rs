//! Quadrature rules on compact intervals.
//!
//! Fixed rules ([`QuadratureRule`]) realize the reference measure on the
//! observation space; the adaptive Gauss-Kronrod integrator backs the
//! Phi-transform when no closed form is available.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Nodes per unit length of the default composite Gauss-Legendre rule.
pub const DEFAULT_NODES_PER_UNIT: usize = 64;

/// A fixed quadrature rule `sum_i w_i g(x_i)` approximating `int_a^b g(x) dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    domain: (f64, f64),
    degree: usize,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>, domain: (f64, f64), degree: usize) -> Result<Self> {
        let (a, b) = domain;
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::argument(format!("invalid quadrature domain [{a}, {b}]")));
        }
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::argument("nodes and weights must be nonempty and aligned"));
        }
        if weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::argument("quadrature weights must be positive"));
        }
        if nodes.windows(2).any(|p| !(p[0] < p[1])) || nodes[0] < a || nodes[nodes.len() - 1] > b {
            return Err(Error::argument("nodes must be strictly increasing inside the domain"));
        }
        Ok(Self { nodes, weights, domain, degree })
    }

    /// `n`-point Gauss-Legendre rule on `[a, b]`, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::argument("Gauss-Legendre rule needs at least one node"));
        }
        if !(a < b) {
            return Err(Error::argument(format!("invalid quadrature domain [{a}, {b}]")));
        }
        let (ref_nodes, ref_weights) = legendre_reference(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes = ref_nodes.iter().map(|t| mid + half * t).collect();
        let weights = ref_weights.iter().map(|w| half * w).collect();
        Self::new(nodes, weights, (a, b), 2 * n - 1)
    }

    /// Composite Gauss-Legendre: `[a, b]` is split into `ceil(b - a)` equal
    /// panels, each carrying a `nodes_per_unit`-point rule.
    pub fn composite_gauss_legendre(a: f64, b: f64, nodes_per_unit: usize) -> Result<Self> {
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::argument(format!("invalid quadrature domain [{a}, {b}]")));
        }
        if nodes_per_unit == 0 {
            return Err(Error::argument("nodes_per_unit must be positive"));
        }
        let panels = ((b - a).ceil() as usize).max(1);
        let width = (b - a) / panels as f64;
        let (ref_nodes, ref_weights) = legendre_reference(nodes_per_unit);
        let mut nodes = Vec::with_capacity(panels * nodes_per_unit);
        let mut weights = Vec::with_capacity(panels * nodes_per_unit);
        for p in 0..panels {
            let lo = a + p as f64 * width;
            let mid = lo + 0.5 * width;
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + 0.5 * width * t);
                weights.push(0.5 * width * w);
            }
        }
        Self::new(nodes, weights, (a, b), 2 * nodes_per_unit - 1)
    }

    /// Default rule on `[a, b]`.
    pub fn standard(a: f64, b: f64) -> Result<Self> {
        Self::composite_gauss_legendre(a, b, DEFAULT_NODES_PER_UNIT)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Highest polynomial degree integrated exactly on each panel.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Integrates pre-evaluated values aligned with the nodes.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.weights.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
fn legendre_reference(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_with_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let d = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub abs_error: f64,
    pub subdivisions: usize,
}

fn gauss_kronrod_15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for j in 0..7 {
        let dx = half * KRONROD_NODES[j];
        let s = f(mid - dx) + f(mid + dx);
        kronrod += KRONROD_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive 7/15-point Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// The segment with the largest error estimate is bisected until the summed
/// estimate drops below `abs_tol` or `max_subdivisions` is exhausted, in which
/// case a [`Error::Numeric`] carrying the achieved error is returned.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_subdivisions: usize,
) -> Result<Integral> {
    if a == b {
        return Ok(Integral { value: 0.0, abs_error: 0.0, subdivisions: 0 });
    }
    if !(a < b) {
        return Err(Error::argument(format!("invalid integration interval [{a}, {b}]")));
    }
    let (value, error) = gauss_kronrod_15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total_value = value;
    let mut total_error = error;
    let mut subdivisions = 0;
    while total_error > abs_tol {
        if subdivisions >= max_subdivisions {
            return Err(Error::Numeric {
                message: format!("adaptive quadrature on [{a}, {b}] hit {max_subdivisions} subdivisions"),
                achieved: total_error,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        let (lv, le) = gauss_kronrod_15(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod_15(&f, mid, worst.b);
        total_value += lv + rv - worst.value;
        total_error += le + re - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Segment { a: mid, b: worst.b, value: rv, error: re });
        subdivisions += 1;
        if !total_value.is_finite() {
            return Err(Error::Numeric {
                message: "integrand produced a non-finite value".into(),
                achieved: f64::INFINITY,
            });
        }
    }
    // Re-sum to shed the drift accumulated by incremental updates.
    let value = heap.iter().map(|s| s.value).sum();
    let abs_error = heap.iter().map(|s| s.error).sum();
    Ok(Integral { value, abs_error, subdivisions })
}
