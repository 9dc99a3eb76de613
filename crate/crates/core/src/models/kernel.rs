use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quadrature::QuadratureRule;
use crate::rng::Rng;

use super::measure::MixingMeasure;

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
pub type KernelSampler = Arc<dyn Fn(f64, &mut Rng) -> f64 + Send + Sync>;

/// Width, in standard deviations, of the margin added around the latent hull
/// to truncate the observation space of Gaussian kernels.
pub const GAUSSIAN_MARGIN: f64 = 8.0;
/// Right end of the truncated observation space of the exponential kernel.
pub const EXPONENTIAL_X_MAX: f64 = 30.0;

/// Mixture kernel `k(x, z)`, a probability density in `x` for each latent `z`.
#[derive(Clone)]
pub struct MixtureKernel {
    name: String,
    evaluate: KernelFn,
    sample_given_z: KernelSampler,
    x_domain: (f64, f64),
    z_domain: (f64, f64),
}

impl fmt::Debug for MixtureKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixtureKernel")
            .field("name", &self.name)
            .field("x_domain", &self.x_domain)
            .field("z_domain", &self.z_domain)
            .finish()
    }
}

pub(crate) fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl MixtureKernel {
    pub fn new(
        name: impl Into<String>,
        evaluate: KernelFn,
        sample_given_z: KernelSampler,
        x_domain: (f64, f64),
        z_domain: (f64, f64),
    ) -> Result<Self> {
        if !(x_domain.0 < x_domain.1) || !(z_domain.0 <= z_domain.1) {
            return Err(Error::argument("kernel domains must be nonempty intervals"));
        }
        Ok(Self { name: name.into(), evaluate, sample_given_z, x_domain, z_domain })
    }

    /// Unit-variance Gaussian location kernel `N(x; z, 1)` with the
    /// observation space truncated eight standard deviations beyond the
    /// latent hull. The tail mass cut off is below `2e-15`, so the density is
    /// left unnormalized; draws falling outside are rejected.
    pub fn gaussian(z_domain: (f64, f64)) -> Result<Self> {
        let x_domain = (z_domain.0 - GAUSSIAN_MARGIN, z_domain.1 + GAUSSIAN_MARGIN);
        let (lo, hi) = x_domain;
        Self::new(
            "gaussian",
            Arc::new(|x, z| normal_pdf(x - z)),
            Arc::new(move |z, rng| loop {
                let x = z + rng.standard_normal();
                if x >= lo && x <= hi {
                    break x;
                }
            }),
            x_domain,
            z_domain,
        )
    }

    /// Exponential kernel `z exp(-z x)` restricted to `[0, x_max]` and
    /// renormalized there; sampled by inverting the truncated CDF.
    pub fn exponential(z_domain: (f64, f64), x_max: f64) -> Result<Self> {
        if !(z_domain.0 > 0.0) {
            return Err(Error::argument("exponential kernel needs positive rates"));
        }
        Self::new(
            "exponential",
            Arc::new(move |x, z| z * (-z * x).exp() / -(-z * x_max).exp_m1()),
            Arc::new(move |z, rng| {
                let u = rng.uniform();
                let cut = -(-z * x_max).exp_m1();
                -(-u * cut).ln_1p() / z
            }),
            (0.0, x_max),
            z_domain,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x_domain(&self) -> (f64, f64) {
        self.x_domain
    }

    pub fn z_domain(&self) -> (f64, f64) {
        self.z_domain
    }

    pub fn evaluate(&self, x: f64, z: f64) -> f64 {
        (self.evaluate)(x, z)
    }

    pub fn sample_given_z(&self, z: f64, rng: &mut Rng) -> f64 {
        (self.sample_given_z)(z, rng)
    }

    pub(crate) fn check_x(&self, x: f64) -> Result<()> {
        let (lo, hi) = self.x_domain;
        if x >= lo && x <= hi {
            Ok(())
        } else {
            Err(Error::domain(format!("observation {x} outside [{lo}, {hi}]")))
        }
    }

    /// `f_theta(x) = sum_j w_j k(x, z_j)`.
    pub fn mixture_density(&self, theta: &MixingMeasure, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.mixture_density_unchecked(theta, x))
    }

    pub(crate) fn mixture_density_unchecked(&self, theta: &MixingMeasure, x: f64) -> f64 {
        theta
            .iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|(z, w)| w * self.evaluate(x, z))
            .sum()
    }

    /// `n` i.i.d. draws: pick atom `j` with probability `w_j`, then draw from `k(., z_j)`.
    pub fn sample_mixture(&self, theta_star: &MixingMeasure, n: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if !theta_star.is_probability() {
            return Err(Error::argument(format!(
                "cannot sample a measure of mass {}",
                theta_star.mass()
            )));
        }
        if n == 0 {
            return Err(Error::argument("sample size must be at least 1"));
        }
        let atoms = theta_star.atoms();
        let weights = theta_star.weights();
        Ok((0..n)
            .map(|_| {
                let j = rng.categorical(weights);
                self.sample_given_z(atoms[j], rng)
            })
            .collect())
    }

    /// Largest `|int k(x, z) dQ(x) - 1|` over `z_grid`.
    pub fn normalization_error(&self, q_rule: &QuadratureRule, z_grid: &[f64]) -> f64 {
        z_grid
            .iter()
            .map(|&z| (q_rule.integrate(|x| self.evaluate(x, z)) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Largest `|k(x, z + h) - k(x, z)|` over the probe points; shrinks with
    /// `h` when `k(x, .)` is continuous.
    pub fn continuity_probe(&self, xs: &[f64], z_grid: &[f64], h: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for &x in xs {
            for &z in z_grid {
                worst = worst.max((self.evaluate(x, z + h) - self.evaluate(x, z)).abs());
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn kernels_are_normalized() {
        let gauss = MixtureKernel::gaussian((-3.0, 3.0)).unwrap();
        let q = QuadratureRule::standard(gauss.x_domain().0, gauss.x_domain().1).unwrap();
        assert!(gauss.normalization_error(&q, &grid(-3.0, 3.0, 32)) < 1e-12);

        let expo = MixtureKernel::exponential((0.2, 5.0), EXPONENTIAL_X_MAX).unwrap();
        let q = QuadratureRule::standard(0.0, EXPONENTIAL_X_MAX).unwrap();
        assert!(expo.normalization_error(&q, &grid(0.2, 5.0, 32)) < 1e-12);
    }

    #[test]
    fn kernels_are_continuous_in_z() {
        let gauss = MixtureKernel::gaussian((-3.0, 3.0)).unwrap();
        let xs = grid(-5.0, 5.0, 11);
        let zs = grid(-3.0, 3.0, 13);
        let coarse = gauss.continuity_probe(&xs, &zs, 1e-3);
        let fine = gauss.continuity_probe(&xs, &zs, 1e-6);
        assert!(coarse < 1e-3 && fine < coarse * 1e-2);
    }

    #[test]
    fn mixture_density_examples() {
        let gauss = MixtureKernel::gaussian((-3.0, 3.0)).unwrap();
        let dirac = MixingMeasure::dirac(0.4);
        assert_eq!(gauss.mixture_density(&dirac, 1.3).unwrap(), gauss.evaluate(1.3, 0.4));
        assert_eq!(gauss.mixture_density(&MixingMeasure::null(), 0.0).unwrap(), 0.0);
        let half = MixingMeasure::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        let expected = 0.5 * normal_pdf(1.0) + 0.5 * normal_pdf(-1.0);
        assert_relative_eq!(gauss.mixture_density(&half, 1.0).unwrap(), expected, max_relative = 1e-15);
        assert_relative_eq!(expected, 0.24197072451914337, max_relative = 1e-14);
        assert!(gauss.mixture_density(&half, 20.0).is_err());
    }

    #[test]
    fn scaling_a_measure_scales_the_density() {
        let gauss = MixtureKernel::gaussian((-3.0, 3.0)).unwrap();
        let theta = MixingMeasure::new(vec![-1.0, 0.5], vec![0.25, 0.75]).unwrap();
        let sub = theta.scaled(0.6).unwrap();
        for x in [-2.0, 0.0, 1.7] {
            let a = gauss.mixture_density(&sub, x).unwrap();
            let b = 0.6 * gauss.mixture_density(&theta, x).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-15);
        }
    }

    #[test]
    fn sample_mixture_moments_and_determinism() {
        let gauss = MixtureKernel::gaussian((-3.0, 3.0)).unwrap();
        let theta = MixingMeasure::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        let n = 10_000;
        let xs = gauss.sample_mixture(&theta, n, &mut Rng::new(11)).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // variance 1 (component) + 1 (mixing)
        assert!((mean - 1.0).abs() <= 3.0 * (2.0f64 / n as f64).sqrt());
        let again = gauss.sample_mixture(&theta, n, &mut Rng::new(11)).unwrap();
        assert_eq!(xs, again);

        let dirac = gauss.sample_mixture(&MixingMeasure::dirac(0.3), 5, &mut Rng::new(2)).unwrap();
        assert_eq!(dirac.len(), 5);

        let sub = MixingMeasure::new(vec![0.0], vec![0.5]).unwrap();
        assert!(matches!(gauss.sample_mixture(&sub, 10, &mut Rng::new(1)), Err(Error::Argument(_))));
    }

    #[test]
    fn exponential_sampler_matches_truncated_mean() {
        let expo = MixtureKernel::exponential((0.2, 5.0), EXPONENTIAL_X_MAX).unwrap();
        let mut rng = Rng::new(5);
        let n = 50_000;
        let z = 0.5;
        let xs: Vec<f64> = (0..n).map(|_| expo.sample_given_z(z, &mut rng)).collect();
        assert!(xs.iter().all(|&x| (0.0..=EXPONENTIAL_X_MAX).contains(&x)));
        let q = QuadratureRule::standard(0.0, EXPONENTIAL_X_MAX).unwrap();
        let mean_oracle = q.integrate(|x| x * expo.evaluate(x, z));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean - mean_oracle).abs() < 4.0 * 2.0 / (n as f64).sqrt());
    }
}
