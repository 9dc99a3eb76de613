//! Benchmark fixtures shared by the criterion targets.

use mestim_core::models::linspace;
use mestim_core::{ModelFamily, QuadratureRule, Rng};

/// A model, its quadrature rule and a seeded sample from its default truth.
pub struct Fixture {
    pub model: ModelFamily,
    pub q: QuadratureRule,
    pub sample: Vec<f64>,
}

impl Fixture {
    pub fn new(model_id: &str, n: usize, seed: u64) -> Self {
        let model = ModelFamily::from_id(model_id).expect("registered model");
        let q = model.quadrature_rule().expect("quadrature rule");
        let sample = model.sample(&model.default_true_parameter(), n, &mut Rng::new(seed)).expect("sample");
        Self { model, q, sample }
    }

    /// Equally spaced latent grid over the mixing domain of a mixture model.
    pub fn support_grid(&self, size: usize) -> Vec<f64> {
        match &self.model {
            ModelFamily::Mixture(k) => {
                let (lo, hi) = k.z_domain();
                linspace(lo, hi, size)
            }
            ModelFamily::Parametric(_) => panic!("support grid of a parametric model"),
        }
    }
}
