use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the total mass of a sub-probability measure.
pub const MASS_TOL: f64 = 1e-12;
/// Atoms closer than this are merged when supports are combined.
pub const ATOM_MERGE_TOL: f64 = 1e-9;

/// Finitely supported sub-probability measure on a compact interval.
///
/// Atoms are strictly increasing; weights are nonnegative and sum to at most
/// one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixingMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl MixingMeasure {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::argument("atoms and weights must have equal length"));
        }
        if atoms.iter().any(|z| !z.is_finite()) {
            return Err(Error::argument("atoms must be finite"));
        }
        if atoms.windows(2).any(|p| !(p[0] < p[1])) {
            return Err(Error::argument("atoms must be strictly increasing"));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::argument("weights must be finite and nonnegative"));
        }
        let mass: f64 = weights.iter().sum();
        if mass > 1.0 + MASS_TOL {
            return Err(Error::argument(format!("total mass {mass} exceeds 1")));
        }
        Ok(Self { atoms, weights })
    }

    /// Builds a measure from unsorted `(atom, weight)` pairs, merging nearby atoms.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (atoms, weights) = merge_sorted(sorted);
        Self::new(atoms, weights)
    }

    pub fn dirac(z: f64) -> Self {
        Self { atoms: vec![z], weights: vec![1.0] }
    }

    /// The null measure, whose mixture density vanishes identically.
    pub fn null() -> Self {
        Self { atoms: Vec::new(), weights: Vec::new() }
    }

    /// Uniform weights over a support grid.
    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let g = atoms.len();
        if g == 0 {
            return Err(Error::argument("uniform measure needs at least one atom"));
        }
        Self::new(atoms, vec![1.0 / g as f64; g])
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= MASS_TOL
    }

    pub fn is_null(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    /// `alpha * self`.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::argument(format!("scale must be nonnegative, got {alpha}")));
        }
        Self::new(self.atoms.clone(), self.weights.iter().map(|w| alpha * w).collect())
    }

    /// Writes a nonzero measure as `alpha * probability`.
    pub fn decompose(&self) -> Result<(f64, MixingMeasure)> {
        let alpha = self.mass();
        if alpha <= 0.0 {
            return Err(Error::argument("the null measure has no normalized part"));
        }
        let weights = self.weights.iter().map(|w| w / alpha).collect();
        Ok((alpha, MixingMeasure { atoms: self.atoms.clone(), weights }))
    }

    /// Drops atoms with zero weight.
    pub fn pruned(&self, threshold: f64) -> MixingMeasure {
        let (atoms, weights) = self.iter().filter(|&(_, w)| w > threshold).unzip();
        MixingMeasure { atoms, weights }
    }

    /// Every atom lies in `[lo, hi]`.
    pub fn supported_in(&self, (lo, hi): (f64, f64)) -> bool {
        self.atoms.iter().all(|&z| z >= lo && z <= hi)
    }

    /// `lambda * target + (1 - lambda) * self` on the merged support.
    ///
    /// Evaluated as `w + lambda (w* - w)` so that a measure equal to the
    /// target is returned bit-for-bit.
    pub fn contract_towards(&self, target: &MixingMeasure, lambda: f64) -> Result<MixingMeasure> {
        check_lambda(lambda)?;
        let mut merged: Vec<(f64, f64, f64)> = Vec::with_capacity(self.len() + target.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < target.len() {
            let take_self = j >= target.len() || (i < self.len() && self.atoms[i] <= target.atoms[j]);
            let (z, ws, wt) = if take_self {
                let out = (self.atoms[i], self.weights[i], 0.0);
                i += 1;
                out
            } else {
                let out = (target.atoms[j], 0.0, target.weights[j]);
                j += 1;
                out
            };
            match merged.last_mut() {
                Some(last) if (z - last.0).abs() < ATOM_MERGE_TOL => {
                    last.1 += ws;
                    last.2 += wt;
                }
                _ => merged.push((z, ws, wt)),
            }
        }
        let atoms = merged.iter().map(|m| m.0).collect();
        let weights = merged
            .iter()
            .map(|&(_, ws, wt)| (ws + lambda * (wt - ws)).max(0.0))
            .collect();
        MixingMeasure::new(atoms, weights)
    }

    /// Wasserstein-1 distance between probability measures on the line,
    /// `int |F_mu(t) - F_nu(t)| dt` over the merged atom set.
    pub fn wasserstein1(&self, other: &MixingMeasure) -> Result<f64> {
        if !self.is_probability() || !other.is_probability() {
            return Err(Error::argument(
                "Wasserstein-1 needs probability measures; normalize first",
            ));
        }
        // Both CDFs are accumulated separately so the result is exactly symmetric.
        let (mut i, mut j) = (0, 0);
        let (mut cdf_self, mut cdf_other) = (0.0f64, 0.0f64);
        let mut prev: Option<f64> = None;
        let mut total = 0.0;
        while i < self.len() || j < other.len() {
            let z = match (self.atoms.get(i), other.atoms.get(j)) {
                (Some(&a), Some(&b)) => a.min(b),
                (Some(&a), None) => a,
                (None, Some(&b)) => b,
                (None, None) => unreachable!(),
            };
            if let Some(p) = prev {
                total += (cdf_self - cdf_other).abs() * (z - p);
            }
            while i < self.len() && self.atoms[i] == z {
                cdf_self += self.weights[i];
                i += 1;
            }
            while j < other.len() && other.atoms[j] == z {
                cdf_other += other.weights[j];
                j += 1;
            }
            prev = Some(z);
        }
        Ok(total)
    }
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("contraction coefficient must lie in (0, 1), got {lambda}")))
    }
}

fn merge_sorted(sorted: Vec<(f64, f64)>) -> (Vec<f64>, Vec<f64>) {
    let mut atoms: Vec<f64> = Vec::with_capacity(sorted.len());
    let mut weights: Vec<f64> = Vec::with_capacity(sorted.len());
    for (z, w) in sorted {
        match atoms.last() {
            Some(&last) if (z - last).abs() < ATOM_MERGE_TOL => {
                *weights.last_mut().unwrap() += w;
            }
            _ => {
                atoms.push(z);
                weights.push(w);
            }
        }
    }
    (atoms, weights)
}
