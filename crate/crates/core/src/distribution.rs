//! Finite-support return distributions.
//!
//! A [`CategoricalDistribution`] is the exact representation used for every
//! return law in the crate: atoms are kept sorted and strictly increasing,
//! atoms closer than [`ATOM_MERGE_TOL`] are merged, and zero-mass atoms are
//! dropped on construction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Atoms whose distance is at most this are merged into one.
pub const ATOM_MERGE_TOL: f64 = 1e-12;

/// Tolerance on total mass.
pub const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("distribution has no atoms")]
    Empty,
    #[error("atom and weight lists differ in length ({atoms} vs {weights})")]
    LengthMismatch { atoms: usize, weights: usize },
    #[error("weight {0} is negative or not finite")]
    BadWeight(f64),
    #[error("atom {0} is not finite")]
    BadAtom(f64),
    #[error("weights sum to {0}, expected 1")]
    NotNormalized(f64),
}

/// A probability distribution with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl CategoricalDistribution {
    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        Self {
            atoms: vec![x],
            weights: vec![1.0],
        }
    }

    /// Builds a distribution from arbitrary (atom, weight) pairs: sorts, merges
    /// near-equal atoms and drops zero weights. Total mass must be 1.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        for &(x, w) in &pairs {
            if !x.is_finite() {
                return Err(DistributionError::BadAtom(x));
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(DistributionError::BadWeight(w));
            }
        }
        pairs.retain(|&(_, w)| w > 0.0);
        if pairs.is_empty() {
            return Err(DistributionError::Empty);
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if (total - 1.0).abs() > MASS_TOL * (pairs.len() as f64).max(1.0) {
            return Err(DistributionError::NotNormalized(total));
        }
        Ok(Self::merge_sorted(pairs))
    }

    /// Same as [`from_pairs`](Self::from_pairs) with separate lists.
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self, DistributionError> {
        if atoms.len() != weights.len() {
            return Err(DistributionError::LengthMismatch {
                atoms: atoms.len(),
                weights: weights.len(),
            });
        }
        Self::from_pairs(atoms.into_iter().zip(weights))
    }

    fn merge_sorted(pairs: Vec<(f64, f64)>) -> Self {
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            match atoms.last() {
                Some(&last) if (x - last).abs() <= ATOM_MERGE_TOL => {
                    *weights.last_mut().unwrap() += w;
                }
                _ => {
                    atoms.push(x);
                    weights.push(w);
                }
            }
        }
        Self { atoms, weights }
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

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + Clone + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    /// Law of `r + Z`.
    pub fn shift(&self, r: f64) -> Self {
        Self {
            atoms: self.atoms.iter().map(|x| x + r).collect(),
            weights: self.weights.clone(),
        }
    }

    /// Probability mixture `Σ νᵢ ηᵢ`. Components with zero weight are skipped.
    ///
    /// The mixing weights must sum to 1 within [`MASS_TOL`] per component.
    pub fn mixture<'a, I>(components: I) -> Result<Self, DistributionError>
    where
        I: IntoIterator<Item = (f64, &'a CategoricalDistribution)>,
    {
        let mut pairs = Vec::new();
        for (nu, dist) in components {
            if !(nu.is_finite() && nu >= 0.0) {
                return Err(DistributionError::BadWeight(nu));
            }
            if nu == 0.0 {
                continue;
            }
            pairs.extend(dist.iter().map(|(x, w)| (x, nu * w)));
        }
        Self::from_pairs(pairs)
    }

    /// `P(Z ≤ x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.iter()
            .take_while(|&(a, _)| a <= x)
            .map(|(_, w)| w)
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(x, w)| w * x).sum()
    }

    /// `E[Zⁿ]`.
    pub fn raw_moment(&self, n: u32) -> f64 {
        self.iter().map(|(x, w)| w * x.powi(n as i32)).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.iter().map(|(x, w)| w * (x - m) * (x - m)).sum()
    }

    /// Smallest atom `x` with `P(Z ≤ x) ≥ α` (left-continuous inverse CDF).
    pub fn quantile(&self, alpha: f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.iter() {
            acc += w;
            // Accumulated mass can fall a few ulps short of the level.
            if acc >= alpha - 1e-12 {
                return x;
            }
        }
        *self.atoms.last().unwrap()
    }

    /// Largest atom with positive mass.
    pub fn max(&self) -> f64 {
        *self.atoms.last().expect("nonempty by construction")
    }

    /// Smallest atom with positive mass.
    pub fn min(&self) -> f64 {
        self.atoms[0]
    }

    /// Total-variation distance `½ Σ |p(x) − q(x)|` over the union of
    /// supports, matching atoms within [`ATOM_MERGE_TOL`].
    pub fn total_variation(&self, other: &Self) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut acc = 0.0;
        while i < self.len() || j < other.len() {
            let take_left = j >= other.len()
                || (i < self.len() && self.atoms[i] < other.atoms[j] - ATOM_MERGE_TOL);
            let take_right = i >= self.len()
                || (j < other.len() && other.atoms[j] < self.atoms[i] - ATOM_MERGE_TOL);
            if take_left {
                acc += self.weights[i];
                i += 1;
            } else if take_right {
                acc += other.weights[j];
                j += 1;
            } else {
                acc += (self.weights[i] - other.weights[j]).abs();
                i += 1;
                j += 1;
            }
        }
        0.5 * acc
    }
}
