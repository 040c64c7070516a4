//! Bellman unbiasedness: Monte Carlo bias of a combiner fed with the
//! sketches of `k` sampled next states.

use super::Verdict;
use crate::distribution::CategoricalDistribution;
use crate::mdp::{
    exact_return_distribution, layered_mixture_mdp, sample_index, EpisodicMdp, MdpError, Policy,
};
use crate::sketch::{compute_sketch, Combiner, SketchError, SketchSpec};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// `|z|` at or above this flags a combiner as biased.
pub const Z_THRESHOLD: f64 = 3.0;

/// Standard errors are floored here so deterministic estimators get a
/// finite z-score.
const MIN_STANDARD_ERROR: f64 = 1e-15;

/// A next-state law: probabilities and the return distribution at each
/// next state.
#[derive(Debug, Clone, PartialEq)]
pub struct BuFixture {
    pub probs: Vec<f64>,
    pub next: Vec<CategoricalDistribution>,
}

impl BuFixture {
    /// Reads `P_h(·|s,a)` and `η̄_{h+1}` from the exact return
    /// distributions of `pi`; zero-probability next states are dropped.
    pub fn from_mdp(
        mdp: &EpisodicMdp,
        pi: &Policy,
        h: usize,
        s: usize,
        a: usize,
    ) -> Result<Self, MdpError> {
        let exact = exact_return_distribution(mdp, pi)?;
        let (probs, next) = mdp
            .transition(h, s, a)
            .iter()
            .zip(&exact.state[h + 1])
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, d)| (*p, d.clone()))
            .unzip();
        Ok(Self { probs, next })
    }

    /// Three next states with laws `½δ₀ + ½δ_{0.4}`, `0.3δ_{0.2} + 0.7δ₁`
    /// and `δ_{0.6}`, reached with probabilities 0.5, 0.3, 0.2.
    pub fn standard() -> Self {
        let branches = [
            (0.5, [(0.0, 0.5), (0.4, 0.5)].as_slice()),
            (0.3, [(0.2, 0.3), (1.0, 0.7)].as_slice()),
            (0.2, [(0.6, 1.0)].as_slice()),
        ];
        Self::layered(&branches)
    }

    /// Fixture read off a [`layered_mixture_mdp`] root.
    pub fn layered(branches: &[(f64, &[(f64, f64)])]) -> Self {
        let branches: Vec<(f64, CategoricalDistribution)> = branches
            .iter()
            .map(|(p, pairs)| {
                (
                    *p,
                    CategoricalDistribution::from_pairs(pairs.iter().copied())
                        .expect("valid branch"),
                )
            })
            .collect();
        let mdp = layered_mixture_mdp(0.0, &branches).expect("valid fixture");
        Self::from_mdp(&mdp, &Policy::constant(&mdp, 0), 0, 0, 0).expect("valid fixture")
    }

    pub fn mixture(&self) -> CategoricalDistribution {
        CategoricalDistribution::mixture(self.probs.iter().copied().zip(&self.next))
            .expect("fixture is a simplex")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnbiasednessCheck {
    pub verdict: Verdict,
    pub combiner: Combiner,
    pub k: usize,
    pub trials: usize,
    /// Sketch of the exact mixture.
    pub target: Vec<f64>,
    pub bias: Vec<f64>,
    pub z: Vec<f64>,
    pub max_abs_z: f64,
}

/// Draws `k` next states `trials` times, applies `combiner` to their
/// sketches and compares the average with the mixture's sketch.
pub fn check_bellman_unbiasedness<R: Rng + ?Sized>(
    spec: &SketchSpec,
    combiner: Combiner,
    fixture: &BuFixture,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<UnbiasednessCheck, SketchError> {
    combiner.check(spec)?;
    if trials < 2 {
        return Err(SketchError::TooFewSamples {
            need: 2,
            got: trials,
        });
    }
    let sketches: Vec<Vec<f64>> = fixture
        .next
        .iter()
        .map(|d| compute_sketch(d, spec))
        .collect::<Result<_, _>>()?;
    let target = compute_sketch(&fixture.mixture(), spec)?;
    let dim = spec.dim();
    let mut sum = vec![0.0; dim];
    let mut sum_sq = vec![0.0; dim];
    let mut sample = Vec::with_capacity(k);
    for _ in 0..trials {
        sample.clear();
        for _ in 0..k {
            sample.push(sketches[sample_index(&fixture.probs, rng)].clone());
        }
        let est = combiner.apply(spec, &sample)?;
        for i in 0..dim {
            let d = est[i] - target[i];
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    let n = trials as f64;
    let bias: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let z: Vec<f64> = (0..dim)
        .map(|i| {
            let var = (sum_sq[i] / n - bias[i] * bias[i]).max(0.0) * n / (n - 1.0);
            bias[i] / (var / n).sqrt().max(MIN_STANDARD_ERROR)
        })
        .collect();
    let max_abs_z = z.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(UnbiasednessCheck {
        verdict: if max_abs_z < Z_THRESHOLD {
            Verdict::Yes
        } else {
            Verdict::No
        },
        combiner,
        k,
        trials,
        target,
        bias,
        z,
        max_abs_z,
    })
}
