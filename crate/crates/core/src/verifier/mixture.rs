//! Mixture-consistency: is `ψ(ν η₁ + (1−ν) η₂)` a function of `ν`, `ψ(η₁)`
//! and `ψ(η₂)` alone?

use super::{max_abs_diff, Verdict};
use crate::distribution::CategoricalDistribution;
use crate::mdp::quantile_witness_components;
use crate::sketch::{
    categorical_projected_backup, compute_sketch, sketch_bellman_backup, SketchError, SketchSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Component sketches must agree to this tolerance for a witness to count.
pub const WITNESS_MATCH_TOL: f64 = 1e-10;
/// Mixture sketches of a witness must differ by more than this.
pub const WITNESS_GAP: f64 = 1e-6;
/// Random mixtures used to confirm a positive verdict.
pub const POSITIVE_TRIALS: usize = 1000;

/// Two pairs of distributions with matching sketches whose `ν`-mixtures have
/// different sketches. Its existence rules out any mixing function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPair {
    pub nu: f64,
    pub eta1: CategoricalDistribution,
    pub eta2: CategoricalDistribution,
    pub eta1p: CategoricalDistribution,
    pub eta2p: CategoricalDistribution,
    pub spec: SketchSpec,
}

impl WitnessPair {
    /// Sketches of the two mixtures.
    pub fn mixture_sketches(&self) -> Result<(Vec<f64>, Vec<f64>), SketchError> {
        let mix = |a: &CategoricalDistribution, b: &CategoricalDistribution| {
            CategoricalDistribution::mixture([(self.nu, a), (1.0 - self.nu, b)])
        };
        Ok((
            compute_sketch(&mix(&self.eta1, &self.eta2)?, &self.spec)?,
            compute_sketch(&mix(&self.eta1p, &self.eta2p)?, &self.spec)?,
        ))
    }

    /// Gap between the mixture sketches if the component sketches agree,
    /// `None` otherwise.
    pub fn verify(&self) -> Result<Option<f64>, SketchError> {
        let s = |d| compute_sketch(d, &self.spec);
        if max_abs_diff(&s(&self.eta1)?, &s(&self.eta1p)?) > WITNESS_MATCH_TOL
            || max_abs_diff(&s(&self.eta2)?, &s(&self.eta2p)?) > WITNESS_MATCH_TOL
        {
            return Ok(None);
        }
        let (a, b) = self.mixture_sketches()?;
        Ok(Some(max_abs_diff(&a, &b)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCheck {
    pub verdict: Verdict,
    /// Which argument settled the verdict.
    pub check: String,
    /// Random instances tried (positive checks) or candidates scanned
    /// (witness search).
    pub trials: usize,
    /// Largest disagreement between the mixing function and the exact
    /// sketch over the trials.
    pub max_violation: f64,
    pub witness: Option<WitnessPair>,
}

fn cat(pairs: &[(f64, f64)]) -> CategoricalDistribution {
    CategoricalDistribution::from_pairs(pairs.iter().copied()).expect("hand-built witness")
}

/// Median witness: `Z = 0.2δ₀ + 0.8δ₁` and `Y_k = 0.6δ₀ + 0.4δ_k`. Every
/// `Y_k` has median 0, yet `½Z + ½Y_k` has median `k`.
pub fn median_witness(k: f64, k_prime: f64) -> WitnessPair {
    let z = cat(&[(0.0, 0.2), (1.0, 0.8)]);
    WitnessPair {
        nu: 0.5,
        eta1: z.clone(),
        eta1p: z,
        eta2: cat(&[(0.0, 0.6), (k, 0.4)]),
        eta2p: cat(&[(0.0, 0.6), (k_prime, 0.4)]),
        spec: SketchSpec::Median,
    }
}

/// Quantile witness: `Y` is fixed and `Z₀`, `Z₁` both have `α`-quantile 1,
/// but the half/half mixtures have `α`-quantiles 0 and 1/3.
pub fn quantile_witness(alpha: f64) -> Result<WitnessPair, SketchError> {
    let t = alpha.min(1.0 - alpha) / 3.0;
    let atoms = [1.0 / 3.0, 2.0 / 3.0];
    let weights = [alpha + t, t, 1.0 - alpha - 2.0 * t];
    let build = |target| {
        quantile_witness_components(alpha, &atoms, &weights, target)
            .map_err(|e| SketchError::BadSpec(e.to_string()))
    };
    let (y, z0) = build(0)?;
    let (_, z1) = build(1)?;
    Ok(WitnessPair {
        nu: 0.5,
        eta1: y.clone(),
        eta1p: y,
        eta2: z0,
        eta2p: z1,
        spec: SketchSpec::Quantile { alpha },
    })
}

/// Central moments without the mean: `½δ₀ + ½δ₂` mixed with its translates
/// by 0 and by 2. The translates share every central moment, the mixtures
/// have variances 1 and 2.
pub fn central_moments_witness(n: usize) -> WitnessPair {
    let z = cat(&[(0.0, 0.5), (2.0, 0.5)]);
    WitnessPair {
        nu: 0.5,
        eta1: z.clone(),
        eta1p: z.clone(),
        eta2: z.clone(),
        eta2p: z.shift(2.0),
        spec: SketchSpec::CentralMoments {
            n,
            with_mean: false,
        },
    }
}

/// The known mixing function for kinds that have one.
fn mixing_function(
    spec: &SketchSpec,
    nu: f64,
    a: &[f64],
    b: &[f64],
) -> Result<Vec<f64>, SketchError> {
    let next = [(nu, a.to_vec()), (1.0 - nu, b.to_vec())];
    match spec {
        SketchSpec::Categorical { grid } => categorical_projected_backup(grid, &next, 0.0),
        _ => sketch_bellman_backup(spec, &next, 0.0),
    }
}

fn random_distribution(rng: &mut ChaCha8Rng) -> CategoricalDistribution {
    let n = rng.random_range(1..=4);
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.random_range(0.0..2.0), rng.random_range(0.05..1.0)))
        .collect();
    let total: f64 = raw.iter().map(|p| p.1).sum();
    CategoricalDistribution::from_pairs(raw.into_iter().map(|(x, w)| (x, w / total)))
        .expect("normalised")
}

fn positive_check(spec: &SketchSpec, seed: u64) -> Result<MixtureCheck, SketchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..POSITIVE_TRIALS {
        let (d1, d2) = (random_distribution(&mut rng), random_distribution(&mut rng));
        let nu = rng.random_range(0.0..1.0);
        let mix = CategoricalDistribution::mixture([(nu, &d1), (1.0 - nu, &d2)])?;
        let exact = compute_sketch(&mix, spec)?;
        let via = mixing_function(
            spec,
            nu,
            &compute_sketch(&d1, spec)?,
            &compute_sketch(&d2, spec)?,
        )?;
        let scale = exact.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        worst = worst.max(max_abs_diff(&exact, &via) / scale);
    }
    Ok(MixtureCheck {
        verdict: if worst <= 1e-10 {
            Verdict::Yes
        } else {
            Verdict::Unknown
        },
        check: "mixing_function_trials".into(),
        trials: POSITIVE_TRIALS,
        max_violation: worst,
        witness: None,
    })
}

fn negative_check(check: &str, witness: WitnessPair) -> Result<MixtureCheck, SketchError> {
    let gap = witness.verify()?;
    Ok(match gap {
        Some(g) if g > WITNESS_GAP => MixtureCheck {
            verdict: Verdict::No,
            check: check.into(),
            trials: 1,
            max_violation: g,
            witness: Some(witness),
        },
        _ => MixtureCheck {
            verdict: Verdict::Unknown,
            check: check.into(),
            trials: 1,
            max_violation: 0.0,
            witness: None,
        },
    })
}

/// Mixture-consistency verdict for a built-in sketch kind. Negative verdicts
/// carry a verified [`WitnessPair`]; positive ones are confirmed against the
/// known mixing function on random mixtures.
pub fn check_mixture_consistency(spec: &SketchSpec) -> Result<MixtureCheck, SketchError> {
    spec.validate()?;
    match spec {
        SketchSpec::Median => {
            negative_check("median_three_point_witness", median_witness(0.3, 0.7))
        }
        SketchSpec::Quantile { alpha } => {
            negative_check("quantile_two_target_witness", quantile_witness(*alpha)?)
        }
        SketchSpec::CentralMoments {
            n,
            with_mean: false,
        } => negative_check("variance_translate_witness", central_moments_witness(*n)),
        _ => positive_check(spec, 0x5eed),
    }
}

/// Witness search for an arbitrary sketch function over two-atom laws on a
/// coarse grid. Distributions are bucketed by their rounded sketch; within a
/// bucket, mixing each member with a common partner must give the same
/// sketch. Returns `No` with a witness, or `Unknown` when none is found.
pub fn search_mixture_witness<F>(sketch: F, spec_label: SketchSpec) -> MixtureCheck
where
    F: Fn(&CategoricalDistribution) -> Vec<f64>,
{
    let atoms: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let weights: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let mut candidates: Vec<CategoricalDistribution> = atoms
        .iter()
        .map(|&x| CategoricalDistribution::dirac(x))
        .collect();
    for (i, &a) in atoms.iter().enumerate() {
        for &b in &atoms[i + 1..] {
            for &w in &weights {
                candidates.push(
                    CategoricalDistribution::from_pairs([(a, w), (b, 1.0 - w)]).expect("valid"),
                );
            }
        }
    }
    let key = |v: &[f64]| {
        v.iter()
            .map(|x| (x * 1e9).round() as i64)
            .collect::<Vec<_>>()
    };
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, d) in candidates.iter().enumerate() {
        buckets.entry(key(&sketch(d))).or_default().push(i);
    }
    let partners: Vec<&CategoricalDistribution> = candidates.iter().step_by(7).collect();
    let mut keys: Vec<_> = buckets.keys().cloned().collect();
    keys.sort();
    let mut scanned = 0;
    for k in keys {
        let members = &buckets[&k];
        let Some((&first, rest)) = members.split_first() else {
            continue;
        };
        for &other in rest {
            for partner in &partners {
                scanned += 1;
                let mix = |d: &CategoricalDistribution| {
                    CategoricalDistribution::mixture([(0.5, d), (0.5, *partner)])
                        .map(|m| sketch(&m))
                };
                let (Ok(a), Ok(b)) = (mix(&candidates[first]), mix(&candidates[other])) else {
                    continue;
                };
                let gap = max_abs_diff(&a, &b);
                if gap > WITNESS_GAP {
                    return MixtureCheck {
                        verdict: Verdict::No,
                        check: "grid_witness_search".into(),
                        trials: scanned,
                        max_violation: gap,
                        witness: Some(WitnessPair {
                            nu: 0.5,
                            eta1: candidates[first].clone(),
                            eta1p: candidates[other].clone(),
                            eta2: (*partner).clone(),
                            eta2p: (*partner).clone(),
                            spec: spec_label,
                        }),
                    };
                }
            }
        }
    }
    MixtureCheck {
        verdict: Verdict::Unknown,
        check: "grid_witness_search".into(),
        trials: scanned,
        max_violation: 0.0,
        witness: None,
    }
}
