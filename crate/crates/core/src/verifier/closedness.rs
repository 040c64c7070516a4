//! Bellman closedness: backing sketches up step by step must reproduce the
//! sketches of the exact return distributions.

use super::{max_abs_diff, Verdict};
use crate::distribution::CategoricalDistribution;
use crate::mdp::{
    exact_return_distribution, random_mdp, trajectory_count, EpisodicMdp, MdpError, Policy,
    MAX_TRAJECTORIES,
};
use crate::sketch::{
    categorical_projected_backup, compute_sketch, sketch_bellman_backup, SketchError, SketchSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Default tolerance on the backup-vs-exact error.
pub const CLOSEDNESS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosednessCheck {
    pub verdict: Verdict,
    /// Largest backup-vs-exact discrepancy; `None` when no backup exists.
    pub max_error: Option<f64>,
    pub instances: usize,
    pub not_closed_raised: bool,
}

fn backup(spec: &SketchSpec, next: &[(f64, Vec<f64>)], r: f64) -> Result<Vec<f64>, SketchError> {
    match spec {
        SketchSpec::Categorical { grid } => categorical_projected_backup(grid, next, r),
        _ => sketch_bellman_backup(spec, next, r),
    }
}

/// Largest discrepancy over every `(h, s, a)` between the backed-up sketch
/// and the exact one. Backups propagate their own outputs, starting from the
/// sketch of `δ₀` at the horizon.
pub fn backup_error(spec: &SketchSpec, mdp: &EpisodicMdp, pi: &Policy) -> Result<f64, SketchError> {
    let exact =
        exact_return_distribution(mdp, pi).map_err(|e| SketchError::BadSpec(e.to_string()))?;
    let terminal = compute_sketch(&CategoricalDistribution::dirac(0.0), spec)?;
    let mut next = vec![terminal; mdp.n_states()];
    let mut worst: f64 = 0.0;
    for h in (0..mdp.horizon()).rev() {
        let mut cur = Vec::with_capacity(mdp.n_states());
        for s in 0..mdp.n_states() {
            let mut chosen = None;
            for a in 0..mdp.n_actions() {
                let comps: Vec<(f64, Vec<f64>)> = mdp
                    .transition(h, s, a)
                    .iter()
                    .copied()
                    .zip(next.iter().cloned())
                    .filter(|(p, _)| *p > 0.0)
                    .collect();
                let got = backup(spec, &comps, mdp.reward(h, s, a))?;
                let want = compute_sketch(&exact.action[h][s][a], spec)?;
                worst = worst.max(max_abs_diff(&got, &want));
                if a == pi.action(h, s) {
                    chosen = Some(got);
                }
            }
            cur.push(chosen.expect("policy action in range"));
        }
        next = cur;
    }
    Ok(worst)
}

/// [`check_bellman_closedness_with_tol`] at [`CLOSEDNESS_TOL`].
pub fn check_bellman_closedness(
    spec: &SketchSpec,
    instances: &[(EpisodicMdp, Policy)],
) -> Result<ClosednessCheck, MdpError> {
    check_bellman_closedness_with_tol(spec, instances, CLOSEDNESS_TOL)
}

/// Verdict is `Yes` iff every instance backs up with error below `tol`.
/// Instances must stay under the trajectory-enumeration guard.
pub fn check_bellman_closedness_with_tol(
    spec: &SketchSpec,
    instances: &[(EpisodicMdp, Policy)],
    tol: f64,
) -> Result<ClosednessCheck, MdpError> {
    let mut worst: f64 = 0.0;
    for (mdp, pi) in instances {
        let count = trajectory_count(mdp, pi);
        if count > MAX_TRAJECTORIES {
            return Err(MdpError::InstanceTooLarge {
                count,
                limit: MAX_TRAJECTORIES,
            });
        }
        match backup_error(spec, mdp, pi) {
            Ok(e) => worst = worst.max(e),
            Err(_) => {
                return Ok(ClosednessCheck {
                    verdict: Verdict::No,
                    max_error: None,
                    instances: instances.len(),
                    not_closed_raised: true,
                })
            }
        }
    }
    Ok(ClosednessCheck {
        verdict: if worst < tol {
            Verdict::Yes
        } else {
            Verdict::No
        },
        max_error: Some(worst),
        instances: instances.len(),
        not_closed_raised: false,
    })
}

/// Random dense MDPs paired with random deterministic policies.
pub fn random_instances(
    count: usize,
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    seed: u64,
) -> Vec<(EpisodicMdp, Policy)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mdp =
                random_mdp(n_states, n_actions, horizon, rng.random(), 0.3).expect("valid sizes");
            let pi = Policy::new(
                (0..horizon)
                    .map(|_| {
                        (0..n_states)
                            .map(|_| rng.random_range(0..n_actions))
                            .collect()
                    })
                    .collect(),
            );
            (mdp, pi)
        })
        .collect()
}
