//! Exact return distributions by backward recursion and by brute-force
//! trajectory enumeration.

use super::{EpisodicMdp, MdpError, Policy};
use crate::distribution::CategoricalDistribution;

/// Guard on the number of positive-probability trajectories enumerated.
pub const MAX_TRAJECTORIES: u128 = 1_000_000;

/// Return laws of a fixed policy.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnDistributions {
    /// `η̄_h(s)` for `h ∈ 0..=H`; `state[H][s] = δ₀`.
    pub state: Vec<Vec<CategoricalDistribution>>,
    /// `η_h(s, a)` for `h ∈ 0..H`.
    pub action: Vec<Vec<Vec<CategoricalDistribution>>>,
}

impl ReturnDistributions {
    /// Law of the return from the initial-state distribution.
    pub fn initial(&self, mdp: &EpisodicMdp) -> Result<CategoricalDistribution, MdpError> {
        Ok(CategoricalDistribution::mixture(
            mdp.initial_distribution()
                .iter()
                .copied()
                .zip(&self.state[0]),
        )?)
    }
}

/// `η_h(s,a) = (B_r)# Σ_{s'} P_h(s'|s,a) η̄_{h+1}(s')`, `η̄_h(s) = η_h(s, π_h(s))`.
pub fn exact_return_distribution(
    mdp: &EpisodicMdp,
    pi: &Policy,
) -> Result<ReturnDistributions, MdpError> {
    pi.validate(mdp)?;
    let (n_s, n_a, n_h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut state = vec![Vec::new(); n_h + 1];
    state[n_h] = vec![CategoricalDistribution::dirac(0.0); n_s];
    let mut action = vec![Vec::new(); n_h];
    for h in (0..n_h).rev() {
        let mut per_state = Vec::with_capacity(n_s);
        for s in 0..n_s {
            let mut per_action = Vec::with_capacity(n_a);
            for a in 0..n_a {
                let mix = CategoricalDistribution::mixture(
                    mdp.transition(h, s, a).iter().copied().zip(&state[h + 1]),
                )?;
                per_action.push(mix.shift(mdp.reward(h, s, a)));
            }
            per_state.push(per_action);
        }
        state[h] = (0..n_s)
            .map(|s| per_state[s][pi.action(h, s)].clone())
            .collect();
        action[h] = per_state;
    }
    Ok(ReturnDistributions { state, action })
}

/// Number of positive-probability trajectories under `pi`, saturating.
pub fn trajectory_count(mdp: &EpisodicMdp, pi: &Policy) -> u128 {
    let n_s = mdp.n_states();
    let mut count = vec![1u128; n_s];
    for h in (0..mdp.horizon()).rev() {
        count = (0..n_s)
            .map(|s| {
                if h + 1 == mdp.horizon() {
                    return 1;
                }
                mdp.transition(h, s, pi.action(h, s))
                    .iter()
                    .zip(&count)
                    .filter(|(p, _)| **p > 0.0)
                    .fold(0u128, |acc, (_, c)| acc.saturating_add(*c))
            })
            .collect();
    }
    mdp.initial_distribution()
        .iter()
        .zip(&count)
        .filter(|(p, _)| **p > 0.0)
        .fold(0u128, |acc, (_, c)| acc.saturating_add(*c))
}

/// Walks every trajectory from the initial distribution and accumulates
/// probability mass at its return.
pub fn enumerate_trajectory_returns(
    mdp: &EpisodicMdp,
    pi: &Policy,
) -> Result<CategoricalDistribution, MdpError> {
    pi.validate(mdp)?;
    let count = trajectory_count(mdp, pi);
    if count > MAX_TRAJECTORIES {
        return Err(MdpError::InstanceTooLarge {
            count,
            limit: MAX_TRAJECTORIES,
        });
    }
    let mut out = Vec::with_capacity(count as usize);
    for (s, &p) in mdp.initial_distribution().iter().enumerate() {
        if p > 0.0 {
            walk(mdp, pi, 0, s, p, 0.0, &mut out);
        }
    }
    Ok(CategoricalDistribution::from_pairs(out)?)
}

fn walk(
    mdp: &EpisodicMdp,
    pi: &Policy,
    h: usize,
    s: usize,
    prob: f64,
    ret: f64,
    out: &mut Vec<(f64, f64)>,
) {
    let a = pi.action(h, s);
    let ret = ret + mdp.reward(h, s, a);
    if h + 1 == mdp.horizon() {
        out.push((ret, prob));
        return;
    }
    for (next, &p) in mdp.transition(h, s, a).iter().enumerate() {
        if p > 0.0 {
            walk(mdp, pi, h + 1, next, prob * p, ret, out);
        }
    }
}
