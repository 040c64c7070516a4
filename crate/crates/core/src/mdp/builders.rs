//! Environment constructors, including the small MDPs used as counterexamples
//! in the sketch verifier.

use super::{EpisodicMdp, MdpError};
use crate::distribution::CategoricalDistribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

fn delta(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// Time-homogeneous chain of `n_states` cells with two actions.
///
/// Action 0 steps left deterministically; action 1 steps right with
/// probability `1 - slip` and stays put otherwise. Stepping left from cell 0
/// pays 0.05, acting in the rightmost cell pays 1, everything else pays 0.
/// Episodes start in cell 0.
pub fn chain_mdp(n_states: usize, horizon: usize, slip: f64) -> Result<EpisodicMdp, MdpError> {
    if n_states < 2 {
        return Err(MdpError::BadParams("chain needs at least 2 states".into()));
    }
    if !(0.0..1.0).contains(&slip) {
        return Err(MdpError::BadParams(format!("slip {slip} outside [0, 1)")));
    }
    let last = n_states - 1;
    let step: Vec<Vec<Vec<f64>>> = (0..n_states)
        .map(|s| {
            let left = delta(n_states, s.saturating_sub(1));
            let mut right = vec![0.0; n_states];
            right[(s + 1).min(last)] += 1.0 - slip;
            right[s] += slip;
            vec![left, right]
        })
        .collect();
    let rewards: Vec<Vec<f64>> = (0..n_states)
        .map(|s| {
            if s == last {
                vec![1.0, 1.0]
            } else if s == 0 {
                vec![0.05, 0.0]
            } else {
                vec![0.0, 0.0]
            }
        })
        .collect();
    EpisodicMdp::new(
        vec![step; horizon],
        vec![rewards; horizon],
        delta(n_states, 0),
        n_states,
        2,
        horizon,
    )
}

/// Random dense MDP. Each reward is zero with probability `reward_sparsity`
/// and uniform on `[0, 1)` otherwise. Episodes start in state 0.
pub fn random_mdp(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    seed: u64,
    reward_sparsity: f64,
) -> Result<EpisodicMdp, MdpError> {
    if !(0.0..=1.0).contains(&reward_sparsity) {
        return Err(MdpError::BadParams(format!(
            "reward_sparsity {reward_sparsity} outside [0, 1]"
        )));
    }
    if n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(MdpError::BadDimensions("S, A, H must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut p_h = Vec::with_capacity(n_states);
        let mut r_h = Vec::with_capacity(n_states);
        for _ in 0..n_states {
            let mut p_s = Vec::with_capacity(n_actions);
            let mut r_s = Vec::with_capacity(n_actions);
            for _ in 0..n_actions {
                let raw: Vec<f64> = (0..n_states).map(|_| rng.random::<f64>() + 1e-3).collect();
                let total: f64 = raw.iter().sum();
                p_s.push(raw.iter().map(|x| x / total).collect());
                let r = if rng.random::<f64>() < reward_sparsity {
                    0.0
                } else {
                    rng.random::<f64>()
                };
                r_s.push(r);
            }
            p_h.push(p_s);
            r_h.push(r_s);
        }
        transitions.push(p_h);
        rewards.push(r_h);
    }
    EpisodicMdp::new(
        transitions,
        rewards,
        delta(n_states, 0),
        n_states,
        n_actions,
        horizon,
    )
}

/// Deterministic grid with actions up/right/down/left; the far corner pays 1
/// for any action. Episodes start in the origin corner.
pub fn gridworld(width: usize, height: usize, horizon: usize) -> Result<EpisodicMdp, MdpError> {
    if width == 0 || height == 0 {
        return Err(MdpError::BadParams("grid must be nonempty".into()));
    }
    let n = width * height;
    let goal = n - 1;
    let idx = |x: usize, y: usize| y * width + x;
    let mut step = Vec::with_capacity(n);
    let mut rew = Vec::with_capacity(n);
    for s in 0..n {
        let (x, y) = (s % width, s / width);
        let moves = [
            idx(x, (y + 1).min(height - 1)),
            idx((x + 1).min(width - 1), y),
            idx(x, y.saturating_sub(1)),
            idx(x.saturating_sub(1), y),
        ];
        step.push(moves.iter().map(|&t| delta(n, t)).collect::<Vec<_>>());
        rew.push(vec![if s == goal { 1.0 } else { 0.0 }; 4]);
    }
    EpisodicMdp::new(
        vec![step; horizon],
        vec![rew; horizon],
        delta(n, 0),
        n,
        4,
        horizon,
    )
}

/// Two-stage single-action constructions used by the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CounterexampleKind {
    /// Root state (reward 0) branching to terminals with the given
    /// `(reward, weight)` pairs.
    TwoStageGeneral { terminals: Vec<(f64, f64)> },
    /// Half/half mixture of `Y` and `Z_n` from
    /// [`quantile_witness_components`].
    QuantileWitness {
        alpha: f64,
        y_atoms: Vec<f64>,
        y_weights: Vec<f64>,
        target: usize,
    },
    /// Two equally likely terminals paying `gamma` and `gamma + gamma / k`.
    MaxMinDemo { gamma: f64, k: f64 },
}

/// Builds the horizon-2 MDP for a counterexample kind. State 0 is the root.
pub fn make_counterexample_mdp(kind: &CounterexampleKind) -> Result<EpisodicMdp, MdpError> {
    let terminals = match kind {
        CounterexampleKind::TwoStageGeneral { terminals } => terminals.clone(),
        CounterexampleKind::QuantileWitness {
            alpha,
            y_atoms,
            y_weights,
            target,
        } => {
            let (y, z) = quantile_witness_components(*alpha, y_atoms, y_weights, *target)?;
            y.iter()
                .map(|(x, w)| (x, 0.5 * w))
                .chain(z.iter().map(|(x, w)| (x, 0.5 * w)))
                .collect()
        }
        CounterexampleKind::MaxMinDemo { gamma, k } => {
            if !(*k > 0.0) {
                return Err(MdpError::BadParams(format!("k = {k} must be positive")));
            }
            vec![(*gamma, 0.5), (gamma + gamma / k, 0.5)]
        }
    };
    two_stage(&terminals)
}

fn two_stage(terminals: &[(f64, f64)]) -> Result<EpisodicMdp, MdpError> {
    if terminals.is_empty() {
        return Err(MdpError::BadParams("need at least one terminal".into()));
    }
    let total: f64 = terminals.iter().map(|t| t.1).sum();
    if terminals.iter().any(|t| !(t.1 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(MdpError::BadParams(
            "terminal weights must form a simplex".into(),
        ));
    }
    if let Some(t) = terminals.iter().find(|t| !(0.0..=1.0).contains(&t.0)) {
        return Err(MdpError::BadParams(format!(
            "terminal reward {} outside [0, 1]",
            t.0
        )));
    }
    let n = terminals.len() + 1;
    let mut root_row = vec![0.0; n];
    for (i, t) in terminals.iter().enumerate() {
        root_row[i + 1] = t.1;
    }
    let stay: Vec<Vec<Vec<f64>>> = (0..n).map(|s| vec![delta(n, s)]).collect();
    let mut first = stay.clone();
    first[0] = vec![root_row];
    let r0 = vec![vec![0.0]; n];
    let mut r1 = vec![vec![0.0]];
    r1.extend(terminals.iter().map(|t| vec![t.0]));
    EpisodicMdp::new(vec![first, stay], vec![r0, r1], delta(n, 0), n, 1, 2)
}

/// The pair `(Y, Z_n)` whose half/half mixture has `α`-quantile `y_n`
/// (with `y_0 = 0`), although `q_α(Y) = 0` and `q_α(Z_n) = 1` for every `n`.
///
/// `y_atoms` holds `0 < y_1 < … < y_N < 1` and `y_weights` the masses
/// `p_{y_0}, …, p_{y_N}` with `p_{y_0} > α`. The mass of `Z_n` at 0 is
/// `2α − Σ_{i≤n} p_{y_i}` plus a margin that keeps the mixture CDF strictly
/// above `α` at `y_n` and strictly below it at `y_{n−1}`.
pub fn quantile_witness_components(
    alpha: f64,
    y_atoms: &[f64],
    y_weights: &[f64],
    target: usize,
) -> Result<(CategoricalDistribution, CategoricalDistribution), MdpError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MdpError::BadParams(format!("alpha {alpha} outside (0, 1)")));
    }
    if y_weights.len() != y_atoms.len() + 1 {
        return Err(MdpError::BadParams(
            "need one weight per atom plus the mass at 0".into(),
        ));
    }
    let mut prev = 0.0;
    for &y in y_atoms {
        if !(y > prev && y < 1.0) {
            return Err(MdpError::BadParams(
                "y atoms must be increasing inside (0, 1)".into(),
            ));
        }
        prev = y;
    }
    if y_weights[0] <= alpha {
        return Err(MdpError::BadParams(
            "mass of Y at 0 must exceed alpha".into(),
        ));
    }
    if target > y_atoms.len() {
        return Err(MdpError::BadParams(format!(
            "target {target} > N = {}",
            y_atoms.len()
        )));
    }
    let cum: f64 = y_weights[..=target].iter().sum();
    let margin = if target == 0 {
        0.5 * (cum - alpha)
    } else {
        0.5 * y_weights[target].min(cum - alpha)
    };
    let pz0 = 2.0 * alpha - cum + margin;
    if !(margin > 0.0) || pz0 < 0.0 {
        return Err(MdpError::BadParams(format!(
            "target {target} unreachable: cumulative mass {cum} exceeds 2·alpha"
        )));
    }
    let mut y_pairs = vec![(0.0, y_weights[0])];
    y_pairs.extend(y_atoms.iter().copied().zip(y_weights[1..].iter().copied()));
    let y = CategoricalDistribution::from_pairs(y_pairs)?;
    let z = CategoricalDistribution::from_pairs([(0.0, pz0), (1.0, 1.0 - pz0)])?;
    Ok((y, z))
}

/// Horizon-3 MDP whose root (paying `reward`) moves to branch state `i` with
/// probability `νᵢ`; branch `i` then has return law `ηᵢ` built from leaf
/// rewards. Atoms of every `ηᵢ` must lie in `[0, 1]`.
///
/// State 0 is the root, states `1..=B` are the branches.
pub fn layered_mixture_mdp(
    reward: f64,
    branches: &[(f64, CategoricalDistribution)],
) -> Result<EpisodicMdp, MdpError> {
    if branches.is_empty() {
        return Err(MdpError::BadParams("need at least one branch".into()));
    }
    let total: f64 = branches.iter().map(|b| b.0).sum();
    if branches.iter().any(|b| !(b.0 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
        return Err(MdpError::BadParams(
            "branch weights must form a simplex".into(),
        ));
    }
    let n_branches = branches.len();
    let n_leaves: usize = branches.iter().map(|b| b.1.len()).sum();
    let n = 1 + n_branches + n_leaves;
    let stay: Vec<Vec<Vec<f64>>> = (0..n).map(|s| vec![delta(n, s)]).collect();

    let mut step0 = stay.clone();
    let mut root_row = vec![0.0; n];
    for (i, b) in branches.iter().enumerate() {
        root_row[1 + i] = b.0;
    }
    step0[0] = vec![root_row];
    let mut r0 = vec![vec![0.0]; n];
    r0[0] = vec![reward];

    let mut step1 = stay.clone();
    let mut r2 = vec![vec![0.0]; n];
    let mut leaf = 1 + n_branches;
    for (i, (_, dist)) in branches.iter().enumerate() {
        let mut row = vec![0.0; n];
        for (x, w) in dist.iter() {
            if !(0.0..=1.0).contains(&x) {
                return Err(MdpError::BadParams(format!(
                    "branch atom {x} outside [0, 1]"
                )));
            }
            row[leaf] = w;
            r2[leaf] = vec![x];
            leaf += 1;
        }
        step1[1 + i] = vec![row];
    }
    let r1 = vec![vec![0.0]; n];
    EpisodicMdp::new(
        vec![step0, step1, stay],
        vec![r0, r1, r2],
        delta(n, 0),
        n,
        1,
        3,
    )
}
