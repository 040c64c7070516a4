//! Finite-horizon tabular MDPs and exact ground-truth oracles.
//!
//! Steps are 0-based in code: step `h` runs over `0..horizon`, and the value
//! at step `horizon` is identically zero.

mod builders;
mod returns;

pub use builders::{
    chain_mdp, gridworld, layered_mixture_mdp, make_counterexample_mdp,
    quantile_witness_components, random_mdp, CounterexampleKind,
};
pub use returns::{
    enumerate_trajectory_returns, exact_return_distribution, trajectory_count, ReturnDistributions,
    MAX_TRAJECTORIES,
};

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Simplex tolerance for transition rows and initial distributions.
pub const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("transition row P[{h}][{s}][{a}] is not a probability vector (sum {sum})")]
    InvalidStochasticRow {
        h: usize,
        s: usize,
        a: usize,
        sum: f64,
    },
    #[error("initial-state distribution is not a probability vector")]
    InvalidInitialDistribution,
    #[error("reward r[{h}][{s}][{a}] = {r} outside [0, 1]")]
    RewardOutOfRange {
        h: usize,
        s: usize,
        a: usize,
        r: f64,
    },
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("instance too large: {count} trajectories exceeds limit {limit}")]
    InstanceTooLarge { count: u128, limit: u128 },
    #[error("bad parameters: {0}")]
    BadParams(String),
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error(transparent)]
    Distribution(#[from] crate::distribution::DistributionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Raw on-disk layout, validated into [`EpisodicMdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawMdp {
    #[serde(rename = "S")]
    n_states: usize,
    #[serde(rename = "A")]
    n_actions: usize,
    #[serde(rename = "H")]
    horizon: usize,
    #[serde(rename = "P")]
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    r: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    s_init: Option<Vec<f64>>,
}

/// Finite episodic MDP with deterministic rewards in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMdp", into = "RawMdp")]
pub struct EpisodicMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    /// `[h][s][a][s']`
    transitions: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[h][s][a]`
    rewards: Vec<Vec<Vec<f64>>>,
    initial: Vec<f64>,
}

impl TryFrom<RawMdp> for EpisodicMdp {
    type Error = MdpError;

    fn try_from(raw: RawMdp) -> Result<Self, MdpError> {
        let initial = match raw.s_init {
            Some(v) => v,
            None => {
                let mut v = vec![0.0; raw.n_states.max(1)];
                v[0] = 1.0;
                v
            }
        };
        EpisodicMdp::new(
            raw.transitions,
            raw.r,
            initial,
            raw.n_states,
            raw.n_actions,
            raw.horizon,
        )
    }
}

impl From<EpisodicMdp> for RawMdp {
    fn from(m: EpisodicMdp) -> Self {
        RawMdp {
            n_states: m.n_states,
            n_actions: m.n_actions,
            horizon: m.horizon,
            transitions: m.transitions,
            r: m.rewards,
            s_init: Some(m.initial),
        }
    }
}

fn check_simplex(row: &[f64]) -> Option<f64> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Some(f64::NAN);
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        Some(sum)
    } else {
        None
    }
}

impl EpisodicMdp {
    /// Validates shapes, stochastic rows and reward bounds.
    pub fn new(
        transitions: Vec<Vec<Vec<Vec<f64>>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial: Vec<f64>,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
    ) -> Result<Self, MdpError> {
        if n_states == 0 || n_actions == 0 || horizon == 0 {
            return Err(MdpError::BadDimensions(format!(
                "S={n_states}, A={n_actions}, H={horizon} must all be positive"
            )));
        }
        if transitions.len() != horizon || rewards.len() != horizon {
            return Err(MdpError::BadDimensions(format!(
                "expected {horizon} steps, got P:{} r:{}",
                transitions.len(),
                rewards.len()
            )));
        }
        if initial.len() != n_states {
            return Err(MdpError::BadDimensions(format!(
                "s_init has length {}, expected {n_states}",
                initial.len()
            )));
        }
        for h in 0..horizon {
            if transitions[h].len() != n_states || rewards[h].len() != n_states {
                return Err(MdpError::BadDimensions(format!(
                    "step {h}: expected {n_states} states"
                )));
            }
            for s in 0..n_states {
                if transitions[h][s].len() != n_actions || rewards[h][s].len() != n_actions {
                    return Err(MdpError::BadDimensions(format!(
                        "step {h} state {s}: expected {n_actions} actions"
                    )));
                }
                for a in 0..n_actions {
                    let row = &transitions[h][s][a];
                    if row.len() != n_states {
                        return Err(MdpError::BadDimensions(format!(
                            "P[{h}][{s}][{a}] has length {}, expected {n_states}",
                            row.len()
                        )));
                    }
                    if let Some(sum) = check_simplex(row) {
                        return Err(MdpError::InvalidStochasticRow { h, s, a, sum });
                    }
                    let r = rewards[h][s][a];
                    if !(0.0..=1.0).contains(&r) {
                        return Err(MdpError::RewardOutOfRange { h, s, a, r });
                    }
                }
            }
        }
        if check_simplex(&initial).is_some() {
            return Err(MdpError::InvalidInitialDistribution);
        }
        Ok(Self {
            n_states,
            n_actions,
            horizon,
            transitions,
            rewards,
            initial,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn reward(&self, h: usize, s: usize, a: usize) -> f64 {
        self.rewards[h][s][a]
    }

    /// Next-state distribution `P_h(· | s, a)`.
    pub fn transition(&self, h: usize, s: usize, a: usize) -> &[f64] {
        &self.transitions[h][s][a]
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// Copy with a different initial-state distribution.
    pub fn with_initial(mut self, initial: Vec<f64>) -> Result<Self, MdpError> {
        if initial.len() != self.n_states || check_simplex(&initial).is_some() {
            return Err(MdpError::InvalidInitialDistribution);
        }
        self.initial = initial;
        Ok(self)
    }

    fn check_index(&self, h: usize, s: usize, a: usize) -> Result<(), MdpError> {
        if h >= self.horizon || s >= self.n_states || a >= self.n_actions {
            return Err(MdpError::IndexOutOfRange(format!(
                "(h={h}, s={s}, a={a}) for H={}, S={}, A={}",
                self.horizon, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Draws `s' ~ P_h(· | s, a)`.
    pub fn sample_transition<R: Rng + ?Sized>(
        &self,
        h: usize,
        s: usize,
        a: usize,
        rng: &mut R,
    ) -> Result<usize, MdpError> {
        self.check_index(h, s, a)?;
        Ok(sample_index(&self.transitions[h][s][a], rng))
    }

    /// Draws `s₁ ~ s_init`.
    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    /// `r_h(s,a) + Σ_{s'} P_h(s'|s,a) v(s')`.
    pub fn backup(&self, h: usize, s: usize, a: usize, next_values: &[f64]) -> f64 {
        self.rewards[h][s][a]
            + self.transitions[h][s][a]
                .iter()
                .zip(next_values)
                .map(|(p, v)| p * v)
                .sum::<f64>()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MdpError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Inverse-CDF draw from a probability vector.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Deterministic policy `π_h(s)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    #[serde(rename = "pi")]
    actions: Vec<Vec<usize>>,
}

impl Policy {
    pub fn new(actions: Vec<Vec<usize>>) -> Self {
        Self { actions }
    }

    /// The policy that always plays action `a`.
    pub fn constant(mdp: &EpisodicMdp, a: usize) -> Self {
        Self::new(vec![vec![a; mdp.n_states()]; mdp.horizon()])
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h][s]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.actions
    }

    pub fn validate(&self, mdp: &EpisodicMdp) -> Result<(), MdpError> {
        if self.actions.len() != mdp.horizon()
            || self.actions.iter().any(|row| row.len() != mdp.n_states())
        {
            return Err(MdpError::InvalidPolicy(format!(
                "expected shape [{}][{}]",
                mdp.horizon(),
                mdp.n_states()
            )));
        }
        if let Some(a) = self
            .actions
            .iter()
            .flatten()
            .find(|&&a| a >= mdp.n_actions())
        {
            return Err(MdpError::InvalidPolicy(format!(
                "action {a} >= A={}",
                mdp.n_actions()
            )));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Randomized Markov policy, `probs[h][s][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    probs: Vec<Vec<Vec<f64>>>,
}

impl StochasticPolicy {
    pub fn uniform(mdp: &EpisodicMdp) -> Self {
        let p = 1.0 / mdp.n_actions() as f64;
        Self {
            probs: vec![vec![vec![p; mdp.n_actions()]; mdp.n_states()]; mdp.horizon()],
        }
    }

    pub fn from_deterministic(mdp: &EpisodicMdp, pi: &Policy) -> Self {
        let probs = (0..mdp.horizon())
            .map(|h| {
                (0..mdp.n_states())
                    .map(|s| {
                        let mut row = vec![0.0; mdp.n_actions()];
                        row[pi.action(h, s)] = 1.0;
                        row
                    })
                    .collect()
            })
            .collect();
        Self { probs }
    }

    pub fn probs(&self, h: usize, s: usize) -> &[f64] {
        &self.probs[h][s]
    }

    pub fn sample<R: Rng + ?Sized>(&self, h: usize, s: usize, rng: &mut R) -> usize {
        sample_index(&self.probs[h][s], rng)
    }
}

/// `V[h][s]` for `h ∈ 0..=H` (with `V[H] ≡ 0`) and `Q[h][s][a]` for `h ∈ 0..H`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTables {
    pub v: Vec<Vec<f64>>,
    pub q: Vec<Vec<Vec<f64>>>,
}

impl ValueTables {
    fn zeros(mdp: &EpisodicMdp) -> Self {
        Self {
            v: vec![vec![0.0; mdp.n_states()]; mdp.horizon() + 1],
            q: vec![vec![vec![0.0; mdp.n_actions()]; mdp.n_states()]; mdp.horizon()],
        }
    }

    /// `E_{s ~ s_init} V[0][s]`.
    pub fn initial_value(&self, mdp: &EpisodicMdp) -> f64 {
        mdp.initial_distribution()
            .iter()
            .zip(&self.v[0])
            .map(|(p, v)| p * v)
            .sum()
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = i;
        }
    }
    best
}

/// Backward induction for `Q*`, `V*` and the greedy optimal policy.
pub fn optimal_values(mdp: &EpisodicMdp) -> (ValueTables, Policy) {
    let mut t = ValueTables::zeros(mdp);
    let mut actions = vec![vec![0; mdp.n_states()]; mdp.horizon()];
    for h in (0..mdp.horizon()).rev() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                t.q[h][s][a] = mdp.backup(h, s, a, &t.v[h + 1]);
            }
            let best = argmax(&t.q[h][s]);
            actions[h][s] = best;
            t.v[h][s] = t.q[h][s][best];
        }
    }
    (t, Policy::new(actions))
}

/// Exact `Q^π`, `V^π` of a deterministic policy.
pub fn evaluate_policy(mdp: &EpisodicMdp, pi: &Policy) -> ValueTables {
    let mut t = ValueTables::zeros(mdp);
    for h in (0..mdp.horizon()).rev() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                t.q[h][s][a] = mdp.backup(h, s, a, &t.v[h + 1]);
            }
            t.v[h][s] = t.q[h][s][pi.action(h, s)];
        }
    }
    t
}

/// Exact `Q^π`, `V^π` of a randomized policy.
pub fn evaluate_stochastic_policy(mdp: &EpisodicMdp, pi: &StochasticPolicy) -> ValueTables {
    let mut t = ValueTables::zeros(mdp);
    for h in (0..mdp.horizon()).rev() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                t.q[h][s][a] = mdp.backup(h, s, a, &t.v[h + 1]);
            }
            t.v[h][s] = pi
                .probs(h, s)
                .iter()
                .zip(&t.q[h][s])
                .map(|(p, q)| p * q)
                .sum();
        }
    }
    t
}
