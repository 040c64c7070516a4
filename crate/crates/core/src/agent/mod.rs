//! Statistical-functional least-squares value iteration (SF-LSVI).
//!
//! Each episode the agent plans backwards over the horizon: it regresses
//! normalised moment targets `ψ((B_r)# η̄_{h+1}(s′))` on the features of every
//! stored transition, adds the width of the confidence region to the first
//! output to get an optimistic `Q`, and acts greedily. With `N = 1` this is
//! LSVI-UCB.

use crate::approx::{
    beta_threshold, linear_log_cover, linear_width, ApproxError, EnumeratedFunctionClass,
    FeatureMap, FeatureSpec, RawEnumeratedClass, RegressionDataset, RegressionRow, RidgeSolver,
};
use crate::mdp::{argmax, Policy};
use crate::sketch::{denormalize_moments, normalize_moments, pushforward_moments};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("bad agent config: {0}")]
    Config(String),
    #[error("reward {r} at step {h} outside [0, 1]")]
    RewardOutOfRange { h: usize, r: f64 },
    #[error("transition index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("no plan yet; call plan() before acting")]
    NoPlan,
    #[error(transparent)]
    Approx(#[from] ApproxError),
}

/// Function class used for the moment regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassSpec {
    TabularOnehot {
        #[serde(default)]
        shared: bool,
    },
    RandomFourier {
        seed: u64,
        d: usize,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    Lookup {
        table: Vec<Vec<Vec<Vec<f64>>>>,
    },
    /// Explicit members with shape `[H][S][A][N]`.
    Enumerated {
        members: RawEnumeratedClass,
    },
}

fn default_bandwidth() -> f64 {
    3.0
}

impl Default for ClassSpec {
    fn default() -> Self {
        ClassSpec::TabularOnehot { shared: false }
    }
}

fn default_n() -> usize {
    2
}
fn default_lambda() -> f64 {
    1.0
}
fn default_c_scale() -> f64 {
    DEFAULT_C_SCALE
}
fn default_delta() -> f64 {
    0.05
}

/// Confidence-radius scale used when the config does not set one.
pub const DEFAULT_C_SCALE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    /// Number of moments regressed.
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_c_scale")]
    pub c_scale: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub class: ClassSpec,
    /// Overrides the default log covering number in the radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_cover: Option<f64>,
    /// Regress step `h` only on transitions taken at step `h`.
    #[serde(default)]
    pub per_step_dataset: bool,
    /// Also add the bonus to the higher-moment outputs.
    #[serde(default)]
    pub inflate_higher_moments: bool,
}

impl Default for PlanningConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            lambda: default_lambda(),
            c_scale: default_c_scale(),
            delta: default_delta(),
            class: ClassSpec::default(),
            log_cover: None,
            per_step_dataset: false,
            inflate_higher_moments: false,
        }
    }
}

impl PlanningConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.n == 0 {
            return Err(AgentError::Config("N must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(AgentError::Config(format!(
                "delta {} outside (0, 1)",
                self.delta
            )));
        }
        if !(self.lambda >= 0.0) || !(self.c_scale >= 0.0) {
            return Err(AgentError::Config(
                "lambda and c_scale must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// One logged step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub episode: usize,
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
}

/// Output of one planning pass. Step-indexed tables run over `0..H`; the
/// state tables `v` and `psi_v` carry an extra all-zero row for step `H`.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub policy: Policy,
    pub q: Vec<Vec<Vec<f64>>>,
    pub v: Vec<Vec<f64>>,
    pub bonus: Vec<Vec<Vec<f64>>>,
    /// `ψ_{1:N}(η_h(s, a))`, normalised; the first entry equals `q`.
    pub psi_q: Vec<Vec<Vec<Vec<f64>>>>,
    /// `ψ_{1:N}(η̄_h(s))`, normalised; the first entry equals `v`.
    pub psi_v: Vec<Vec<Vec<f64>>>,
    pub beta: f64,
    /// Widths that fell back to 0 because a region was empty.
    pub empty_regions: usize,
}

#[derive(Debug, Clone)]
enum Regressor {
    Linear {
        features: FeatureMap,
        /// One solver per step when `per_step_dataset`, otherwise one.
        solvers: Vec<RidgeSolver>,
    },
    Enumerated(EnumeratedFunctionClass),
}

/// Replay grouped by `(h′, s, a, s′, r)`; targets depend on nothing else.
type GroupKey = (usize, usize, usize, usize, u64);

#[derive(Debug, Clone)]
pub struct Agent {
    cfg: PlanningConfig,
    shape: (usize, usize, usize),
    beta: f64,
    regressor: Regressor,
    replay: Vec<Transition>,
    groups: BTreeMap<GroupKey, u32>,
    plan: Option<Plan>,
}

impl Agent {
    /// `total_steps` is `T = K·H`, used in the confidence radius.
    pub fn new(
        cfg: PlanningConfig,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        total_steps: usize,
    ) -> Result<Self, AgentError> {
        cfg.validate()?;
        if n_states == 0 || n_actions == 0 || horizon == 0 || total_steps == 0 {
            return Err(AgentError::Config(
                "empty MDP shape or zero total steps".into(),
            ));
        }
        let h_f = horizon as f64;
        let t = total_steps as f64;
        let feature_spec = |spec: &ClassSpec| -> Option<FeatureSpec> {
            match spec {
                ClassSpec::TabularOnehot { shared } => {
                    Some(FeatureSpec::TabularOnehot { shared: *shared })
                }
                ClassSpec::RandomFourier { seed, d, bandwidth } => {
                    Some(FeatureSpec::RandomFourier {
                        seed: *seed,
                        d: *d,
                        bandwidth: *bandwidth,
                    })
                }
                ClassSpec::Lookup { table } => Some(FeatureSpec::Lookup {
                    table: table.clone(),
                }),
                ClassSpec::Enumerated { .. } => None,
            }
        };
        let (regressor, default_cover) = match (&cfg.class, feature_spec(&cfg.class)) {
            (_, Some(fs)) => {
                let features = FeatureMap::build(&fs, n_states, n_actions, horizon)?;
                let copies = if cfg.per_step_dataset { horizon } else { 1 };
                let solvers = vec![RidgeSolver::new(features.dim(), cfg.n, cfg.lambda); copies];
                let cover =
                    linear_log_cover(cfg.n, features.dim(), t, h_f, features.bound().max(1e-12));
                (Regressor::Linear { features, solvers }, cover)
            }
            (ClassSpec::Enumerated { members }, None) => {
                let class: EnumeratedFunctionClass = members.clone().try_into()?;
                if class.shape() != (horizon, n_states, n_actions, cfg.n) {
                    return Err(AgentError::Config(format!(
                        "enumerated class shape {:?} does not match (H, S, A, N) = {:?}",
                        class.shape(),
                        (horizon, n_states, n_actions, cfg.n)
                    )));
                }
                let cover = (class.len() as f64).ln();
                (Regressor::Enumerated(class), cover)
            }
            _ => unreachable!("every non-enumerated class has a feature spec"),
        };
        let log_cover = cfg.log_cover.unwrap_or(default_cover);
        let beta = beta_threshold(cfg.n, h_f, t, cfg.delta, log_cover, cfg.c_scale);
        Ok(Self {
            cfg,
            shape: (n_states, n_actions, horizon),
            beta,
            regressor,
            replay: Vec::new(),
            groups: BTreeMap::new(),
            plan: None,
        })
    }

    /// LSVI-UCB: the same pipeline with a single moment.
    pub fn lsvi_ucb(
        cfg: PlanningConfig,
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        total_steps: usize,
    ) -> Result<Self, AgentError> {
        Self::new(
            PlanningConfig { n: 1, ..cfg },
            n_states,
            n_actions,
            horizon,
            total_steps,
        )
    }

    pub fn config(&self) -> &PlanningConfig {
        &self.cfg
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn replay(&self) -> &[Transition] {
        &self.replay
    }

    pub fn plan_tables(&self) -> Option<&Plan> {
        self.plan.as_ref()
    }

    /// Gram matrix of the shared (or step-`h`) regression, linear classes only.
    pub fn gram(&self, h: usize) -> Option<&DMatrix<f64>> {
        match &self.regressor {
            Regressor::Linear { solvers, .. } => Some(solvers[h.min(solvers.len() - 1)].gram()),
            Regressor::Enumerated(_) => None,
        }
    }

    /// Appends to the replay and updates the Gram cache.
    pub fn record_transition(&mut self, t: Transition) -> Result<(), AgentError> {
        let (n_s, n_a, n_h) = self.shape;
        if t.h >= n_h || t.s >= n_s || t.a >= n_a || t.s_next >= n_s {
            return Err(AgentError::IndexOutOfRange(format!("{t:?}")));
        }
        if !(0.0..=1.0).contains(&t.r) {
            return Err(AgentError::RewardOutOfRange { h: t.h, r: t.r });
        }
        if let Regressor::Linear { features, solvers } = &mut self.regressor {
            let idx = if solvers.len() > 1 { t.h } else { 0 };
            solvers[idx].add_feature(features.phi(t.h, t.s, t.a), 1.0);
        }
        *self
            .groups
            .entry((t.h, t.s, t.a, t.s_next, t.r.to_bits()))
            .or_insert(0) += 1;
        self.replay.push(t);
        Ok(())
    }

    /// Greedy action of the current plan.
    pub fn act(&self, h: usize, s: usize) -> Result<usize, AgentError> {
        self.plan
            .as_ref()
            .map(|p| p.policy.action(h, s))
            .ok_or(AgentError::NoPlan)
    }

    /// One backward planning pass over the whole replay.
    pub fn plan(&mut self) -> Result<&Plan, AgentError> {
        let (n_s, n_a, n_h) = self.shape;
        let n = self.cfg.n;
        let h_f = n_h as f64;
        let mut q = vec![vec![vec![0.0; n_a]; n_s]; n_h];
        let mut bonus = q.clone();
        let mut psi_q = vec![vec![vec![vec![0.0; n]; n_a]; n_s]; n_h];
        let mut v = vec![vec![0.0; n_s]; n_h + 1];
        let mut psi_v = vec![vec![vec![0.0; n]; n_s]; n_h + 1];
        let mut actions = vec![vec![0; n_s]; n_h];
        let mut empty_regions = 0;

        let factors = match &self.regressor {
            Regressor::Linear { solvers, .. } => solvers
                .iter()
                .map(|s| s.factor())
                .collect::<Result<Vec<_>, _>>()?,
            Regressor::Enumerated(_) => Vec::new(),
        };

        for h in (0..n_h).rev() {
            // Normalised targets ψ((B_r)# η̄_{h+1}(s′)) for each replay group.
            let next = &psi_v[h + 1];
            let target = |s_next: usize, r: f64| -> Vec<f64> {
                let pushed = pushforward_moments(&denormalize_moments(&next[s_next], h_f), r);
                normalize_moments(&pushed)
                    .into_iter()
                    .map(|x| x.clamp(-h_f - 1.0, h_f + 1.0))
                    .collect()
            };
            let rows = self
                .groups
                .iter()
                .filter(|((hp, ..), _)| !self.cfg.per_step_dataset || *hp == h);

            // (f̃(h, s, a), b(h, s, a)) for every pair.
            let mut fitted: Vec<Vec<(Vec<f64>, f64)>> = Vec::with_capacity(n_s);
            match &self.regressor {
                Regressor::Linear { features, solvers } => {
                    let idx = if solvers.len() > 1 { h } else { 0 };
                    let mut solver = solvers[idx].clone();
                    solver.clear_targets();
                    for (&(hp, s, a, s_next, r_bits), &count) in rows {
                        solver.add_target(
                            features.phi(hp, s, a),
                            &target(s_next, f64::from_bits(r_bits)),
                            count as f64,
                        );
                    }
                    let weights = solver.solve(&factors[idx]);
                    for s in 0..n_s {
                        fitted.push(
                            (0..n_a)
                                .map(|a| {
                                    let phi = features.phi(h, s, a);
                                    let f = (0..n)
                                        .map(|k| {
                                            weights.row(k).iter().zip(phi).map(|(w, p)| w * p).sum()
                                        })
                                        .collect();
                                    (f, linear_width(&factors[idx], self.beta, phi))
                                })
                                .collect(),
                        );
                    }
                }
                Regressor::Enumerated(class) => {
                    let mut data = RegressionDataset::new(n, h_f);
                    for (&(hp, s, a, s_next, r_bits), &count) in rows {
                        let t = target(s_next, f64::from_bits(r_bits));
                        for _ in 0..count {
                            data.push(RegressionRow {
                                h: hp,
                                s,
                                a,
                                target: t.clone(),
                                episode: 0,
                                step: hp,
                            })?;
                        }
                    }
                    let (center, _) = class.fit(&data)?;
                    let members = class.region_members(center, &data.points(class), self.beta);
                    for s in 0..n_s {
                        fitted.push(
                            (0..n_a)
                                .map(|a| {
                                    let (w, empty) =
                                        class.width(&members, class.point_index(h, s, a));
                                    if empty {
                                        empty_regions += 1;
                                    }
                                    (class.value(center, h, s, a).to_vec(), w)
                                })
                                .collect(),
                        );
                    }
                }
            }

            for s in 0..n_s {
                for a in 0..n_a {
                    let (f, b) = &fitted[s][a];
                    bonus[h][s][a] = *b;
                    q[h][s][a] = (f[0] + b).clamp(0.0, h_f);
                    let mut psi = Vec::with_capacity(n);
                    psi.push(q[h][s][a]);
                    for x in &f[1..] {
                        let x = if self.cfg.inflate_higher_moments {
                            x + b
                        } else {
                            *x
                        };
                        psi.push(x.clamp(-h_f, h_f));
                    }
                    psi_q[h][s][a] = psi;
                }
                let best = argmax(&q[h][s]);
                actions[h][s] = best;
                v[h][s] = q[h][s][best];
                psi_v[h][s] = psi_q[h][s][best].clone();
            }
        }
        self.plan = Some(Plan {
            policy: Policy::new(actions),
            q,
            v,
            bonus,
            psi_q,
            psi_v,
            beta: self.beta,
            empty_regions,
        });
        Ok(self.plan.as_ref().expect("just set"))
    }
}

/// Runs one SF-LSVI planning pass.
pub fn sf_lsvi_plan(agent: &mut Agent) -> Result<&Plan, AgentError> {
    agent.plan()
}

/// Planning pass of an agent built with [`Agent::lsvi_ucb`].
pub fn lsvi_ucb_plan(agent: &mut Agent) -> Result<&Plan, AgentError> {
    if agent.cfg.n != 1 {
        return Err(AgentError::Config(format!(
            "LSVI-UCB regresses one moment, agent has N = {}",
            agent.cfg.n
        )));
    }
    agent.plan()
}

#[cfg(test)]
mod tests;
