//! Experiment orchestration: configs, the episode loop, exact regret
//! accounting against `V*`, and result files.
//!
//! Regret is measured with the exact value of each episode's policy,
//! `V*₁(s₁ᵏ) − V^{πᵏ}₁(s₁ᵏ)`, never with the noisy realized return.

mod output;
mod stats;

pub use output::{emit_csv, emit_summary_json, read_csv, CsvLog, CSV_COLUMNS, SUMMARY_SCHEMA};
pub use stats::{fit_regret_exponent, mean_and_se, RegretFit, MIN_FIT_EPISODES};

use crate::agent::{Agent, AgentError, PlanningConfig, Transition};
use crate::mdp::{
    chain_mdp, evaluate_policy, evaluate_stochastic_policy, gridworld, optimal_values, random_mdp,
    EpisodicMdp, MdpError, Policy, StochasticPolicy, ValueTables,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Tolerance of the optimism audit, `Qᵏ_h < Q*_h − OPTIMISM_TOL`.
pub const OPTIMISM_TOL: f64 = 1e-6;
/// Slack of the per-episode regret-decomposition check.
pub const DECOMPOSITION_TOL: f64 = 1e-9;
/// CSV rows between flushes.
pub const FLUSH_EVERY: usize = 50;
/// Version string baked in at build time.
pub const GIT_DESCRIBE: &str = env!("SKETCHRL_GIT_DESCRIBE");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("bad experiment config: {0}")]
    Config(String),
    #[error("regret fit needs at least {need} episodes, got {got}")]
    TooFewEpisodes { got: usize, need: usize },
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// Failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, HarnessError::Agent(AgentError::Approx(_)))
    }
}

/// Where the MDP comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MdpSource {
    Chain {
        n_states: usize,
        horizon: usize,
        slip: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        seed: u64,
        #[serde(default)]
        reward_sparsity: f64,
    },
    Gridworld {
        width: usize,
        height: usize,
        horizon: usize,
    },
    /// JSON file in the `EpisodicMdp` layout.
    File {
        path: PathBuf,
    },
    Inline {
        mdp: EpisodicMdp,
    },
}

impl MdpSource {
    /// The 5-state, horizon-5 chain with slip 0.1 used as the reference task.
    pub fn golden_chain() -> Self {
        MdpSource::Chain {
            n_states: 5,
            horizon: 5,
            slip: 0.1,
        }
    }

    pub fn build(&self) -> Result<EpisodicMdp, MdpError> {
        match self {
            MdpSource::Chain {
                n_states,
                horizon,
                slip,
            } => chain_mdp(*n_states, *horizon, *slip),
            MdpSource::Random {
                n_states,
                n_actions,
                horizon,
                seed,
                reward_sparsity,
            } => random_mdp(*n_states, *n_actions, *horizon, *seed, *reward_sparsity),
            MdpSource::Gridworld {
                width,
                height,
                horizon,
            } => gridworld(*width, *height, *horizon),
            MdpSource::File { path } => EpisodicMdp::load(path),
            MdpSource::Inline { mdp } => Ok(mdp.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AgentSpec {
    SfLsvi(PlanningConfig),
    LsviUcb(PlanningConfig),
    /// Uniformly random actions.
    Uniform,
    /// Always plays an optimal policy.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFlags {
    #[serde(default = "yes")]
    pub optimism_audit: bool,
    #[serde(default = "yes")]
    pub bonus_mass: bool,
}

fn yes() -> bool {
    true
}

impl Default for ReportFlags {
    fn default() -> Self {
        Self {
            optimism_audit: true,
            bonus_mass: true,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub agent: AgentSpec,
    /// Number of episodes `K`.
    pub episodes: usize,
    /// One independent run per entry.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub report: ReportFlags,
}

impl ExperimentConfig {
    /// Reads a config; a relative MDP file path is resolved against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let MdpSource::File { path: mdp_path } = &mut cfg.mdp {
            if mdp_path.is_relative() {
                if let Some(dir) = path.parent() {
                    *mdp_path = dir.join(&*mdp_path);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.episodes == 0 {
            return Err(HarnessError::Config("episodes must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(HarnessError::Config("seeds must be nonempty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(HarnessError::Config("seeds must be distinct".into()));
        }
        match &self.agent {
            AgentSpec::SfLsvi(c) | AgentSpec::LsviUcb(c) => c.validate()?,
            AgentSpec::Uniform | AgentSpec::Oracle => {}
        }
        Ok(())
    }
}

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index `k`.
    pub episode: usize,
    pub realized_return: f64,
    pub v_star: f64,
    pub v_pik: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    /// `Σ_h b^k_h(s^k_h, a^k_h)` along the episode.
    pub bonus_mass: f64,
    /// Visited steps with `Qᵏ_h < Q*_h − 1e-6`.
    pub optimism_violations: usize,
}

/// Per-run audit totals; `None` fields mean the agent has no `Qᵏ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunAudit {
    pub visited_steps: usize,
    pub optimism_violations: usize,
    pub optimism_violation_rate: Option<f64>,
    pub bonus_mass: f64,
    /// Episodes where `Σ_h [Qᵏ_h − r_h − P_h Vᵏ_{h+1}] ≤ Σ_h 2bᵏ_h` on the visited pairs.
    pub decomposition_satisfied: usize,
    pub decomposition_rate: Option<f64>,
    /// Largest `Σ surplus − Σ 2b` seen.
    pub max_decomposition_excess: Option<f64>,
    /// Confidence widths that fell back to zero on an empty region.
    pub empty_regions: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub episodes: Vec<EpisodeRecord>,
    pub audit: RunAudit,
}

impl RunRecord {
    pub fn cumulative_regret(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.cum_regret).collect()
    }

    pub fn final_regret(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.cum_regret)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    pub final_regret: f64,
    pub fit: Option<RegretFit>,
    pub audit: RunAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub git_describe: String,
    pub master_seed: u64,
    pub episodes: usize,
    /// Mean and standard error of `Reg(K)` across seeds.
    pub regret_mean: f64,
    pub regret_se: f64,
    /// Fit of the seed-averaged regret curve; absent below 100 episodes.
    pub fit: Option<RegretFit>,
    /// `Reg(K) / Reg(⌊K/2⌋)` of the seed-averaged curve.
    pub regret_ratio_half: Option<f64>,
    pub optimism_violation_rate: Option<f64>,
    pub decomposition_rate: Option<f64>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

/// Generator for one `(episode, step)` cell of one run. Step `H` of each
/// episode draws the initial state.
pub fn cell_rng(
    master_seed: u64,
    run_seed: u64,
    horizon: usize,
    episode: usize,
    step: usize,
) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&run_seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream((episode * (horizon + 1) + step) as u64);
    rng
}

/// Exact per-episode regret of a policy sequence.
pub fn compute_regret(
    mdp: &EpisodicMdp,
    policies: &[Policy],
    initial_states: &[usize],
) -> Result<Vec<EpisodeRecord>, HarnessError> {
    if policies.len() != initial_states.len() {
        return Err(HarnessError::Config("one initial state per policy".into()));
    }
    let (star, _) = optimal_values(mdp);
    let mut cum = 0.0;
    let mut out = Vec::with_capacity(policies.len());
    for (k, (pi, &s0)) in policies.iter().zip(initial_states).enumerate() {
        pi.validate(mdp)?;
        if s0 >= mdp.n_states() {
            return Err(HarnessError::Config(format!(
                "initial state {s0} out of range"
            )));
        }
        let v_pik = evaluate_policy(mdp, pi).v[0][s0];
        let inst = star.v[0][s0] - v_pik;
        cum += inst;
        out.push(EpisodeRecord {
            episode: k + 1,
            realized_return: f64::NAN,
            v_star: star.v[0][s0],
            v_pik,
            inst_regret: inst,
            cum_regret: cum,
            bonus_mass: 0.0,
            optimism_violations: 0,
        });
    }
    Ok(out)
}

enum Player {
    Learner(Box<Agent>),
    Fixed {
        policy: StochasticPolicy,
        values: ValueTables,
    },
}

/// Runs `cfg.episodes` episodes for one seed, streaming rows to `log`.
pub fn run_single(
    cfg: &ExperimentConfig,
    mdp: &EpisodicMdp,
    seed: u64,
    mut log: Option<&mut CsvLog>,
) -> Result<RunRecord, HarnessError> {
    let (n_s, n_a, n_h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let (star, pi_star) = optimal_values(mdp);
    let total_steps = cfg.episodes * n_h;
    let mut player = match &cfg.agent {
        AgentSpec::SfLsvi(c) => {
            Player::Learner(Box::new(Agent::new(c.clone(), n_s, n_a, n_h, total_steps)?))
        }
        AgentSpec::LsviUcb(c) => Player::Learner(Box::new(Agent::lsvi_ucb(
            c.clone(),
            n_s,
            n_a,
            n_h,
            total_steps,
        )?)),
        AgentSpec::Uniform => {
            let policy = StochasticPolicy::uniform(mdp);
            let values = evaluate_stochastic_policy(mdp, &policy);
            Player::Fixed { policy, values }
        }
        AgentSpec::Oracle => Player::Fixed {
            policy: StochasticPolicy::from_deterministic(mdp, &pi_star),
            values: star.clone(),
        },
    };

    let mut audit = RunAudit {
        visited_steps: 0,
        optimism_violations: 0,
        optimism_violation_rate: None,
        bonus_mass: 0.0,
        decomposition_satisfied: 0,
        decomposition_rate: None,
        max_decomposition_excess: None,
        empty_regions: 0,
    };
    let mut episodes = Vec::with_capacity(cfg.episodes);
    let mut cum = 0.0;
    let mut steps = Vec::with_capacity(n_h);
    for k in 0..cfg.episodes {
        let s0 = mdp.sample_initial(&mut cell_rng(cfg.master_seed, seed, n_h, k, n_h));
        let plan = match &mut player {
            Player::Learner(agent) => Some(agent.plan()?.clone()),
            Player::Fixed { .. } => None,
        };
        let v_pik = match (&plan, &player) {
            (Some(p), _) => evaluate_policy(mdp, &p.policy).v[0][s0],
            (None, Player::Fixed { values, .. }) => values.v[0][s0],
            (None, Player::Learner(_)) => unreachable!("learners always plan"),
        };

        steps.clear();
        let mut s = s0;
        let mut realized = 0.0;
        for h in 0..n_h {
            let mut rng = cell_rng(cfg.master_seed, seed, n_h, k, h);
            let a = match (&plan, &player) {
                (Some(p), _) => p.policy.action(h, s),
                (None, Player::Fixed { policy, .. }) => policy.sample(h, s, &mut rng),
                (None, Player::Learner(_)) => unreachable!("learners always plan"),
            };
            let r = mdp.reward(h, s, a);
            let s_next = mdp.sample_transition(h, s, a, &mut rng)?;
            realized += r;
            steps.push(Transition {
                episode: k,
                h,
                s,
                a,
                r,
                s_next,
            });
            s = s_next;
        }

        let mut bonus_mass = 0.0;
        let mut violations = 0;
        if let Some(p) = &plan {
            let mut surplus = 0.0;
            let mut two_b = 0.0;
            for t in &steps {
                let b = p.bonus[t.h][t.s][t.a];
                let q = p.q[t.h][t.s][t.a];
                bonus_mass += b;
                if cfg.report.optimism_audit && q < star.q[t.h][t.s][t.a] - OPTIMISM_TOL {
                    violations += 1;
                }
                surplus += q - mdp.backup(t.h, t.s, t.a, &p.v[t.h + 1]);
                two_b += 2.0 * b;
            }
            let excess = surplus - two_b;
            if excess <= DECOMPOSITION_TOL {
                audit.decomposition_satisfied += 1;
            }
            audit.max_decomposition_excess = Some(
                audit
                    .max_decomposition_excess
                    .map_or(excess, |m: f64| m.max(excess)),
            );
            audit.visited_steps += steps.len();
            audit.empty_regions += p.empty_regions;
        }
        if !cfg.report.bonus_mass {
            bonus_mass = 0.0;
        }
        audit.optimism_violations += violations;
        audit.bonus_mass += bonus_mass;

        if let Player::Learner(agent) = &mut player {
            for t in &steps {
                agent.record_transition(*t)?;
            }
        }

        let v_star = star.v[0][s0];
        let inst = v_star - v_pik;
        cum += inst;
        let row = EpisodeRecord {
            episode: k + 1,
            realized_return: realized,
            v_star,
            v_pik,
            inst_regret: inst,
            cum_regret: cum,
            bonus_mass,
            optimism_violations: violations,
        };
        if let Some(log) = log.as_deref_mut() {
            log.push(&row)?;
        }
        episodes.push(row);
    }
    if let Player::Learner(_) = player {
        if cfg.report.optimism_audit && audit.visited_steps > 0 {
            audit.optimism_violation_rate =
                Some(audit.optimism_violations as f64 / audit.visited_steps as f64);
        }
        audit.decomposition_rate = Some(audit.decomposition_satisfied as f64 / cfg.episodes as f64);
    }
    if let Some(log) = log {
        log.flush()?;
    }
    Ok(RunRecord {
        seed,
        episodes,
        audit,
    })
}

fn csv_name(seed: u64) -> String {
    format!("run_seed{seed}.csv")
}

/// Runs every seed in parallel, writes `run_seed<seed>.csv` files and
/// `summary.json` when an output directory is set, and returns the records.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, HarnessError> {
    cfg.validate()?;
    let mdp = cfg.mdp.build()?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
    }
    let results: Vec<Result<RunRecord, HarnessError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let mdp = &mdp;
                scope.spawn(move || -> Result<RunRecord, HarnessError> {
                    match &cfg.output_dir {
                        Some(dir) => {
                            let mut log = CsvLog::create(dir.join(csv_name(seed)))?;
                            run_single(cfg, mdp, seed, Some(&mut log))
                        }
                        None => run_single(cfg, mdp, seed, None),
                    }
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("run thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &runs);
    if let Some(dir) = &cfg.output_dir {
        emit_summary_json(&summary, dir.join("summary.json"))?;
    }
    Ok(ExperimentResult { runs, summary })
}

/// Aggregates runs into the summary.
pub fn summarize(cfg: &ExperimentConfig, runs: &[RunRecord]) -> Summary {
    let finals: Vec<f64> = runs.iter().map(RunRecord::final_regret).collect();
    let (regret_mean, regret_se) = mean_and_se(&finals);
    let k = cfg.episodes;
    let mean_curve: Vec<f64> = (0..k)
        .map(|i| runs.iter().map(|r| r.episodes[i].cum_regret).sum::<f64>() / runs.len() as f64)
        .collect();
    let half = mean_curve.get((k / 2).max(1) - 1).copied().unwrap_or(0.0);
    let regret_ratio_half = (half > 0.0).then(|| mean_curve[k - 1] / half);
    let pooled = |num: &dyn Fn(&RunAudit) -> Option<(usize, usize)>| -> Option<f64> {
        let parts: Option<Vec<(usize, usize)>> = runs.iter().map(|r| num(&r.audit)).collect();
        let (n, d) = parts?
            .into_iter()
            .fold((0, 0), |(a, b), (x, y)| (a + x, b + y));
        (d > 0).then(|| n as f64 / d as f64)
    };
    let optimism_violation_rate = pooled(&|a| {
        a.optimism_violation_rate
            .map(|_| (a.optimism_violations, a.visited_steps))
    });
    let decomposition_rate =
        pooled(&|a| a.decomposition_rate.map(|_| (a.decomposition_satisfied, k)));
    Summary {
        config: cfg.clone(),
        git_describe: GIT_DESCRIBE.to_string(),
        master_seed: cfg.master_seed,
        episodes: k,
        regret_mean,
        regret_se,
        fit: fit_regret_exponent(&mean_curve).ok(),
        regret_ratio_half,
        optimism_violation_rate,
        decomposition_rate,
        runs: runs
            .iter()
            .map(|r| RunSummary {
                seed: r.seed,
                csv: cfg.output_dir.as_ref().map(|_| csv_name(r.seed)),
                final_regret: r.final_regret(),
                fit: fit_regret_exponent(&r.cumulative_regret()).ok(),
                audit: r.audit,
            })
            .collect(),
    }
}
