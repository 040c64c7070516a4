use super::*;
use crate::mdp::{exact_return_distribution, optimal_values, random_mdp, EpisodicMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn deterministic_mdp(n_s: usize, n_a: usize, n_h: usize, seed: u64) -> EpisodicMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = Vec::new();
    let mut r = Vec::new();
    for _ in 0..n_h {
        let mut ph = Vec::new();
        let mut rh = Vec::new();
        for _ in 0..n_s {
            let mut ps = Vec::new();
            let mut rs = Vec::new();
            for _ in 0..n_a {
                let mut row = vec![0.0; n_s];
                row[rng.random_range(0..n_s)] = 1.0;
                ps.push(row);
                rs.push((rng.random_range(0..=4) as f64) / 4.0);
            }
            ph.push(ps);
            rh.push(rs);
        }
        p.push(ph);
        r.push(rh);
    }
    let mut init = vec![0.0; n_s];
    init[0] = 1.0;
    EpisodicMdp::new(p, r, init, n_s, n_a, n_h).unwrap()
}

fn exact_cfg(n: usize) -> PlanningConfig {
    PlanningConfig {
        n,
        lambda: 1e-9,
        c_scale: 0.0,
        ..PlanningConfig::default()
    }
}

/// Records one transition per `(h, s, a)`; exact for deterministic MDPs.
fn sweep(agent: &mut Agent, mdp: &EpisodicMdp) {
    for h in 0..mdp.horizon() {
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                let s_next = mdp
                    .transition(h, s, a)
                    .iter()
                    .position(|&p| p == 1.0)
                    .unwrap();
                agent
                    .record_transition(Transition {
                        episode: 0,
                        h,
                        s,
                        a,
                        r: mdp.reward(h, s, a),
                        s_next,
                    })
                    .unwrap();
            }
        }
    }
}

#[test]
fn config_parses_the_documented_form() {
    let cfg: PlanningConfig = serde_json::from_str(
        r#"{"N":2,"lambda":1.0,"c_scale":0.5,"delta":0.05,"class":{"kind":"tabular_onehot"}}"#,
    )
    .unwrap();
    assert_eq!(cfg.n, 2);
    assert_eq!(cfg.c_scale, 0.5);
    assert_eq!(cfg.class, ClassSpec::TabularOnehot { shared: false });
    assert!(!cfg.per_step_dataset && !cfg.inflate_higher_moments);
    let bad = PlanningConfig { n: 0, ..cfg };
    assert!(matches!(bad.validate(), Err(AgentError::Config(_))));
}

#[test]
fn transitions_are_validated() {
    let mut agent = Agent::new(PlanningConfig::default(), 2, 2, 3, 30).unwrap();
    let t = Transition {
        episode: 0,
        h: 0,
        s: 0,
        a: 0,
        r: 1.5,
        s_next: 1,
    };
    assert_eq!(
        agent.record_transition(t),
        Err(AgentError::RewardOutOfRange { h: 0, r: 1.5 })
    );
    let t = Transition {
        r: 0.5,
        s_next: 2,
        ..t
    };
    assert!(matches!(
        agent.record_transition(t),
        Err(AgentError::IndexOutOfRange(_))
    ));
    assert!(agent.replay().is_empty());
    assert_eq!(agent.act(0, 0), Err(AgentError::NoPlan));
}

#[test]
fn exact_data_recovers_optimal_values_and_moments() {
    for seed in 0..5 {
        let mdp = deterministic_mdp(3, 2, 4, seed);
        let mut agent = Agent::new(exact_cfg(3), 3, 2, 4, 100).unwrap();
        sweep(&mut agent, &mdp);
        let plan = agent.plan().unwrap().clone();
        let (star, _) = optimal_values(&mdp);
        let h_f = mdp.horizon() as f64;
        let returns = exact_return_distribution(&mdp, &plan.policy).unwrap();
        for h in 0..mdp.horizon() {
            for s in 0..3 {
                for a in 0..2 {
                    assert!((plan.q[h][s][a] - star.q[h][s][a]).abs() < 1e-6);
                }
                assert!((plan.v[h][s] - star.v[h][s]).abs() < 1e-6);
                let dist = &returns.state[h][s];
                let m2: f64 = dist.iter().map(|(x, p)| p * x * x).sum();
                let m3: f64 = dist.iter().map(|(x, p)| p * x * x * x).sum();
                assert!(
                    (plan.psi_v[h][s][1] - m2 / h_f).abs() < 1e-6,
                    "seed {seed} h {h} s {s}"
                );
                assert!((plan.psi_v[h][s][2] - m3 / (h_f * h_f)).abs() < 1e-6);
                assert_eq!(plan.psi_v[h][s][0], plan.v[h][s]);
            }
        }
    }
}

#[test]
fn stochastic_data_converges_to_optimal_values() {
    let mdp = random_mdp(3, 2, 3, 11, 0.3).unwrap();
    let mut agent = Agent::new(
        PlanningConfig {
            c_scale: 0.0,
            lambda: 1e-6,
            ..PlanningConfig::default()
        },
        3,
        2,
        3,
        100,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..4000 {
        for h in 0..3 {
            for s in 0..3 {
                for a in 0..2 {
                    let s_next = mdp.sample_transition(h, s, a, &mut rng).unwrap();
                    agent
                        .record_transition(Transition {
                            episode: 0,
                            h,
                            s,
                            a,
                            r: mdp.reward(h, s, a),
                            s_next,
                        })
                        .unwrap();
                }
            }
        }
    }
    let plan = agent.plan().unwrap();
    let (star, _) = optimal_values(&mdp);
    for h in 0..3 {
        for s in 0..3 {
            assert!((plan.v[h][s] - star.v[h][s]).abs() < 0.05);
        }
    }
}

#[test]
fn bonus_is_optimistic_and_clipped() {
    let mut agent = Agent::new(
        PlanningConfig {
            c_scale: 1.0,
            ..PlanningConfig::default()
        },
        2,
        2,
        3,
        300,
    )
    .unwrap();
    let plan = agent.plan().unwrap();
    assert!(plan.beta > 0.0);
    for h in 0..3 {
        for s in 0..2 {
            for a in 0..2 {
                assert_eq!(plan.q[h][s][a], 3.0);
                assert!((plan.bonus[h][s][a] - 2.0 * plan.beta.sqrt()).abs() < 1e-9);
                assert_eq!(plan.psi_q[h][s][a][1], 0.0);
            }
        }
    }
    assert_eq!(plan.policy.action(0, 0), 0);
}

#[test]
fn first_output_does_not_depend_on_n() {
    let mdp = random_mdp(3, 2, 3, 5, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut one = Agent::lsvi_ucb(
        PlanningConfig {
            c_scale: 0.0,
            ..PlanningConfig::default()
        },
        3,
        2,
        3,
        300,
    )
    .unwrap();
    let mut two = Agent::new(
        PlanningConfig {
            c_scale: 0.0,
            n: 4,
            ..PlanningConfig::default()
        },
        3,
        2,
        3,
        300,
    )
    .unwrap();
    assert_eq!(one.config().n, 1);
    for _ in 0..50 {
        let h = rng.random_range(0..3);
        let s = rng.random_range(0..3);
        let a = rng.random_range(0..2);
        let t = Transition {
            episode: 0,
            h,
            s,
            a,
            r: mdp.reward(h, s, a),
            s_next: mdp.sample_transition(h, s, a, &mut rng).unwrap(),
        };
        one.record_transition(t).unwrap();
        two.record_transition(t).unwrap();
    }
    let q1 = lsvi_ucb_plan(&mut one).unwrap().q.clone();
    let q2 = sf_lsvi_plan(&mut two).unwrap().q.clone();
    for (a, b) in q1
        .iter()
        .flatten()
        .flatten()
        .zip(q2.iter().flatten().flatten())
    {
        assert!((a - b).abs() < 1e-12);
    }
    assert!(matches!(
        lsvi_ucb_plan(&mut two),
        Err(AgentError::Config(_))
    ));
}

#[test]
fn gram_cache_matches_replay() {
    let mdp = random_mdp(2, 2, 2, 1, 0.0).unwrap();
    for per_step in [false, true] {
        let cfg = PlanningConfig {
            per_step_dataset: per_step,
            class: ClassSpec::TabularOnehot { shared: true },
            ..PlanningConfig::default()
        };
        let mut agent = Agent::new(cfg, 2, 2, 2, 100).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..40 {
            let (h, s, a) = (
                rng.random_range(0..2),
                rng.random_range(0..2),
                rng.random_range(0..2),
            );
            let t = Transition {
                episode: 0,
                h,
                s,
                a,
                r: 0.0,
                s_next: mdp.sample_transition(h, s, a, &mut rng).unwrap(),
            };
            agent.record_transition(t).unwrap();
        }
        for h in 0..2 {
            let mut want = DMatrix::<f64>::identity(4, 4);
            for t in agent.replay().iter().filter(|t| !per_step || t.h == h) {
                want[(t.s * 2 + t.a, t.s * 2 + t.a)] += 1.0;
            }
            assert_eq!(agent.gram(h).unwrap(), &want);
        }
    }
}

#[test]
fn replay_round_trips_through_json() {
    let t = vec![Transition {
        episode: 3,
        h: 1,
        s: 0,
        a: 1,
        r: 0.25,
        s_next: 2,
    }];
    let text = serde_json::to_string(&t).unwrap();
    assert_eq!(serde_json::from_str::<Vec<Transition>>(&text).unwrap(), t);
}

#[test]
fn enumerated_class_bandit() {
    // One state, two arms, three candidate mean vectors.
    let raw = RawEnumeratedClass(
        [[0.2, 0.9], [0.2, 0.1], [0.6, 0.1]]
            .iter()
            .map(|m| vec![vec![vec![vec![m[0]], vec![m[1]]]]])
            .collect(),
    );
    let cfg = PlanningConfig {
        n: 1,
        class: ClassSpec::Enumerated { members: raw },
        log_cover: Some(0.0),
        c_scale: 0.0001,
        ..PlanningConfig::default()
    };
    let mut agent = Agent::new(cfg, 1, 2, 1, 10).unwrap();
    for _ in 0..4 {
        agent
            .record_transition(Transition {
                episode: 0,
                h: 0,
                s: 0,
                a: 0,
                r: 0.2,
                s_next: 0,
            })
            .unwrap();
    }
    let plan = agent.plan().unwrap();
    // Arm 0 pins members 0 and 1; arm 1 is uncertain between 0.9 and 0.1.
    assert!((plan.bonus[0][0][1] - 0.8).abs() < 1e-12);
    assert_eq!(plan.bonus[0][0][0], 0.0);
    assert!((plan.q[0][0][1] - 1.0).abs() < 1e-12);
    assert_eq!(agent.act(0, 0), Ok(1));

    let bad = PlanningConfig {
        n: 2,
        ..agent.config().clone()
    };
    assert!(matches!(
        Agent::new(bad, 1, 2, 1, 10),
        Err(AgentError::Config(_))
    ));
}
