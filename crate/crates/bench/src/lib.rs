//! Shared fixtures for the criterion benches.

use sketchrl::agent::{Agent, PlanningConfig, Transition};
use sketchrl::mdp::{chain_mdp, EpisodicMdp};

/// The 5-state, horizon-5 chain with slip 0.1.
pub fn golden_chain() -> EpisodicMdp {
    chain_mdp(5, 5, 0.1).expect("valid chain")
}

/// An agent on `mdp` whose replay holds `episodes` episodes of a fixed
/// round-robin behaviour policy.
pub fn warm_agent(mdp: &EpisodicMdp, cfg: PlanningConfig, episodes: usize) -> Agent {
    let (n_s, n_a, n_h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let mut agent = Agent::new(cfg, n_s, n_a, n_h, 2000 * n_h).expect("valid config");
    for k in 0..episodes {
        let mut s = 0;
        for h in 0..n_h {
            let a = (k + h) % n_a;
            let s_next = mdp
                .transition(h, s, a)
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .map(|(i, _)| i)
                .expect("nonempty row");
            let t = Transition {
                episode: k,
                h,
                s,
                a,
                r: mdp.reward(h, s, a),
                s_next,
            };
            agent.record_transition(t).expect("valid transition");
            s = s_next;
        }
    }
    agent
}
