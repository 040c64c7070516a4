//! Distributional reinforcement learning through statistical functionals.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`]: finite episodic MDPs, exact optimal values, and exact return
//!   distributions (by backward recursion and by trajectory enumeration).
//! - [`sketch`]: statistical functionals of return distributions, the moment
//!   calculus (pushforward, mixture, normalisation) and sketch Bellman backups.
//! - [`verifier`]: empirical checks for mixture-consistency, Bellman
//!   closedness and Bellman unbiasedness of each sketch family.
//! - [`approx`]: vector-valued function classes, moment least-squares
//!   regression, confidence widths and eluder dimension.
//! - [`agent`]: moment least-squares value iteration with optimistic bonuses.
//! - [`harness`]: experiment configuration, episode loop and regret accounting.

pub mod agent;
pub mod approx;
pub mod distribution;
pub mod harness;
pub mod mdp;
pub mod sketch;
pub mod verifier;

pub use agent::{Agent, AgentError, PlanningConfig, Transition};
pub use distribution::{CategoricalDistribution, DistributionError};
pub use harness::{run_experiment, ExperimentConfig, HarnessError};
pub use mdp::{EpisodicMdp, MdpError, Policy, StochasticPolicy, ValueTables};
pub use sketch::{compute_sketch, Combiner, MomentSketch, SketchError, SketchSpec};
