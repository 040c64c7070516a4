//! `sketchrl` command-line interface.
//!
//! Exit codes: 0 on success, 1 when `verify` disagrees with the golden table,
//! 2 on bad input or configuration, 3 on numerical failure.

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use serde_json::json;
use sketchrl::approx::{eluder_dimension, EluderMode, EnumeratedFunctionClass};
use sketchrl::harness::{run_experiment, ExperimentConfig, HarnessError};
use sketchrl::mdp::{exact_return_distribution, optimal_values};
use sketchrl::verifier::{
    classify_functionals, default_suite, region_table_json, ClassificationConfig,
};
use sketchrl::{compute_sketch, EpisodicMdp, Policy};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SEED_VAR: &str = "SKETCHRL_SEED";

#[derive(Parser)]
#[command(
    name = "sketchrl",
    version,
    about = "Statistical-functional distributional RL toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a regret experiment and write per-seed CSVs plus summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify the built-in sketches and compare with the golden region table.
    Verify {
        /// Where to write the full JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Monte Carlo repetitions of the unbiasedness check.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Exact return distribution of a policy, with its sketches.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Eluder dimension of an enumerated function class.
    Eluder {
        #[arg(long)]
        class: PathBuf,
        #[arg(long)]
        eps: f64,
        /// Exhaustive search (small classes only) instead of the greedy bound.
        #[arg(long)]
        exact: bool,
    },
    /// Optimal values and policy by backward induction.
    Optimal {
        #[arg(long)]
        mdp: PathBuf,
    },
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn config_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn numerical_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 3,
        error: error.into(),
    }
}

fn seed_override() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| config_err(anyhow!("{SEED_VAR}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

fn print_json(value: &serde_json::Value) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("plain data")
    );
}

fn load_mdp(path: &Path) -> Result<EpisodicMdp, Failure> {
    EpisodicMdp::load(path)
        .with_context(|| format!("loading MDP {}", path.display()))
        .map_err(config_err)
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<u8, Failure> {
    let mut cfg = ExperimentConfig::load(config).map_err(config_err)?;
    if let Some(seed) = seed_override()? {
        cfg.master_seed = seed;
    }
    if out.is_some() {
        cfg.output_dir = out;
    }
    let result = run_experiment(&cfg).map_err(|e| match e {
        e @ HarnessError::Agent(_) if e.is_numerical() => numerical_err(e),
        e => config_err(e),
    })?;
    print_json(&serde_json::to_value(&result.summary).map_err(numerical_err)?);
    Ok(0)
}

fn verify(out: Option<PathBuf>, trials: Option<usize>) -> Result<u8, Failure> {
    let mut cfg = ClassificationConfig::default();
    if let Some(seed) = seed_override()? {
        cfg.seed = seed;
    }
    if let Some(t) = trials {
        if t < 2 {
            return Err(config_err(anyhow!("--trials must be at least 2")));
        }
        cfg.trials = t;
    }
    let report = classify_functionals(&cfg).map_err(numerical_err)?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&report).map_err(numerical_err)? + "\n";
        std::fs::write(&path, text)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(config_err)?;
    }
    print!("{}", region_table_json(&report.region_table()));
    if report.matches_golden {
        eprintln!("region table matches the golden table");
        Ok(0)
    } else {
        eprintln!("region table differs from the golden table");
        Ok(1)
    }
}

fn oracle(mdp: &Path, policy: &Path) -> Result<u8, Failure> {
    let mdp = load_mdp(mdp)?;
    let pi = Policy::load(policy)
        .with_context(|| format!("loading policy {}", policy.display()))
        .map_err(config_err)?;
    let returns = exact_return_distribution(&mdp, &pi).map_err(config_err)?;
    let initial = returns.initial(&mdp).map_err(numerical_err)?;
    let mut sketches = Vec::new();
    for spec in default_suite() {
        let value = compute_sketch(&initial, &spec).map_err(numerical_err)?;
        sketches.push(json!({ "sketch": spec.name(), "value": value }));
    }
    print_json(&json!({
        "initial": initial,
        "mean": initial.mean(),
        "variance": initial.variance(),
        "sketches": sketches,
        "states": returns.state[0],
    }));
    Ok(0)
}

fn eluder(class: &Path, eps: f64, exact: bool) -> Result<u8, Failure> {
    if !(eps > 0.0) {
        return Err(config_err(anyhow!("--eps must be positive")));
    }
    let text = std::fs::read_to_string(class)
        .with_context(|| format!("reading {}", class.display()))
        .map_err(config_err)?;
    let class = EnumeratedFunctionClass::from_json(&text).map_err(config_err)?;
    let mode = if exact {
        EluderMode::Exact
    } else {
        EluderMode::Greedy
    };
    let dim = eluder_dimension(&class, eps, mode).map_err(config_err)?;
    print_json(&json!({ "eps": eps, "mode": mode, "members": class.len(), "dimension": dim }));
    Ok(0)
}

fn optimal(mdp: &Path) -> Result<u8, Failure> {
    let mdp = load_mdp(mdp)?;
    let (values, pi) = optimal_values(&mdp);
    print_json(&json!({
        "initial_value": values.initial_value(&mdp),
        "v_star": values.v,
        "q_star": values.q,
        "pi": pi.table(),
    }));
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Verify { out, trials } => verify(out, trials),
        Command::Oracle { mdp, policy } => oracle(&mdp, &policy),
        Command::Eluder { class, eps, exact } => eluder(&class, eps, exact),
        Command::Optimal { mdp } => optimal(&mdp),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(Failure { code, error }) => {
            log::debug!("exiting with code {code}");
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
