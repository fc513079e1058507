//! `harvest`: precompute shadow fields, train, evaluate and record rollouts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use harvest::nnet::Checkpoint;
use harvest::trainer::{stream, EpisodeKind, FixedPolicy, GreedyPolicy, Policy, RandomPolicy, TrainError};
use harvest::{export_trajectory, monte_carlo, run_training, Action, ConfigError, Environment, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "harvest", version, about = "UAV data harvesting with a double deep Q-network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config file.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the shadow fields of every possible device cell of the map.
    Shadow {
        #[command(flatten)]
        common: Common,
    },
    /// Train an agent; writes checkpoint.bin, trainlog.jsonl and config.toml into --out.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo evaluation over randomized scenarios.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyKind::Greedy)]
        policy: PolicyKind,
        /// Overrides `eval.episodes`.
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Record one episode on a scenario drawn from the seed.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = PolicyKind::Greedy)]
        policy: PolicyKind,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    /// Greedy actions of the checkpoint.
    Greedy,
    Random,
    Hover,
    Land,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(msg) => Failure::Config(msg),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, Environment), Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let env = config.environment()?;
    Ok((config, env))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Shadow { common } => shadow(&common),
        Command::Train { common } => train(&common),
        Command::Eval { common, checkpoint, policy, episodes } => {
            eval(&common, checkpoint.as_deref(), policy, episodes)
        }
        Command::Rollout { common, checkpoint, policy } => rollout(&common, checkpoint.as_deref(), policy),
    }
}

fn shadow(common: &Common) -> Result<(), Failure> {
    let (config, mut env) = load(common)?;
    let cells = config.scenario.fixed_device_cells.clone().unwrap_or_else(|| env.map.device_cells());
    let map = env.map.clone();
    let altitude = env.physics.altitude;
    let mut w = BufWriter::new(File::create(&common.out)?);
    for &cell in &cells {
        let field = env.shadow_cache().get(&map, cell, altitude).map_err(|e| Failure::Runtime(e.to_string()))?;
        field.write_to(&mut w)?;
    }
    w.flush()?;
    eprintln!("wrote {} shadow fields to {}", cells.len(), common.out.display());
    Ok(())
}

fn train(common: &Common) -> Result<(), Failure> {
    let (config, mut env) = load(common)?;
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("config.toml"), config.to_toml())?;
    let mut evals = Vec::new();
    let result = run_training(&mut env, &config.train, &config.net, config.seed, |record| {
        if record.kind == EpisodeKind::Eval {
            evals.push(record.metrics.cumulative_reward);
            if evals.len() % 10 == 0 {
                let tail = &evals[evals.len().saturating_sub(20)..];
                let mean = tail.iter().sum::<f64>() / tail.len() as f64;
                eprintln!(
                    "step {:>8}  episode {:>6}  eval reward (last {}) {:>8.3}",
                    record.step,
                    record.episode,
                    tail.len(),
                    mean
                );
            }
        }
    });
    let (ckpt, log) = match result {
        Ok(out) => out,
        Err(TrainError::Diverged { step, loss, checkpoint, log }) => {
            checkpoint.save(&common.out.join("checkpoint.bin")).map_err(|e| Failure::Runtime(e.to_string()))?;
            write_log(&common.out, &log, config.train.bin_width)?;
            return Err(Failure::Runtime(format!(
                "training diverged at step {step} (loss {loss}); last good checkpoint saved"
            )));
        }
        Err(e) => return Err(e.into()),
    };
    ckpt.save(&common.out.join("checkpoint.bin")).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_log(&common.out, &log, config.train.bin_width)?;
    eprintln!("trained {} steps; outputs in {}", log.steps, common.out.display());
    Ok(())
}

fn write_log(dir: &Path, log: &harvest::TrainLog, bin_width: u64) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(dir.join("trainlog.jsonl"))?);
    log.write_jsonl(&mut w, bin_width)?;
    w.flush()?;
    Ok(())
}

fn load_checkpoint(
    path: Option<&Path>,
    policy: PolicyKind,
    env: &mut Environment,
) -> Result<Option<Checkpoint>, Failure> {
    let Some(path) = path else {
        if policy == PolicyKind::Greedy {
            return Err(Failure::Config("the greedy policy needs --checkpoint".into()));
        }
        return Ok(None);
    };
    let ckpt = Checkpoint::load(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    env.adopt(&ckpt)?;
    Ok(Some(ckpt))
}

fn make_policy(kind: PolicyKind, ckpt: Option<&Checkpoint>) -> Box<dyn Policy + '_> {
    match (kind, ckpt) {
        (PolicyKind::Greedy, Some(c)) => Box::new(GreedyPolicy { net: &c.online }),
        (PolicyKind::Random, _) => Box::new(RandomPolicy),
        (PolicyKind::Hover, _) => Box::new(FixedPolicy(Action::Hover)),
        (PolicyKind::Land, _) => Box::new(FixedPolicy(Action::Land)),
        (PolicyKind::Greedy, None) => unreachable!("checked when loading"),
    }
}

#[derive(Serialize)]
struct EvalReport<'a> {
    aggregate: &'a harvest::AggregateMetrics,
    episodes: &'a [harvest::EpisodeMetrics],
}

fn eval(common: &Common, checkpoint: Option<&Path>, kind: PolicyKind, episodes: Option<usize>) -> Result<(), Failure> {
    let (config, mut env) = load(common)?;
    let episodes = episodes.unwrap_or(config.eval.episodes);
    if episodes == 0 {
        return Err(Failure::Config("--episodes must be positive".into()));
    }
    let ckpt = load_checkpoint(checkpoint, kind, &mut env)?;
    let mut policy = make_policy(kind, ckpt.as_ref());
    let (aggregate, all) = monte_carlo(policy.as_mut(), &mut env, episodes, config.seed)?;
    let report = serde_json::to_string_pretty(&EvalReport { aggregate: &aggregate, episodes: &all })
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(&common.out, report + "\n")?;
    println!(
        "episodes {}  has_landed {:.4}  collection_ratio {:.4}  collection_ratio_and_landed {:.4}  reward {:.3} (std {:.3})",
        aggregate.episodes,
        aggregate.has_landed,
        aggregate.collection_ratio,
        aggregate.collection_ratio_and_landed,
        aggregate.cumulative_reward,
        aggregate.cumulative_reward_std
    );
    Ok(())
}

fn rollout(common: &Common, checkpoint: Option<&Path>, kind: PolicyKind) -> Result<(), Failure> {
    let (config, mut env) = load(common)?;
    let ckpt = load_checkpoint(checkpoint, kind, &mut env)?;
    let mut policy = make_policy(kind, ckpt.as_ref());
    let scenario = env.sample(&mut stream(config.seed, u64::MAX))?;
    let record = export_trajectory(policy.as_mut(), &mut env, &scenario, config.seed)?;
    record.save(&common.out)?;
    println!(
        "steps {}  landed {}  collection_ratio {:.4}  reward {:.3}",
        record.steps.len(),
        record.metrics.has_landed,
        record.metrics.collection_ratio,
        record.metrics.cumulative_reward
    );
    Ok(())
}
