//! Monte Carlo evaluation over randomized scenarios and trajectory export.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::mdp::Action;
use crate::trainer::{rollout, stream, Environment, EpisodeMetrics, Policy, Rollout, TrainError};
use crate::world::{Cell, Scenario};

/// Means over `episodes` completed evaluation episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub episodes: usize,
    pub seed: u64,
    pub has_landed: f64,
    pub collection_ratio: f64,
    pub collection_ratio_and_landed: f64,
    pub cumulative_reward: f64,
    /// Sample standard deviation of the cumulative reward (0 for one episode).
    pub cumulative_reward_std: f64,
}

impl AggregateMetrics {
    pub fn from_episodes(episodes: &[EpisodeMetrics], seed: u64) -> Self {
        let n = episodes.len();
        let mean = |f: fn(&EpisodeMetrics) -> f64| episodes.iter().map(f).sum::<f64>() / n as f64;
        let reward = mean(|m| m.cumulative_reward);
        let var = if n > 1 {
            episodes.iter().map(|m| (m.cumulative_reward - reward).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        AggregateMetrics {
            episodes: n,
            seed,
            has_landed: mean(|m| if m.has_landed { 1.0 } else { 0.0 }),
            collection_ratio: mean(|m| m.collection_ratio),
            collection_ratio_and_landed: mean(|m| m.collection_ratio_and_landed),
            cumulative_reward: reward,
            cumulative_reward_std: var.sqrt(),
        }
    }
}

/// Runs `episodes` independent episodes. Episode `i` draws its scenario and
/// channel from its own stream of `seed`, so results do not depend on the
/// order in which episodes are run.
pub fn monte_carlo(
    policy: &mut dyn Policy,
    env: &mut Environment,
    episodes: usize,
    seed: u64,
) -> Result<(AggregateMetrics, Vec<EpisodeMetrics>), TrainError> {
    if episodes == 0 {
        return Err(TrainError::Config("monte carlo needs at least one episode".into()));
    }
    let mut all = Vec::with_capacity(episodes);
    for i in 0..episodes {
        let mut rng = stream(seed, i as u64);
        let scenario = env.sample(&mut rng)?;
        let shadows = env.shadows_for(&scenario)?;
        all.push(rollout(policy, env, &scenario, &shadows, &mut rng)?.metrics);
    }
    Ok((AggregateMetrics::from_episodes(&all, seed), all))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub cell: Cell,
    pub initial_data: f64,
    pub collected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: u32,
    /// Position before the action.
    pub uav: Cell,
    pub action: Action,
    pub next: Cell,
    pub remaining_time: u32,
    pub sc_triggered: bool,
    /// Device scheduled in most communication slots of the step.
    pub scheduled_device: Option<usize>,
    pub throughput: f64,
    pub reward: f64,
}

/// One recorded episode: scenario, per-step log and outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub map_hash: String,
    pub map_size: usize,
    pub start: Cell,
    pub flight_budget: u32,
    pub seed: u64,
    pub devices: Vec<DeviceRecord>,
    pub steps: Vec<StepRecord>,
    pub metrics: EpisodeMetrics,
}

impl TrajectoryRecord {
    pub fn new(scenario: &Scenario, rollout: &Rollout, seed: u64) -> Self {
        let steps = rollout
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| StepRecord {
                step: i as u32,
                uav: s.state.uav_cell,
                action: s.action,
                next: s.outcome.next_state.uav_cell,
                remaining_time: s.state.remaining_time,
                sc_triggered: s.outcome.info.sc_triggered,
                scheduled_device: s.outcome.info.comm.dominant_device(),
                throughput: s.outcome.info.throughput,
                reward: s.outcome.reward,
            })
            .collect();
        let devices = rollout
            .final_state
            .devices
            .iter()
            .map(|d| DeviceRecord { cell: d.cell, initial_data: d.initial_data, collected: d.collected })
            .collect();
        TrajectoryRecord {
            map_hash: format!("{:016x}", scenario.map.content_hash()),
            map_size: scenario.map.size(),
            start: scenario.start_cell,
            flight_budget: scenario.flight_budget,
            seed,
            devices,
            steps,
            metrics: rollout.metrics,
        }
    }

    /// A JSON object with one step object per line inside `steps`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let value = serde_json::to_value(self)?;
        let serde_json::Value::Object(fields) = value else { unreachable!("record serializes to an object") };
        writeln!(w, "{{")?;
        let last = fields.len() - 1;
        for (i, (key, v)) in fields.iter().enumerate() {
            let sep = if i == last { "" } else { "," };
            match v {
                serde_json::Value::Array(items) if key == "steps" => {
                    writeln!(w, "  \"steps\": [")?;
                    for (j, item) in items.iter().enumerate() {
                        let comma = if j + 1 == items.len() { "" } else { "," };
                        writeln!(w, "    {item}{comma}")?;
                    }
                    writeln!(w, "  ]{sep}")?;
                }
                _ => writeln!(w, "  {}: {v}{sep}", serde_json::Value::String(key.clone()))?,
            }
        }
        writeln!(w, "}}")
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()
    }
}

/// Plays one episode of `scenario` with `policy` and records it.
pub fn export_trajectory(
    policy: &mut dyn Policy,
    env: &mut Environment,
    scenario: &Scenario,
    seed: u64,
) -> Result<TrajectoryRecord, TrainError> {
    let shadows = env.shadows_for(scenario)?;
    let mut rng = stream(seed, 0);
    let out = rollout(policy, env, scenario, &shadows, &mut rng)?;
    Ok(TrajectoryRecord::new(scenario, &out, seed))
}
