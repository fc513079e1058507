//! UAV data harvesting in a grid city: map and scenario generation, a
//! LoS/NLoS channel with TDMA scheduling, the mission MDP, map-centred
//! observations, a double deep Q-network agent with combined experience
//! replay, and a Monte Carlo evaluation harness.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod encode;
pub mod harness;
pub mod mdp;
pub mod nnet;
pub mod radio;
pub mod replay;
pub mod trainer;
pub mod world;

pub use config::{ConfigError, RunConfig};
pub use encode::{build_observation, center_layer, MapMode, ObsNorms, Observation};
pub use harness::{export_trajectory, monte_carlo, AggregateMetrics, TrajectoryRecord};
pub use mdp::{reset, safety_check, step, Action, MdpState, RewardParams, Safety, StepOutcome};
pub use radio::{
    calibrate_power, compute_shadow_field, rate, run_comm_step, snr, ChannelParams, ShadowCache, ShadowField,
};
pub use replay::{ReplayMemory, Transition};
pub use trainer::{evaluate_episode, rollout, run_training, Environment, EpisodeMetrics, Policy, TrainLog};
pub use world::{load_map, sample_scenario, Cell, Device, GridMap, PhysicsConfig, RandomizationRanges, Scenario};
