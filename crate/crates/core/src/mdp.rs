//! Finite-horizon mission MDP: safety controller, transitions and rewards.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::radio::{run_comm_step, CommOutcome, ShadowField};
use crate::world::{Cell, Device, GridMap, Scenario};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    North,
    East,
    South,
    West,
    Hover,
    Land,
}

impl Action {
    pub const COUNT: usize = 6;
    pub const ALL: [Action; Action::COUNT] =
        [Action::North, Action::East, Action::South, Action::West, Action::Hover, Action::Land];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    /// Grid displacement; zero for hover and land.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::North => (0, -1),
            Action::East => (1, 0),
            Action::South => (0, 1),
            Action::West => (-1, 0),
            Action::Hover | Action::Land => (0, 0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::North => "north",
            Action::East => "east",
            Action::South => "south",
            Action::West => "west",
            Action::Hover => "hover",
            Action::Land => "land",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL.into_iter().find(|a| a.name() == s).ok_or_else(|| format!("unknown action {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MdpState {
    pub uav_cell: Cell,
    pub remaining_time: u32,
    pub devices: Vec<Device>,
    pub landed: bool,
    pub terminal: bool,
}

impl MdpState {
    pub fn collected_total(&self) -> f64 {
        self.devices.iter().map(|d| d.collected).sum()
    }

    pub fn initial_total(&self) -> f64 {
        self.devices.iter().map(|d| d.initial_data).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardParams {
    pub data_scale: f64,
    pub safety: f64,
    pub movement: f64,
    pub crash: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        RewardParams { data_scale: 1.0, safety: -1.0, movement: -0.2, crash: -3.0 }
    }
}

impl RewardParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.data_scale > 0.0) {
            return Err("reward.data_scale must be positive".into());
        }
        if self.safety > 0.0 || self.movement > 0.0 || self.crash > 0.0 {
            return Err("reward penalties must be <= 0".into());
        }
        Ok(())
    }
}

/// Individual reward terms of one step; they sum to the step reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    pub data: f64,
    pub safety: f64,
    pub movement: f64,
    pub crash: f64,
}

impl RewardParts {
    pub fn total(&self) -> f64 {
        self.data + self.safety + self.movement + self.crash
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepInfo {
    pub throughput: f64,
    pub sc_triggered: bool,
    pub crashed: bool,
    pub parts: RewardParts,
    pub comm: CommOutcome,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: MdpState,
    pub reward: f64,
    pub terminal: bool,
    pub info: StepInfo,
}

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("cannot step a terminal state")]
    Terminal,
    #[error("no flight time left")]
    OutOfTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Safety {
    Allowed,
    Blocked,
}

pub fn reset(scenario: &Scenario) -> MdpState {
    MdpState {
        uav_cell: scenario.start_cell,
        remaining_time: scenario.flight_budget,
        devices: scenario.devices.iter().map(|d| Device { collected: 0.0, ..d.clone() }).collect(),
        landed: false,
        terminal: false,
    }
}

/// Safety controller: moves into buildings, NFZs or off the grid are
/// blocked; landing is only possible on start/landing cells.
pub fn safety_check(map: &GridMap, uav: Cell, action: Action) -> Safety {
    let ok = match action {
        Action::Hover => true,
        Action::Land => map.is_start_land(uav),
        _ => {
            let (dx, dy) = action.delta();
            map.is_flyable(uav.offset(dx, dy))
        }
    };
    if ok {
        Safety::Allowed
    } else {
        Safety::Blocked
    }
}

pub fn step<R: Rng + ?Sized>(
    state: &MdpState,
    action: Action,
    scenario: &Scenario,
    shadows: &[Arc<ShadowField>],
    reward: &RewardParams,
    rng: &mut R,
) -> Result<StepOutcome, MdpError> {
    if state.terminal {
        return Err(MdpError::Terminal);
    }
    if state.remaining_time == 0 {
        return Err(MdpError::OutOfTime);
    }
    let blocked = safety_check(&scenario.map, state.uav_cell, action) == Safety::Blocked;
    let mut next = state.clone();
    let mut info = StepInfo { sc_triggered: blocked, ..Default::default() };

    if action == Action::Land && !blocked {
        next.landed = true;
        next.terminal = true;
        return Ok(StepOutcome { next_state: next, reward: 0.0, terminal: true, info });
    }

    let effective = if blocked { Action::Hover } else { action };
    let (dx, dy) = effective.delta();
    let target = state.uav_cell.offset(dx, dy);
    let comm = run_comm_step(scenario, &mut next.devices, shadows, state.uav_cell, target, rng);
    next.uav_cell = target;
    next.remaining_time -= 1;
    let crashed = next.remaining_time == 0;
    next.terminal = crashed;

    info.throughput = comm.throughput;
    info.crashed = crashed;
    info.parts = RewardParts {
        data: reward.data_scale * comm.throughput,
        safety: if blocked { reward.safety } else { 0.0 },
        movement: reward.movement,
        crash: if crashed { reward.crash } else { 0.0 },
    };
    info.comm = comm;
    Ok(StepOutcome { reward: info.parts.total(), next_state: next, terminal: crashed, info })
}
