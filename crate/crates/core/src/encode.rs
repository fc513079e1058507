//! Agent input encoding: the global map, optionally re-centred on the UAV,
//! plus the normalised remaining flight time.

use serde::{Deserialize, Serialize};

use crate::mdp::MdpState;
use crate::world::{Cell, Scenario};

/// Layer order inside an observation tensor.
pub const LAYER_START_LAND: usize = 0;
pub const LAYER_NFZ: usize = 1;
pub const LAYER_BUILDING: usize = 2;
pub const LAYER_AVAILABLE: usize = 3;
pub const LAYER_COLLECTED: usize = 4;
/// One-hot UAV position, present only in non-centred mode.
pub const LAYER_POSITION: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapMode {
    #[default]
    Centered,
    NonCentered,
}

impl MapMode {
    pub fn channels(self) -> usize {
        match self {
            MapMode::Centered => 5,
            MapMode::NonCentered => 6,
        }
    }
}

/// Normalisers for the data layers and the time input.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObsNorms {
    pub data: f64,
    pub flight_budget: u32,
}

/// Map tensor in height-width-channel order plus the time scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub side: usize,
    pub channels: usize,
    pub map: Vec<f32>,
    pub time: f32,
}

impl Observation {
    pub fn at(&self, row: usize, col: usize, layer: usize) -> f32 {
        self.map[(row * self.side + col) * self.channels + layer]
    }

    /// One channel as a `side x side` row-major grid.
    pub fn layer(&self, layer: usize) -> Vec<f32> {
        self.map.iter().skip(layer).step_by(self.channels).copied().collect()
    }
}

/// Translates an `m x m` layer into a `(2m-1) x (2m-1)` grid whose centre is
/// the UAV's cell. Entries with no source cell take `pad`.
pub fn center_layer(layer: &[f32], m: usize, uav: Cell, pad: f32) -> Vec<f32> {
    assert_eq!(layer.len(), m * m, "layer is not {m}x{m}");
    let side = 2 * m - 1;
    let mut out = vec![pad; side * side];
    let shift = m as i64 - 1;
    for row in 0..m {
        let out_row = row as i64 + shift - uav.y as i64;
        let out_col = shift - uav.x as i64;
        let dst = (out_row as usize) * side + out_col as usize;
        out[dst..dst + m].copy_from_slice(&layer[row * m..(row + 1) * m]);
    }
    out
}

fn pad_value(layer: usize) -> f32 {
    if layer == LAYER_NFZ {
        1.0
    } else {
        0.0
    }
}

/// Source layers of the agent's view, each `m x m`.
fn source_layers(state: &MdpState, scenario: &Scenario, mode: MapMode, norms: ObsNorms) -> Vec<Vec<f32>> {
    let map = &scenario.map;
    let m = map.size();
    let to_f = |layer: &[bool]| layer.iter().map(|&b| b as u8 as f32).collect::<Vec<f32>>();
    let mut available = vec![0f32; m * m];
    let mut collected = vec![0f32; m * m];
    for d in &state.devices {
        let i = map.index(d.cell);
        available[i] += (d.remaining() / norms.data) as f32;
        collected[i] += (d.collected / norms.data) as f32;
    }
    let mut layers =
        vec![to_f(map.start_land_layer()), to_f(map.nfz_layer()), to_f(map.building_layer()), available, collected];
    if mode == MapMode::NonCentered {
        let mut pos = vec![0f32; m * m];
        pos[map.index(state.uav_cell)] = 1.0;
        layers.push(pos);
    }
    layers
}

pub fn build_observation(state: &MdpState, scenario: &Scenario, mode: MapMode, norms: ObsNorms) -> Observation {
    let m = scenario.map.size();
    let side = 2 * m - 1;
    let layers = source_layers(state, scenario, mode, norms);
    let channels = layers.len();
    let framed: Vec<Vec<f32>> = layers
        .iter()
        .enumerate()
        .map(|(i, layer)| match mode {
            MapMode::Centered => center_layer(layer, m, state.uav_cell, pad_value(i)),
            // Non-centred maps sit in the top-left corner of the same frame.
            MapMode::NonCentered => center_layer(layer, m, Cell::new(m as i32 - 1, m as i32 - 1), pad_value(i)),
        })
        .collect();
    let mut map = vec![0f32; side * side * channels];
    for (c, layer) in framed.iter().enumerate() {
        for (p, &v) in layer.iter().enumerate() {
            map[p * channels + c] = v;
        }
    }
    let time = state.remaining_time as f32 / norms.flight_budget.max(1) as f32;
    Observation { side, channels, map, time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::reset;
    use crate::radio::ChannelParams;
    use crate::world::{load_map, Device, PhysicsConfig, MANHATTAN_MAP};
    use std::sync::Arc;

    fn ramp(m: usize) -> Vec<f32> {
        (0..m * m).map(|i| i as f32 + 1.0).collect()
    }

    #[test]
    fn corner_uav_translation() {
        let m = 16;
        let layer = ramp(m);
        let out = center_layer(&layer, m, Cell::new(0, 0), -1.0);
        let side = 31;
        assert_eq!(out[15 * side + 15], layer[0]);
        assert_eq!(out[30 * side + 30], layer[m * m - 1]);
        assert_eq!(out.iter().filter(|&&v| v == -1.0).count(), side * side - m * m);
    }

    #[test]
    fn odd_size_centre_is_symmetric() {
        let layer = ramp(5);
        let out = center_layer(&layer, 5, Cell::new(2, 2), 0.0);
        for r in 0..9 {
            for c in 0..9 {
                let inside = (2..7).contains(&r) && (2..7).contains(&c);
                assert_eq!(out[r * 9 + c] != 0.0, inside);
            }
        }
        assert_eq!(out[4 * 9 + 4], layer[12]);
    }

    #[test]
    fn translation_preserves_mass() {
        let ones = vec![1f32; 49];
        for (x, y) in [(0, 0), (6, 6), (3, 1), (0, 6)] {
            let out = center_layer(&ones, 7, Cell::new(x, y), 0.0);
            assert_eq!(out.iter().sum::<f32>(), 49.0);
        }
    }

    fn scenario() -> Scenario {
        let map = Arc::new(load_map(MANHATTAN_MAP).unwrap());
        Scenario {
            channel: ChannelParams::default(),
            map,
            devices: vec![Device::new(Cell::new(3, 3), 10.0), Device::new(Cell::new(12, 5), 20.0)],
            start_cell: Cell::new(0, 0),
            flight_budget: 70,
            physics: PhysicsConfig::default(),
        }
    }

    const NORMS: ObsNorms = ObsNorms { data: 20.0, flight_budget: 70 };

    #[test]
    fn data_layers_follow_ledger() {
        let s = scenario();
        let mut st = reset(&s);
        st.devices[0].collected = 10.0;
        st.devices[1].collected = 5.0;
        let obs = build_observation(&st, &s, MapMode::Centered, NORMS);
        // UAV at (0,0): source (x,y) maps to (row y+15, col x+15).
        assert_eq!(obs.at(18, 18, LAYER_AVAILABLE), 0.0);
        assert_eq!(obs.at(18, 18, LAYER_COLLECTED), 0.5);
        assert_eq!(obs.at(20, 27, LAYER_AVAILABLE), 0.75);
        assert_eq!(obs.at(20, 27, LAYER_COLLECTED), 0.25);
        assert_eq!(obs.time, 1.0);
        assert_eq!(obs.at(15, 15, LAYER_START_LAND), 1.0);
    }

    #[test]
    fn non_centered_layout() {
        let s = scenario();
        let mut st = reset(&s);
        st.uav_cell = Cell::new(3, 0);
        let obs = build_observation(&st, &s, MapMode::NonCentered, NORMS);
        assert_eq!(obs.channels, 6);
        assert_eq!(obs.side, 31);
        assert_eq!(obs.at(0, 3, LAYER_POSITION), 1.0);
        assert_eq!(obs.layer(LAYER_POSITION).iter().sum::<f32>(), 1.0);
        assert_eq!(obs.at(1, 4, LAYER_BUILDING), 1.0);
        assert_eq!(obs.at(20, 20, LAYER_NFZ), 1.0);
        assert_eq!(obs.at(3, 3, LAYER_AVAILABLE), 0.5);
    }
}
