//! Grid maps, devices and randomized mission scenarios.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::radio::ChannelParams;

/// The 16x16 Manhattan-style city with regular blocks and an NFZ district.
pub const MANHATTAN_MAP: &str = include_str!("../maps/manhattan16.txt");
/// The 16x16 map with an open field next to a small city.
pub const OPEN_CITY_MAP: &str = include_str!("../maps/open_city16.txt");
/// Small 10x10 map used for fast training runs.
pub const TOY_MAP: &str = include_str!("../maps/toy10.txt");

/// Integer grid coordinates. `x` is the column, `y` the row; north is `-y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Cell::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map is empty")]
    Empty,
    #[error("malformed header line: {0:?}")]
    BadHeader(String),
    #[error("row {row} has {found} columns, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("header declares size {declared} but grid is {rows}x{cols}")]
    SizeMismatch { declared: usize, rows: usize, cols: usize },
    #[error("unknown character {ch:?} at row {row}, column {col}")]
    UnknownChar { row: usize, col: usize, ch: char },
    #[error("cell at row {row}, column {col} is both start/landing and {other}")]
    Overlap { row: usize, col: usize, other: &'static str },
    #[error("layer shapes differ from {size}x{size}")]
    LayerShape { size: usize },
    #[error("map has no start/landing cell")]
    NoStartCell,
    #[error("cell edge must be positive, got {0}")]
    BadCellEdge(f64),
}

/// Static environment: three boolean layers over an `size x size` grid,
/// stored row-major (`y * size + x`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    size: usize,
    cell_edge: f64,
    start_land: Vec<bool>,
    nfz: Vec<bool>,
    building: Vec<bool>,
}

impl GridMap {
    pub fn from_layers(
        size: usize,
        cell_edge: f64,
        start_land: Vec<bool>,
        nfz: Vec<bool>,
        building: Vec<bool>,
    ) -> Result<Self, MapError> {
        if size == 0 {
            return Err(MapError::Empty);
        }
        if !(cell_edge > 0.0 && cell_edge.is_finite()) {
            return Err(MapError::BadCellEdge(cell_edge));
        }
        let n = size * size;
        if start_land.len() != n || nfz.len() != n || building.len() != n {
            return Err(MapError::LayerShape { size });
        }
        for i in 0..n {
            let (row, col) = (i / size, i % size);
            if start_land[i] && building[i] {
                return Err(MapError::Overlap { row, col, other: "building" });
            }
            if start_land[i] && nfz[i] {
                return Err(MapError::Overlap { row, col, other: "no-fly zone" });
            }
        }
        if !start_land.iter().any(|&s| s) {
            return Err(MapError::NoStartCell);
        }
        Ok(GridMap { size, cell_edge, start_land, nfz, building })
    }

    /// Parses the ASCII map format: an optional `size M cell E` header
    /// followed by rows over the alphabet `.` free, `B` building,
    /// `N` no-fly zone, `L` start/landing.
    pub fn parse(text: &str) -> Result<Self, MapError> {
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).peekable();
        let mut declared = None;
        let mut cell_edge = 10.0;
        if let Some(first) = lines.peek() {
            if first.starts_with("size") {
                let header = lines.next().unwrap();
                let (m, e) = parse_header(header)?;
                declared = Some(m);
                cell_edge = e;
            }
        }
        let rows: Vec<&str> = lines.collect();
        if rows.is_empty() {
            return Err(MapError::Empty);
        }
        let cols = rows[0].chars().count();
        for (row, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != cols {
                return Err(MapError::NonRectangular { row, expected: cols, found });
            }
        }
        if rows.len() != cols || declared.is_some_and(|m| m != cols) {
            return Err(MapError::SizeMismatch { declared: declared.unwrap_or(cols), rows: rows.len(), cols });
        }
        let n = cols * cols;
        let mut start_land = vec![false; n];
        let mut nfz = vec![false; n];
        let mut building = vec![false; n];
        for (row, line) in rows.iter().enumerate() {
            for (col, ch) in line.chars().enumerate() {
                let i = row * cols + col;
                match ch {
                    '.' => {}
                    'B' => building[i] = true,
                    'N' => nfz[i] = true,
                    'L' => start_land[i] = true,
                    _ => return Err(MapError::UnknownChar { row, col, ch }),
                }
            }
        }
        GridMap::from_layers(cols, cell_edge, start_land, nfz, building)
    }

    /// Inverse of [`GridMap::parse`], header included.
    pub fn to_text(&self) -> String {
        let mut out = format!("size {} cell {}\n", self.size, self.cell_edge);
        for y in 0..self.size {
            for x in 0..self.size {
                let i = y * self.size + x;
                out.push(if self.building[i] {
                    'B'
                } else if self.nfz[i] {
                    'N'
                } else if self.start_land[i] {
                    'L'
                } else {
                    '.'
                });
            }
            out.push('\n');
        }
        out
    }

    /// Stable content hash (first 8 bytes of SHA-256 over the canonical text).
    pub fn content_hash(&self) -> u64 {
        let digest = Sha256::digest(self.to_text().as_bytes());
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn cell_edge(&self) -> f64 {
        self.cell_edge
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.size && (c.y as usize) < self.size
    }

    /// Row-major index of an in-grid cell.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.contains(c));
        c.y as usize * self.size + c.x as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.size) as i32, (index / self.size) as i32)
    }

    pub fn is_building(&self, c: Cell) -> bool {
        self.contains(c) && self.building[self.index(c)]
    }

    pub fn is_nfz(&self, c: Cell) -> bool {
        self.contains(c) && self.nfz[self.index(c)]
    }

    pub fn is_start_land(&self, c: Cell) -> bool {
        self.contains(c) && self.start_land[self.index(c)]
    }

    /// True when the UAV may occupy the cell.
    pub fn is_flyable(&self, c: Cell) -> bool {
        self.contains(c) && !self.building[self.index(c)] && !self.nfz[self.index(c)]
    }

    pub fn start_land_layer(&self) -> &[bool] {
        &self.start_land
    }

    pub fn nfz_layer(&self) -> &[bool] {
        &self.nfz
    }

    pub fn building_layer(&self) -> &[bool] {
        &self.building
    }

    pub fn start_cells(&self) -> Vec<Cell> {
        (0..self.size * self.size).filter(|&i| self.start_land[i]).map(|i| self.cell_at(i)).collect()
    }

    /// Cells eligible for device placement: neither building nor start/landing.
    pub fn device_cells(&self) -> Vec<Cell> {
        (0..self.size * self.size)
            .filter(|&i| !self.building[i] && !self.start_land[i])
            .map(|i| self.cell_at(i))
            .collect()
    }

    /// Cell centre in metres on the ground plane.
    pub fn center_m(&self, c: Cell) -> (f64, f64) {
        ((c.x as f64 + 0.5) * self.cell_edge, (c.y as f64 + 0.5) * self.cell_edge)
    }
}

fn parse_header(line: &str) -> Result<(usize, f64), MapError> {
    let bad = || MapError::BadHeader(line.to_string());
    let parts: Vec<&str> = line.split_whitespace().collect();
    match parts.as_slice() {
        ["size", m] => Ok((m.parse().map_err(|_| bad())?, 10.0)),
        ["size", m, "cell", e] => Ok((m.parse().map_err(|_| bad())?, e.parse().map_err(|_| bad())?)),
        _ => Err(bad()),
    }
}

/// Loads a map from its text representation.
pub fn load_map(text: &str) -> Result<GridMap, MapError> {
    GridMap::parse(text)
}

/// Ground-level IoT device and its data ledger.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub cell: Cell,
    pub initial_data: f64,
    pub collected: f64,
}

impl Device {
    pub fn new(cell: Cell, initial_data: f64) -> Self {
        Device { cell, initial_data, collected: 0.0 }
    }

    pub fn remaining(&self) -> f64 {
        self.initial_data - self.collected
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Flight altitude in metres.
    pub altitude: f64,
    /// Communication slots per mission step.
    pub comm_slots_per_step: u32,
    /// Nominal speed in m/s. Only sets the time scale.
    pub velocity: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig { altitude: 10.0, comm_slots_per_step: 4, velocity: 10.0 }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.comm_slots_per_step < 1 {
            return Err(ScenarioError::Invalid("comm_slots_per_step must be >= 1".into()));
        }
        if !(self.altitude > 0.0) {
            return Err(ScenarioError::Invalid("altitude must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("only {free} free cells available for {wanted} devices")]
    NotEnoughCells { free: usize, wanted: usize },
    #[error("no start cells to choose from")]
    NoStartCells,
}

/// Ranges that randomized scenarios are drawn from. Intervals are inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomizationRanges {
    pub device_count: [usize; 2],
    pub data: [f64; 2],
    pub flight_budget: [u32; 2],
    /// Candidate start cells; empty means every start/landing cell of the map.
    pub start_cells: Vec<Cell>,
    /// Pins device positions; the device count is then the list length.
    pub fixed_device_cells: Option<Vec<Cell>>,
}

impl Default for RandomizationRanges {
    fn default() -> Self {
        RandomizationRanges {
            device_count: [2, 5],
            data: [5.0, 20.0],
            flight_budget: [35, 70],
            start_cells: Vec::new(),
            fixed_device_cells: None,
        }
    }
}

impl RandomizationRanges {
    /// Start cells resolved against a map.
    pub fn resolved_start_cells(&self, map: &GridMap) -> Vec<Cell> {
        if self.start_cells.is_empty() {
            map.start_cells()
        } else {
            self.start_cells.clone()
        }
    }

    pub fn validate(&self, map: &GridMap) -> Result<(), ScenarioError> {
        let [kmin, kmax] = self.device_count;
        if kmin > kmax {
            return Err(ScenarioError::Invalid(format!("device_count [{kmin}, {kmax}] is empty")));
        }
        let [dmin, dmax] = self.data;
        if !(dmin >= 0.0 && dmin <= dmax && dmax.is_finite()) {
            return Err(ScenarioError::Invalid(format!("data [{dmin}, {dmax}] is not a valid interval")));
        }
        let [bmin, bmax] = self.flight_budget;
        if bmin < 1 || bmin > bmax {
            return Err(ScenarioError::Invalid(format!("flight_budget [{bmin}, {bmax}] is not a valid interval")));
        }
        let starts = self.resolved_start_cells(map);
        if starts.is_empty() {
            return Err(ScenarioError::NoStartCells);
        }
        if let Some(c) = starts.iter().find(|c| !map.is_start_land(**c)) {
            return Err(ScenarioError::Invalid(format!("start cell {c} is not a start/landing cell")));
        }
        if let Some(cells) = &self.fixed_device_cells {
            let unique: BTreeSet<_> = cells.iter().collect();
            if unique.len() != cells.len() {
                return Err(ScenarioError::Invalid("fixed device cells contain duplicates".into()));
            }
            if let Some(c) = cells.iter().find(|c| !map.contains(**c) || map.is_building(**c)) {
                return Err(ScenarioError::Invalid(format!("fixed device cell {c} is off-grid or a building")));
            }
        }
        Ok(())
    }

    /// Largest flight budget; used to normalise the remaining-time input.
    pub fn max_flight_budget(&self) -> u32 {
        self.flight_budget[1]
    }

    /// Largest device data amount; used to normalise the data layers.
    pub fn data_norm(&self) -> f64 {
        if self.data[1] > 0.0 {
            self.data[1]
        } else {
            1.0
        }
    }
}

/// One mission instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub map: Arc<GridMap>,
    pub devices: Vec<Device>,
    pub start_cell: Cell,
    pub flight_budget: u32,
    pub physics: PhysicsConfig,
    pub channel: ChannelParams,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.physics.validate()?;
        if !self.map.is_start_land(self.start_cell) {
            return Err(ScenarioError::Invalid(format!("start cell {} is not a start/landing cell", self.start_cell)));
        }
        if self.flight_budget < 1 {
            return Err(ScenarioError::Invalid("flight budget must be >= 1".into()));
        }
        for d in &self.devices {
            if !self.map.contains(d.cell) || self.map.is_building(d.cell) {
                return Err(ScenarioError::Invalid(format!("device at {} is off-grid or on a building", d.cell)));
            }
            if !(d.initial_data >= 0.0 && d.collected >= 0.0 && d.collected <= d.initial_data) {
                return Err(ScenarioError::Invalid(format!("device at {} has an invalid data ledger", d.cell)));
            }
        }
        Ok(())
    }

    pub fn total_initial_data(&self) -> f64 {
        self.devices.iter().map(|d| d.initial_data).sum()
    }
}

/// Draws a scenario: device count, device cells (without replacement),
/// per-device data, flight budget and start cell, in that order.
pub fn sample_scenario<R: Rng + ?Sized>(
    map: &Arc<GridMap>,
    ranges: &RandomizationRanges,
    physics: &PhysicsConfig,
    channel: &ChannelParams,
    rng: &mut R,
) -> Result<Scenario, ScenarioError> {
    ranges.validate(map)?;
    physics.validate()?;
    let starts = ranges.resolved_start_cells(map);
    let cells: Vec<Cell> = match &ranges.fixed_device_cells {
        Some(fixed) => fixed.clone(),
        None => {
            let k = rng.random_range(ranges.device_count[0]..=ranges.device_count[1]);
            let free = map.device_cells();
            if free.len() < k {
                return Err(ScenarioError::NotEnoughCells { free: free.len(), wanted: k });
            }
            index::sample(rng, free.len(), k).into_iter().map(|i| free[i]).collect()
        }
    };
    let devices = cells
        .into_iter()
        .map(|cell| {
            let [lo, hi] = ranges.data;
            let d0 = if lo == hi { lo } else { rng.random_range(lo..=hi) };
            Device::new(cell, d0)
        })
        .collect();
    let flight_budget = rng.random_range(ranges.flight_budget[0]..=ranges.flight_budget[1]);
    let start_cell = starts[rng.random_range(0..starts.len())];
    Ok(Scenario {
        map: Arc::clone(map),
        devices,
        start_cell,
        flight_budget,
        physics: physics.clone(),
        channel: channel.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_two_by_two() {
        let map = load_map("L.\n.B").unwrap();
        assert_eq!(map.size(), 2);
        assert_eq!(map.cell_edge(), 10.0);
        assert_eq!(map.start_cells(), vec![Cell::new(0, 0)]);
        assert!(map.is_building(Cell::new(1, 1)));
        assert!(!map.nfz_layer().iter().any(|&b| b));
        assert!(!map.is_flyable(Cell::new(1, 1)));
    }

    #[test]
    fn shipped_maps_are_valid() {
        for text in [MANHATTAN_MAP, OPEN_CITY_MAP] {
            let map = load_map(text).unwrap();
            assert_eq!(map.size(), 16);
            assert_eq!(map.start_cells().len(), 8);
            assert!(map.nfz_layer().iter().any(|&b| b));
            assert!(map.building_layer().iter().any(|&b| b));
        }
        let toy = load_map(TOY_MAP).unwrap();
        assert_eq!(toy.size(), 10);
    }

    #[test]
    fn overlapping_layers_are_rejected() {
        let mut start = vec![false; 4];
        let mut building = vec![false; 4];
        start[1] = true;
        building[1] = true;
        let err = GridMap::from_layers(2, 10.0, start.clone(), vec![false; 4], building).unwrap_err();
        assert_eq!(err, MapError::Overlap { row: 0, col: 1, other: "building" });
        let mut nfz = vec![false; 4];
        nfz[1] = true;
        let err = GridMap::from_layers(2, 10.0, start, nfz, vec![false; 4]).unwrap_err();
        assert!(matches!(err, MapError::Overlap { other: "no-fly zone", .. }));
    }

    #[test]
    fn parse_errors_carry_positions() {
        assert_eq!(load_map("L..\n.B").unwrap_err(), MapError::NonRectangular { row: 1, expected: 3, found: 2 });
        assert_eq!(load_map("L.\n.X").unwrap_err(), MapError::UnknownChar { row: 1, col: 1, ch: 'X' });
        assert_eq!(load_map("..\n.B").unwrap_err(), MapError::NoStartCell);
        assert!(matches!(load_map("size 3 cell 10\nL.\n.."), Err(MapError::SizeMismatch { .. })));
        assert!(matches!(load_map("size x\nL.\n.."), Err(MapError::BadHeader(_))));
        assert_eq!(load_map("\n\n").unwrap_err(), MapError::Empty);
    }

    #[test]
    fn header_sets_cell_edge() {
        let map = load_map("size 2 cell 2.5\nL.\n..").unwrap();
        assert_eq!(map.cell_edge(), 2.5);
        assert_eq!(load_map(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn degenerate_ranges_give_exact_values() {
        let map = Arc::new(load_map(MANHATTAN_MAP).unwrap());
        let ranges = RandomizationRanges {
            device_count: [2, 2],
            data: [10.0, 10.0],
            flight_budget: [50, 50],
            start_cells: vec![Cell::new(0, 0)],
            fixed_device_cells: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_scenario(&map, &ranges, &PhysicsConfig::default(), &ChannelParams::default(), &mut rng).unwrap();
        assert_eq!(s.devices.len(), 2);
        assert!(s.devices.iter().all(|d| d.initial_data == 10.0 && d.collected == 0.0));
        assert_eq!(s.flight_budget, 50);
        assert_eq!(s.start_cell, Cell::new(0, 0));
        assert_ne!(s.devices[0].cell, s.devices[1].cell);
    }

    #[test]
    fn sampling_is_deterministic() {
        let map = Arc::new(load_map(MANHATTAN_MAP).unwrap());
        let ranges = RandomizationRanges::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_scenario(&map, &ranges, &PhysicsConfig::default(), &ChannelParams::default(), &mut rng).unwrap()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn sampling_errors() {
        let map = Arc::new(load_map("L.\n.B").unwrap());
        let ranges = RandomizationRanges { device_count: [3, 3], ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err =
            sample_scenario(&map, &ranges, &PhysicsConfig::default(), &ChannelParams::default(), &mut rng).unwrap_err();
        assert_eq!(err, ScenarioError::NotEnoughCells { free: 2, wanted: 3 });

        let ranges = RandomizationRanges { start_cells: vec![Cell::new(1, 0)], ..Default::default() };
        assert!(ranges.validate(&map).is_err());
    }

    #[test]
    fn fixed_device_cells_pin_positions() {
        let map = Arc::new(load_map(TOY_MAP).unwrap());
        let cells = vec![Cell::new(6, 1), Cell::new(2, 5)];
        let ranges = RandomizationRanges {
            device_count: [2, 2],
            data: [10.0, 10.0],
            flight_budget: [25, 25],
            start_cells: vec![],
            fixed_device_cells: Some(cells.clone()),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_scenario(&map, &ranges, &PhysicsConfig::default(), &ChannelParams::default(), &mut rng).unwrap();
        assert_eq!(s.devices.iter().map(|d| d.cell).collect::<Vec<_>>(), cells);
        assert!(map.is_start_land(s.start_cell));
    }
}
