//! Wireless channel: ray-traced line-of-sight fields, log-distance path loss
//! with shadow fading, TDMA scheduling and per-step throughput.

use std::collections::HashMap;
use std::io::{self, Read, Write};
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{Cell, Device, GridMap, Scenario};

#[derive(Debug, Error)]
pub enum RadioError {
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("device at {0} sits on a building cell")]
    DeviceOnBuilding(Cell),
    #[error("device at {0} is outside the grid")]
    DeviceOffGrid(Cell),
    #[error("invalid channel parameters: {0}")]
    Invalid(String),
    #[error("malformed shadow file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub sigma2_los: f64,
    pub sigma2_nlos: f64,
    /// Linear transmit-power-to-noise ratio, identical for all devices.
    pub tx_over_noise: f64,
    pub cell_edge_snr_db: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        let mut params = ChannelParams {
            alpha_los: 2.27,
            alpha_nlos: 3.64,
            sigma2_los: 2.0,
            sigma2_nlos: 5.0,
            tx_over_noise: 1.0,
            cell_edge_snr_db: -15.0,
        };
        // 16x16 grid of 10 m cells.
        params.tx_over_noise = tx_for_edge_distance(&params, 80.0 * std::f64::consts::SQRT_2);
        params
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.alpha_los >= 0.0 && self.alpha_nlos >= 0.0) {
            return Err(RadioError::Invalid("path-loss exponents must be non-negative".into()));
        }
        if !(self.sigma2_los >= 0.0 && self.sigma2_nlos >= 0.0) {
            return Err(RadioError::Invalid("shadowing variances must be non-negative".into()));
        }
        if !(self.tx_over_noise > 0.0 && self.tx_over_noise.is_finite()) {
            return Err(RadioError::Invalid("tx_over_noise must be positive".into()));
        }
        Ok(())
    }

    /// Copy with `tx_over_noise` calibrated to the map's cell-edge geometry.
    pub fn calibrated(&self, map: &GridMap) -> Self {
        ChannelParams { tx_over_noise: calibrate_power(map, self), ..self.clone() }
    }
}

/// Distance from the ground-level map centre to a grid corner.
pub fn cell_edge_distance(map: &GridMap) -> f64 {
    let half = map.size() as f64 * map.cell_edge() / 2.0;
    half * std::f64::consts::SQRT_2
}

fn tx_for_edge_distance(params: &ChannelParams, d_edge: f64) -> f64 {
    10f64.powf(params.cell_edge_snr_db / 10.0) * d_edge.powf(params.alpha_los)
}

/// Transmit-to-noise ratio that yields `cell_edge_snr_db` for an unobstructed
/// link (no shadowing) between the map centre on the ground and a grid corner.
pub fn calibrate_power(map: &GridMap, params: &ChannelParams) -> f64 {
    tx_for_edge_distance(params, cell_edge_distance(map))
}

/// Linear SNR averaged over small-scale fading; `eta_db` is the shadowing draw.
pub fn snr(params: &ChannelParams, distance: f64, los: bool, eta_db: f64) -> Result<f64, RadioError> {
    if !(distance > 0.0) {
        return Err(RadioError::NonPositiveDistance(distance));
    }
    let alpha = if los { params.alpha_los } else { params.alpha_nlos };
    Ok(params.tx_over_noise * distance.powf(-alpha) * 10f64.powf(eta_db / 10.0))
}

/// Shannon rate in bits per channel use.
pub fn rate(snr: f64) -> f64 {
    (1.0 + snr).log2()
}

/// Cells crossed by the segment between the centres of `a` and `b`,
/// endpoints included, in traversal order. A segment passing exactly
/// through a lattice corner also includes both cells touching that corner.
pub fn supercover(a: Cell, b: Cell) -> Vec<Cell> {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (nx, ny) = (dx.abs() as i64, dy.abs() as i64);
    let (sx, sy) = (dx.signum(), dy.signum());
    let mut p = a;
    let mut out = Vec::with_capacity((nx + ny + 1) as usize);
    out.push(p);
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        // Compares the parameters at which the segment crosses the next
        // vertical and horizontal grid lines.
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            out.push(p.offset(sx, 0));
            out.push(p.offset(0, sy));
            p = p.offset(sx, sy);
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            p = p.offset(sx, 0);
            ix += 1;
        } else {
            p = p.offset(0, sy);
            iy += 1;
        }
        out.push(p);
    }
    out
}

/// Line of sight between a UAV above `uav` and a ground device at `device`.
/// Buildings are full occluders; the two endpoint cells never block.
pub fn has_line_of_sight(map: &GridMap, uav: Cell, device: Cell) -> bool {
    supercover(uav, device).into_iter().filter(|&c| c != uav && c != device).all(|c| !map.is_building(c))
}

/// Per-device boolean grid: `true` where a UAV over that cell sees the device.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowField {
    pub map_hash: u64,
    pub size: usize,
    pub altitude: f64,
    pub device: Cell,
    los: Vec<bool>,
}

const SHADOW_MAGIC: &[u8; 8] = b"UAVSHDW\0";
const SHADOW_VERSION: u32 = 1;

impl ShadowField {
    pub fn los(&self, uav: Cell) -> bool {
        self.los[uav.y as usize * self.size + uav.x as usize]
    }

    pub fn grid(&self) -> &[bool] {
        &self.los
    }

    /// Writes one record. See `docs/formats.md` for the byte layout.
    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(SHADOW_MAGIC)?;
        w.write_all(&SHADOW_VERSION.to_le_bytes())?;
        w.write_all(&self.map_hash.to_le_bytes())?;
        w.write_all(&(self.size as u32).to_le_bytes())?;
        w.write_all(&self.altitude.to_le_bytes())?;
        w.write_all(&self.device.x.to_le_bytes())?;
        w.write_all(&self.device.y.to_le_bytes())?;
        let mut bits = vec![0u8; self.los.len().div_ceil(8)];
        for (i, &v) in self.los.iter().enumerate() {
            if v {
                bits[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bits)
    }

    /// Reads one record; `Ok(None)` on clean end of input.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<Self>, RadioError> {
        let mut magic = [0u8; 8];
        match r.read_exact(&mut magic) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        if &magic != SHADOW_MAGIC {
            return Err(RadioError::Format("bad magic".into()));
        }
        let version = u32::from_le_bytes(read_array(r)?);
        if version != SHADOW_VERSION {
            return Err(RadioError::Format(format!("unsupported version {version}")));
        }
        let map_hash = u64::from_le_bytes(read_array(r)?);
        let size = u32::from_le_bytes(read_array(r)?) as usize;
        let altitude = f64::from_le_bytes(read_array(r)?);
        let x = i32::from_le_bytes(read_array(r)?);
        let y = i32::from_le_bytes(read_array(r)?);
        let n = size * size;
        let mut bits = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut bits)?;
        let los = (0..n).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Some(ShadowField { map_hash, size, altitude, device: Cell::new(x, y), los }))
    }

    pub fn read_all<R: Read>(r: &mut R) -> Result<Vec<Self>, RadioError> {
        let mut out = Vec::new();
        while let Some(field) = Self::read_from(r)? {
            out.push(field);
        }
        Ok(out)
    }
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N], RadioError> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Ray-traces the line-of-sight field for one device.
pub fn compute_shadow_field(map: &GridMap, device: Cell, altitude: f64) -> Result<ShadowField, RadioError> {
    if !map.contains(device) {
        return Err(RadioError::DeviceOffGrid(device));
    }
    if map.is_building(device) {
        return Err(RadioError::DeviceOnBuilding(device));
    }
    let m = map.size();
    let los = (0..m * m).map(|i| has_line_of_sight(map, map.cell_at(i), device)).collect();
    Ok(ShadowField { map_hash: map.content_hash(), size: m, altitude, device, los })
}

/// Memoizes shadow fields by (map hash, device cell, altitude).
#[derive(Default, Debug)]
pub struct ShadowCache {
    fields: HashMap<(u64, Cell, u64), Arc<ShadowField>>,
}

impl ShadowCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, map: &GridMap, device: Cell, altitude: f64) -> Result<Arc<ShadowField>, RadioError> {
        let key = (map.content_hash(), device, altitude.to_bits());
        if let Some(f) = self.fields.get(&key) {
            return Ok(Arc::clone(f));
        }
        let field = Arc::new(compute_shadow_field(map, device, altitude)?);
        self.fields.insert(key, Arc::clone(&field));
        Ok(field)
    }

    pub fn insert(&mut self, field: ShadowField) {
        let key = (field.map_hash, field.device, field.altitude.to_bits());
        self.fields.insert(key, Arc::new(field));
    }

    /// Fields for every device of a scenario, in device order.
    pub fn for_scenario(&mut self, scenario: &Scenario) -> Result<Vec<Arc<ShadowField>>, RadioError> {
        scenario.devices.iter().map(|d| self.get(&scenario.map, d.cell, scenario.physics.altitude)).collect()
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }
}

/// One device's channel in one communication slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkSample {
    pub device: usize,
    pub snr: f64,
    pub rate: f64,
    pub scheduled: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CommOutcome {
    /// Data collected over the mission step.
    pub throughput: f64,
    /// Data collected from each device during this step.
    pub collected: Vec<f64>,
    /// One entry per communication slot, one sample per device.
    pub slots: Vec<Vec<LinkSample>>,
}

impl CommOutcome {
    /// Device that was scheduled in the most slots, if any.
    pub fn dominant_device(&self) -> Option<usize> {
        let mut counts = vec![0usize; self.collected.len()];
        for slot in &self.slots {
            for s in slot.iter().filter(|s| s.scheduled) {
                counts[s.device] += 1;
            }
        }
        let best = counts.iter().copied().max().unwrap_or(0);
        if best == 0 {
            None
        } else {
            counts.iter().position(|&c| c == best)
        }
    }
}

/// Simulates the communication slots of one mission step while the UAV moves
/// from `from` to `to`. Updates each device's `collected` ledger.
pub fn run_comm_step<R: Rng + ?Sized>(
    scenario: &Scenario,
    devices: &mut [Device],
    shadows: &[Arc<ShadowField>],
    from: Cell,
    to: Cell,
    rng: &mut R,
) -> CommOutcome {
    debug_assert_eq!(devices.len(), shadows.len());
    let map = &scenario.map;
    let params = &scenario.channel;
    let slots = scenario.physics.comm_slots_per_step.max(1) as usize;
    let h = scenario.physics.altitude;
    let (x0, y0) = map.center_m(from);
    let (x1, y1) = map.center_m(to);
    let fading_los = Normal::new(0.0, params.sigma2_los.sqrt()).expect("valid LoS variance");
    let fading_nlos = Normal::new(0.0, params.sigma2_nlos.sqrt()).expect("valid NLoS variance");

    let mut out = CommOutcome { collected: vec![0.0; devices.len()], ..Default::default() };
    for j in 0..slots {
        let f = (j as f64 + 0.5) / slots as f64;
        let (ux, uy) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let nearest = if f <= 0.5 { from } else { to };
        let mut samples = Vec::with_capacity(devices.len());
        let mut best: Option<(usize, f64)> = None;
        for (k, dev) in devices.iter().enumerate() {
            let los = shadows[k].los(nearest);
            let eta = if los { fading_los.sample(rng) } else { fading_nlos.sample(rng) };
            let (dx, dy) = map.center_m(dev.cell);
            let d = ((ux - dx).powi(2) + (uy - dy).powi(2) + h * h).sqrt();
            let s = snr(params, d, los, eta).expect("altitude keeps distance positive");
            if dev.remaining() > 0.0 && best.is_none_or(|(_, b)| s > b) {
                best = Some((k, s));
            }
            samples.push(LinkSample { device: k, snr: s, rate: rate(s), scheduled: false });
        }
        if let Some((k, _)) = best {
            samples[k].scheduled = true;
            let dev = &mut devices[k];
            let remaining = dev.remaining();
            let amount = samples[k].rate.min(remaining);
            if amount >= remaining {
                dev.collected = dev.initial_data;
            } else {
                dev.collected += amount;
            }
            out.collected[k] += amount;
            out.throughput += amount;
        }
        out.slots.push(samples);
    }
    out
}
