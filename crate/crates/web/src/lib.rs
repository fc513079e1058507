//! WebAssembly bindings for the browser demo in `www/`.

use harvest::encode::center_layer;
use harvest::radio::{compute_shadow_field, rate, snr, ChannelParams};
use harvest::world::{load_map, Cell, GridMap, MANHATTAN_MAP, OPEN_CITY_MAP, TOY_MAP};
use wasm_bindgen::prelude::*;

/// Cell codes returned by [`Demo::cells`].
const FREE: u8 = 0;
const START_LAND: u8 = 1;
const NFZ: u8 = 2;
const BUILDING: u8 = 3;

#[wasm_bindgen]
pub struct Demo {
    map: GridMap,
    channel: ChannelParams,
    altitude: f64,
}

#[wasm_bindgen]
impl Demo {
    /// `name` is `manhattan`, `open_city` or `toy`; anything else is parsed
    /// as map text.
    #[wasm_bindgen(constructor)]
    pub fn new(name: &str) -> Result<Demo, JsError> {
        let text = match name {
            "manhattan" => MANHATTAN_MAP,
            "open_city" => OPEN_CITY_MAP,
            "toy" => TOY_MAP,
            other => other,
        };
        let map = load_map(text).map_err(|e| JsError::new(&e.to_string()))?;
        let channel = ChannelParams::default().calibrated(&map);
        Ok(Demo { map, channel, altitude: 10.0 })
    }

    pub fn size(&self) -> usize {
        self.map.size()
    }

    pub fn set_altitude(&mut self, altitude: f64) {
        if altitude > 0.0 {
            self.altitude = altitude;
        }
    }

    /// Row-major cell codes: 0 free, 1 start/landing, 2 no-fly zone, 3 building.
    pub fn cells(&self) -> Vec<u8> {
        let m = self.map.size();
        (0..m * m)
            .map(|i| {
                let c = self.map.cell_at(i);
                if self.map.is_building(c) {
                    BUILDING
                } else if self.map.is_nfz(c) {
                    NFZ
                } else if self.map.is_start_land(c) {
                    START_LAND
                } else {
                    FREE
                }
            })
            .collect()
    }

    /// Row-major line-of-sight flags (1 = LoS) between a device at `(x, y)`
    /// and the UAV over each cell.
    pub fn shadow(&self, x: i32, y: i32) -> Result<Vec<u8>, JsError> {
        let field = compute_shadow_field(&self.map, Cell::new(x, y), self.altitude)
            .map_err(|e| JsError::new(&e.to_string()))?;
        Ok(field.grid().iter().map(|&b| b as u8).collect())
    }

    /// Rate of the device at `(x, y)` with the UAV hovering over each cell,
    /// without shadow fading.
    pub fn rate_map(&self, x: i32, y: i32) -> Result<Vec<f64>, JsError> {
        let device = Cell::new(x, y);
        let field = compute_shadow_field(&self.map, device, self.altitude).map_err(|e| JsError::new(&e.to_string()))?;
        let (dx, dy) = self.map.center_m(device);
        let h = self.altitude;
        let m = self.map.size();
        (0..m * m)
            .map(|i| {
                let uav = self.map.cell_at(i);
                let (ux, uy) = self.map.center_m(uav);
                let d = ((ux - dx).powi(2) + (uy - dy).powi(2) + h * h).sqrt();
                snr(&self.channel, d, field.los(uav), 0.0).map(rate).map_err(|e| JsError::new(&e.to_string()))
            })
            .collect()
    }

    /// One map layer (`building`, `nfz` or `start`) as the centred agent
    /// sees it from `(x, y)`: side `2m - 1`, row-major.
    pub fn centered(&self, layer: &str, x: i32, y: i32) -> Result<Vec<f32>, JsError> {
        let uav = Cell::new(x, y);
        if !self.map.contains(uav) {
            return Err(JsError::new("position is off the grid"));
        }
        let (source, pad) = match layer {
            "building" => (self.map.building_layer(), 0.0),
            "nfz" => (self.map.nfz_layer(), 1.0),
            "start" => (self.map.start_land_layer(), 0.0),
            other => return Err(JsError::new(&format!("unknown layer `{other}`"))),
        };
        let values: Vec<f32> = source.iter().map(|&b| b as u8 as f32).collect();
        Ok(center_layer(&values, self.map.size(), uav, pad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_codes_match_map() {
        let demo = Demo::new("toy").unwrap();
        let cells = demo.cells();
        assert_eq!(cells.len(), 100);
        assert_eq!(cells[0], START_LAND);
        assert_eq!(cells[2 * 10 + 3], BUILDING);
        assert_eq!(cells[3 * 10 + 7], NFZ);
        assert_eq!(cells[9 * 10 + 9], FREE);
    }

    #[test]
    fn rate_is_highest_above_device() {
        let demo = Demo::new("manhattan").unwrap();
        let rates = demo.rate_map(3, 5).unwrap();
        let best = rates.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(best, 5 * 16 + 3);
        let shadow = demo.shadow(3, 5).unwrap();
        assert_eq!(shadow[5 * 16 + 3], 1);
    }

    #[test]
    fn centered_view_has_uav_in_middle() {
        let demo = Demo::new("toy").unwrap();
        let v = demo.centered("start", 0, 0).unwrap();
        assert_eq!(v.len(), 19 * 19);
        assert_eq!(v[9 * 19 + 9], 1.0);
        let nfz = demo.centered("nfz", 0, 0).unwrap();
        assert_eq!(nfz[0], 1.0);
    }
}
