//! Run configuration read from TOML. Every table is optional; missing keys
//! take the built-in defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::MapMode;
use crate::mdp::RewardParams;
use crate::nnet::{NetParams, TrainConfig};
use crate::radio::ChannelParams;
use crate::trainer::{Environment, TrainError};
use crate::world::{load_map, GridMap, PhysicsConfig, RandomizationRanges, MANHATTAN_MAP, OPEN_CITY_MAP, TOY_MAP};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Which map to fly on: one of the built-in maps or a map file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapConfig {
    /// `manhattan`, `open_city` or `toy`; ignored when `path` is set.
    pub name: String,
    /// Map file, relative paths resolved against the config file.
    pub path: Option<PathBuf>,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { name: "manhattan".into(), path: None }
    }
}

impl MapConfig {
    pub fn load(&self) -> Result<GridMap, ConfigError> {
        let text = match &self.path {
            Some(path) => {
                std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.clone(), source })?
            }
            None => match self.name.as_str() {
                "manhattan" => MANHATTAN_MAP.to_string(),
                "open_city" => OPEN_CITY_MAP.to_string(),
                "toy" => TOY_MAP.to_string(),
                other => return Err(ConfigError::Invalid(format!("unknown built-in map `{other}`"))),
            },
        };
        load_map(&text).map_err(|e| ConfigError::Invalid(format!("map: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationConfig {
    pub mode: MapMode,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        ObservationConfig { mode: MapMode::Centered }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Monte Carlo episodes for `eval`.
    pub episodes: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 1000 }
    }
}

/// Channel constants plus whether `tx_over_noise` is derived from the map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub alpha_los: f64,
    pub alpha_nlos: f64,
    pub sigma2_los: f64,
    pub sigma2_nlos: f64,
    /// Used as given when `calibrate` is false.
    pub tx_over_noise: f64,
    pub cell_edge_snr_db: f64,
    /// Recompute `tx_over_noise` from `cell_edge_snr_db` for the chosen map.
    pub calibrate: bool,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        ChannelConfig {
            alpha_los: p.alpha_los,
            alpha_nlos: p.alpha_nlos,
            sigma2_los: p.sigma2_los,
            sigma2_nlos: p.sigma2_nlos,
            tx_over_noise: p.tx_over_noise,
            cell_edge_snr_db: p.cell_edge_snr_db,
            calibrate: true,
        }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams {
            alpha_los: self.alpha_los,
            alpha_nlos: self.alpha_nlos,
            sigma2_los: self.sigma2_los,
            sigma2_nlos: self.sigma2_nlos,
            tx_over_noise: self.tx_over_noise,
            cell_edge_snr_db: self.cell_edge_snr_db,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub map: MapConfig,
    pub scenario: RandomizationRanges,
    pub physics: PhysicsConfig,
    pub channel: ChannelConfig,
    pub reward: RewardParams,
    pub observation: ObservationConfig,
    pub net: NetParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a config file; a relative map path is taken relative to it.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml(&text)?;
        if let (Some(map), Some(dir)) = (&config.map.path, path.parent()) {
            if map.is_relative() {
                config.map.path = Some(dir.join(map));
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every section and builds the environment it describes.
    pub fn environment(&self) -> Result<Environment, ConfigError> {
        let map = self.map.load()?;
        self.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.eval.episodes == 0 {
            return Err(ConfigError::Invalid("eval.episodes must be positive".into()));
        }
        let env = Environment::new(
            map,
            self.scenario.clone(),
            self.physics.clone(),
            self.channel.params(),
            self.reward.clone(),
            self.observation.mode,
            self.channel.calibrate,
        )
        .map_err(|e| match e {
            TrainError::Config(msg) => ConfigError::Invalid(msg),
            other => ConfigError::Invalid(other.to_string()),
        })?;
        crate::nnet::Architecture::new(&self.net, env.input_shape(), crate::mdp::Action::COUNT)
            .map_err(|e| ConfigError::Invalid(format!("net: {e}")))?;
        Ok(env)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.gamma, 0.95);
        assert_eq!(c.scenario.flight_budget, [35, 70]);
        assert!(c.environment().is_ok());
    }

    #[test]
    fn defaults_survive_a_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_override() {
        let c = RunConfig::from_toml(
            "seed = 9\n[map]\nname = \"toy\"\n[train]\ngamma = 0.5\n[observation]\nmode = \"non_centered\"\n\
             [channel]\ncell_edge_snr_db = -10.0\n[scenario]\nfixed_device_cells = [{x = 6, y = 1}]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.train.gamma, 0.5);
        assert_eq!(c.train.batch_size, 128);
        assert_eq!(c.observation.mode, MapMode::NonCentered);
        assert_eq!(c.channel.cell_edge_snr_db, -10.0);
        assert_eq!(c.channel.alpha_los, 2.27);
        let env = c.environment().unwrap();
        assert_eq!(env.map.size(), 10);
        assert_eq!(env.input_shape().channels, 6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(matches!(RunConfig::from_toml("[train]\ngama = 1.0"), Err(ConfigError::Parse(_))));
        assert!(matches!(RunConfig::from_toml("[train]\ngamma = \"x\""), Err(ConfigError::Parse(_))));
        for text in [
            "[train]\ngamma = 1.5",
            "[map]\nname = \"atlantis\"",
            "[scenario]\nflight_budget = [10, 5]",
            "[reward]\ncrash = 3.0",
            "[physics]\ncomm_slots_per_step = 0",
            "[net]\nconv = [{filters = 4, kernel = 40, stride = 1}]",
            "[eval]\nepisodes = 0",
        ] {
            let c = RunConfig::from_toml(text).unwrap();
            assert!(matches!(c.environment(), Err(ConfigError::Invalid(_))), "{text}");
        }
    }
}
