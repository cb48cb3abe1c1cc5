//! TOML scenario files.
//!
//! Every key is optional and falls back to [`ScenarioConfig::default`]. Power
//! and SINR values accept either a bare number (linear: watts or ratio) or a
//! string with a unit, e.g. `"30 dBm"`, `"-80 dBm"`, `"0.5 W"`, `"30 dB"`.
//! Angles accept radians or strings such as `"30 deg"`.
//!
//! ```toml
//! n_users = 3
//! bs_power_budget = "30 dBm"
//! sensing_sinr_min = "30 dB"
//! clutter_angles = ["-60 deg", "-30 deg", "30 deg", "60 deg"]
//!
//! [algorithm]
//! partial_max_iter = 1000
//! ```

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{db_to_linear, dbm_to_watts, linear_to_db, watts_to_dbm, AlgorithmParams, ScenarioConfig};

/// A number in linear units or a string with a unit suffix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Linear(f64),
    Text(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Power,
    Ratio,
    Angle,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::Power => "power (W, dBm)",
            Kind::Ratio => "ratio (dB)",
            Kind::Angle => "angle (rad, deg)",
        })
    }
}

impl Quantity {
    fn resolve(&self, kind: Kind, key: &str) -> Result<f64> {
        let s = match self {
            Quantity::Linear(v) => return Ok(*v),
            Quantity::Text(s) => s.trim(),
        };
        let split = s.find(|c: char| (c.is_alphabetic() || c == '°') && c != 'e' && c != 'E').unwrap_or(s.len());
        // "1e-3 W" keeps its exponent; a trailing unit starts at the first other letter.
        let (num, unit) = s.split_at(split);
        let value: f64 = num
            .trim()
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse number in {s:?}")))?;
        let unit = unit.trim();
        let out = match (kind, unit.to_ascii_lowercase().as_str()) {
            (Kind::Power, "dbm") => dbm_to_watts(value),
            (Kind::Power, "dbw") => db_to_linear(value),
            (Kind::Power, "w" | "") => value,
            (Kind::Power, "mw") => value * 1e-3,
            (Kind::Ratio, "db") => db_to_linear(value),
            (Kind::Ratio, "") => value,
            (Kind::Angle, "deg" | "°") => value.to_radians(),
            (Kind::Angle, "rad" | "") => value,
            _ => return Err(Error::InvalidConfig(format!("{key}: unit {unit:?} is not a {kind}"))),
        };
        Ok(out)
    }
}

/// On-disk form of [`ScenarioConfig`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_antennas: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_users: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clutter_angles: Option<Vec<Quantity>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_angle: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensing_distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reflection_magnitudes: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_cs_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_tx_power: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bs_power_budget: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power_bs: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power_cs: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cycles_per_bit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cpu_power_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user_weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antenna_spacing_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensing_sinr_min: Option<Quantity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<AlgorithmParams>,
}

impl ConfigFile {
    /// Applies the file on top of the defaults. When only `n_users` is given,
    /// the default per-user lists are cycled to that length.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = ScenarioConfig::default();
        if let Some(k) = self.n_users {
            cfg = cfg.with_users(k);
        }
        let q = |v: &Option<Quantity>, kind: Kind, key: &str, slot: &mut f64| -> Result<()> {
            if let Some(v) = v {
                *slot = v.resolve(kind, key)?;
            }
            Ok(())
        };
        if let Some(n) = self.n_antennas {
            cfg.n_antennas = n;
        }
        if let Some(a) = &self.clutter_angles {
            cfg.clutter_angles = a.iter().map(|x| x.resolve(Kind::Angle, "clutter_angles")).collect::<Result<_>>()?;
            if self.sensing_distances.is_none() {
                cfg.sensing_distances = vec![cfg.sensing_distances[0]; a.len() + 1];
            }
            if self.reflection_magnitudes.is_none() {
                cfg.reflection_magnitudes = vec![cfg.reflection_magnitudes[0]; a.len() + 1];
            }
        }
        q(&self.target_angle, Kind::Angle, "target_angle", &mut cfg.target_angle)?;
        if let Some(v) = &self.user_distances {
            cfg.user_distances = v.clone();
        }
        if let Some(v) = &self.sensing_distances {
            cfg.sensing_distances = v.clone();
        }
        if let Some(v) = &self.reflection_magnitudes {
            cfg.reflection_magnitudes = v.clone();
        }
        if let Some(v) = self.bs_cs_distance {
            cfg.bs_cs_distance = v;
        }
        q(&self.user_tx_power, Kind::Power, "user_tx_power", &mut cfg.user_tx_power)?;
        q(&self.bs_power_budget, Kind::Power, "bs_power_budget", &mut cfg.bs_power_budget)?;
        q(&self.noise_power_bs, Kind::Power, "noise_power_bs", &mut cfg.noise_power_bs)?;
        q(&self.noise_power_cs, Kind::Power, "noise_power_cs", &mut cfg.noise_power_cs)?;
        if let Some(v) = self.bandwidth {
            cfg.bandwidth = v;
        }
        if let Some(v) = self.cycles_per_bit {
            cfg.cycles_per_bit = v;
        }
        if let Some(v) = self.cpu_power_factor {
            cfg.cpu_power_factor = v;
        }
        if let Some(v) = &self.user_weights {
            cfg.user_weights = v.clone();
        }
        if let Some(v) = self.antenna_spacing_ratio {
            cfg.antenna_spacing_ratio = v;
        }
        q(&self.sensing_sinr_min, Kind::Ratio, "sensing_sinr_min", &mut cfg.sensing_sinr_min)?;
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(a) = &self.algorithm {
            cfg.algorithm = a.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full description of `cfg` with powers in dBm, the SINR in dB and angles in degrees.
    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        let dbm = |w: f64| Some(Quantity::Text(format!("{} dBm", watts_to_dbm(w))));
        let deg = |r: f64| Quantity::Text(format!("{} deg", r.to_degrees()));
        Self {
            n_antennas: Some(cfg.n_antennas),
            n_users: Some(cfg.n_users),
            clutter_angles: Some(cfg.clutter_angles.iter().map(|&a| deg(a)).collect()),
            target_angle: Some(deg(cfg.target_angle)),
            user_distances: Some(cfg.user_distances.clone()),
            sensing_distances: Some(cfg.sensing_distances.clone()),
            reflection_magnitudes: Some(cfg.reflection_magnitudes.clone()),
            bs_cs_distance: Some(cfg.bs_cs_distance),
            user_tx_power: dbm(cfg.user_tx_power),
            bs_power_budget: dbm(cfg.bs_power_budget),
            noise_power_bs: dbm(cfg.noise_power_bs),
            noise_power_cs: dbm(cfg.noise_power_cs),
            bandwidth: Some(cfg.bandwidth),
            cycles_per_bit: Some(cfg.cycles_per_bit),
            cpu_power_factor: Some(cfg.cpu_power_factor),
            user_weights: Some(cfg.user_weights.clone()),
            antenna_spacing_ratio: Some(cfg.antenna_spacing_ratio),
            sensing_sinr_min: Some(Quantity::Text(format!("{} dB", linear_to_db(cfg.sensing_sinr_min)))),
            seed: Some(cfg.seed),
            algorithm: Some(cfg.algorithm.clone()),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    file.resolve()
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn config_to_toml(cfg: &ScenarioConfig) -> Result<String> {
    toml::to_string(&ConfigFile::from_config(cfg)).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn save_config(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    std::fs::write(path, config_to_toml(cfg)?)?;
    Ok(())
}
