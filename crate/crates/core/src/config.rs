//! Experiment configuration file (TOML).
//!
//! Sections: `[world]`, `[dqn]` (with `[dqn.epsilon]`), `[tabular]` (with
//! `[tabular.epsilon]`) and `[eval]`. Every key is optional; omitted keys take
//! the defaults documented in `configs/default.toml`. Unknown keys are
//! rejected so typos do not silently fall back to defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::Position3;
use crate::dqn::DqnParams;
use crate::error::{Error, Result};
use crate::tabular::QLearnParams;
use crate::world::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub episodes: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { episodes: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub world: WorldConfig,
    pub dqn: DqnParams,
    pub tabular: QLearnParams,
    pub eval: EvalParams,
}

/// `[world]` as written in the file; derived defaults are filled in after
/// parsing because they depend on other keys.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WorldSection {
    ue_pos: Option<Position3>,
    eve_pos: Option<Position3>,
    uav_start: Option<Position3>,
    altitude: Option<f64>,
    bounds: Option<(f64, f64)>,
    grid_step: Option<f64>,
    p_max: Option<f64>,
    p1: Option<f64>,
    initial_power: Option<f64>,
    zeta0_over_sigma2: Option<f64>,
    slots: Option<usize>,
    random_start: Option<bool>,
    observe_power: Option<bool>,
}

impl WorldSection {
    fn resolve(self) -> WorldConfig {
        let d = WorldConfig::default();
        let altitude = self.altitude.unwrap_or(d.altitude);
        let p_max = self.p_max.unwrap_or(d.p_max);
        WorldConfig {
            ue_pos: self.ue_pos.unwrap_or(d.ue_pos),
            eve_pos: self.eve_pos.unwrap_or(d.eve_pos),
            uav_start: self.uav_start.unwrap_or(Position3 {
                z: altitude,
                ..d.uav_start
            }),
            altitude,
            bounds: self.bounds.unwrap_or(d.bounds),
            grid_step: self.grid_step.unwrap_or(d.grid_step),
            p_max,
            p1: self.p1.unwrap_or(p_max / 10.0),
            initial_power: self.initial_power.unwrap_or(p_max / 2.0),
            zeta0_over_sigma2: self.zeta0_over_sigma2.unwrap_or(d.zeta0_over_sigma2),
            slots: self.slots.unwrap_or(d.slots),
            random_start: self.random_start.unwrap_or(d.random_start),
            observe_power: self.observe_power.unwrap_or(d.observe_power),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    world: WorldSection,
    dqn: DqnParams,
    tabular: QLearnParams,
    eval: EvalParams,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.world.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("world.{field}"),
                reason,
            },
            e => e,
        })?;
        self.dqn.validate()?;
        self.tabular.validate()?;
        if self.eval.episodes == 0 {
            return Err(Error::config("eval.episodes", "must be >= 1"));
        }
        Ok(())
    }

    /// Parses and validates config text; `origin` is only used in messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<ExperimentConfig> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        let config = ExperimentConfig {
            world: file.world.resolve(),
            dqn: file.dqn,
            tabular: file.tabular,
            eval: file.eval,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_toml_str(&text, path)
}
