//! Static scenario description shared by every run mode.

use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, Position3};
use crate::error::{Error, Result};

/// Node placement, link constants and limits for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub ue_pos: Position3,
    pub eve_pos: Position3,
    /// Starting UAV position; `z` must equal `altitude`.
    pub uav_start: Position3,
    /// Fixed UAV flight height in meters.
    pub altitude: f64,
    /// (L_x, L_y) upper bounds of the UAV ground projection.
    pub bounds: (f64, f64),
    /// Horizontal move per action, meters.
    pub grid_step: f64,
    pub p_max: f64,
    /// Power change per action.
    pub p1: f64,
    pub initial_power: f64,
    pub zeta0_over_sigma2: f64,
    /// Slots per episode (T).
    pub slots: usize,
    /// Draw the starting cell uniformly from the grid on every reset.
    pub random_start: bool,
    /// Append normalized power to the network input.
    pub observe_power: bool,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let altitude = 10.0;
        let p_max = 1.0;
        WorldConfig {
            ue_pos: Position3 { x: 50.0, y: 50.0, z: 0.0 },
            eve_pos: Position3 { x: 70.0, y: 30.0, z: 0.0 },
            uav_start: Position3 { x: 0.0, y: 0.0, z: altitude },
            altitude,
            bounds: (100.0, 100.0),
            grid_step: 1.0,
            p_max,
            p1: p_max / 10.0,
            initial_power: p_max / 2.0,
            zeta0_over_sigma2: 1e4,
            slots: 100,
            random_start: false,
            observe_power: false,
        }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be finite and > 0, got {v}")))
    }
}

fn within_bounds(field: &str, p: &Position3, (lx, ly): (f64, f64)) -> Result<()> {
    p.validate().map_err(|e| Error::config(field, e.to_string()))?;
    if p.x < 0.0 || p.x > lx || p.y < 0.0 || p.y > ly {
        return Err(Error::config(
            field,
            format!("({}, {}) lies outside [0, {lx}] x [0, {ly}]", p.x, p.y),
        ));
    }
    Ok(())
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        self.channel()?;
        positive("altitude", self.altitude)?;
        positive("grid_step", self.grid_step)?;
        positive("p1", self.p1)?;
        within_bounds("ue_pos", &self.ue_pos, self.bounds)?;
        within_bounds("uav_start", &self.uav_start, self.bounds)?;
        self.eve_pos
            .validate()
            .map_err(|e| Error::config("eve_pos", e.to_string()))?;
        if self.uav_start.z != self.altitude {
            return Err(Error::config(
                "uav_start",
                format!(
                    "z = {} must equal altitude = {}",
                    self.uav_start.z, self.altitude
                ),
            ));
        }
        if channel::distance(&self.ue_pos, &self.eve_pos) == 0.0 {
            return Err(Error::config("eve_pos", "coincides with ue_pos"));
        }
        if self.p1 > self.p_max {
            return Err(Error::config(
                "p1",
                format!("power step {} exceeds p_max = {}", self.p1, self.p_max),
            ));
        }
        if !(self.initial_power.is_finite()
            && (0.0..=self.p_max).contains(&self.initial_power))
        {
            return Err(Error::config(
                "initial_power",
                format!("must lie in [0, {}], got {}", self.p_max, self.initial_power),
            ));
        }
        if self.slots == 0 {
            return Err(Error::config("slots", "must be >= 1"));
        }
        Ok(())
    }

    pub fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(self.zeta0_over_sigma2, self.p_max, self.bounds)
    }

    /// Number of grid cells along each axis, `floor(L / step) + 1`.
    pub fn grid_cells(&self) -> (usize, usize) {
        let n = |l: f64| (l / self.grid_step + 1e-9).floor() as usize + 1;
        (n(self.bounds.0), n(self.bounds.1))
    }

    /// Input scaling for the network: states divided by (L_x, L_y, altitude).
    pub fn state_scale(&self) -> [f64; 3] {
        [self.bounds.0, self.bounds.1, self.altitude]
    }
}
