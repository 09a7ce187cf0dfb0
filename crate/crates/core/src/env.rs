//! Episodic MDP for joint UAV placement and UE power control.
//!
//! The observation is the UAV-minus-UE offset `(dx, dy, dz)`. Each of the 12
//! actions moves the UAV one grid step along a horizontal axis and changes the
//! UE power by `+p1`, `0` or `-p1`. Position and power are clamped to their
//! feasible ranges after every action, so every episode lasts exactly `slots`
//! steps. The reward is the post-transition uplink SNR.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{self, ChannelParams, Position3};
use crate::error::{Error, Result};
use crate::world::WorldConfig;

pub const NUM_ACTIONS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Move {
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PowerDelta {
    Up,
    Hold,
    Down,
}

const MOVES: [Move; 4] = [Move::PlusX, Move::MinusX, Move::PlusY, Move::MinusY];
const POWER_DELTAS: [PowerDelta; 3] = [PowerDelta::Up, PowerDelta::Hold, PowerDelta::Down];

/// One of the 12 (move, power change) combinations; index = `move * 3 + power`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Action(u8);

impl Action {
    pub fn new(movement: Move, power: PowerDelta) -> Action {
        let m = MOVES.iter().position(|&x| x == movement).unwrap();
        let p = POWER_DELTAS.iter().position(|&x| x == power).unwrap();
        Action((m * 3 + p) as u8)
    }

    pub fn from_index(index: usize) -> Result<Action> {
        if index < NUM_ACTIONS {
            Ok(Action(index as u8))
        } else {
            Err(Error::Argument(format!(
                "action index {index} outside [0, {NUM_ACTIONS})"
            )))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn movement(self) -> Move {
        MOVES[self.index() / 3]
    }

    pub fn power_delta(self) -> PowerDelta {
        POWER_DELTAS[self.index() % 3]
    }

    pub fn all() -> impl Iterator<Item = Action> {
        (0..NUM_ACTIONS as u8).map(Action)
    }
}

impl TryFrom<usize> for Action {
    type Error = Error;
    fn try_from(value: usize) -> Result<Self> {
        Action::from_index(value)
    }
}

impl From<Action> for usize {
    fn from(a: Action) -> usize {
        a.index()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.movement(), self.power_delta())
    }
}

/// Observable state: UAV position minus UE position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl State {
    pub fn between(uav: &Position3, ue: &Position3) -> State {
        State {
            dx: uav.x - ue.x,
            dy: uav.y - ue.y,
            dz: uav.z - ue.z,
        }
    }
}

/// Per-slot evaluation quantities. The eavesdropper terms are never fed to
/// the agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub c_u: f64,
    pub c_j: f64,
    pub secrecy: f64,
    pub uav_pos: Position3,
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: State,
    pub reward: f64,
    pub done: bool,
    pub diagnostics: Diagnostics,
}

/// Applies `action` to `(pos, power)` and projects back onto the feasible set.
pub fn transition(
    config: &WorldConfig,
    pos: Position3,
    power: f64,
    action: Action,
) -> (Position3, f64) {
    let step = config.grid_step;
    let (lx, ly) = config.bounds;
    let mut next = pos;
    match action.movement() {
        Move::PlusX => next.x = (pos.x + step).min(lx),
        Move::MinusX => next.x = (pos.x - step).max(0.0),
        Move::PlusY => next.y = (pos.y + step).min(ly),
        Move::MinusY => next.y = (pos.y - step).max(0.0),
    }
    let next_power = match action.power_delta() {
        PowerDelta::Up => (power + config.p1).min(config.p_max),
        PowerDelta::Hold => power,
        PowerDelta::Down => (power - config.p1).max(0.0),
    };
    (next, next_power)
}

/// Uplink SNR for a UAV at `pos` with UE power `power`.
pub fn reward_at(config: &WorldConfig, channel: &ChannelParams, pos: &Position3, power: f64) -> Result<f64> {
    channel::snr_ue(power, channel::distance(pos, &config.ue_pos), channel)
}

/// Capacity implied by an SNR reward: `log2(1 + reward)`.
pub fn reward_capacity_identity(reward: f64) -> Result<f64> {
    if !(reward.is_finite() && reward >= 0.0) {
        return Err(Error::Domain(format!("reward must be >= 0, got {reward}")));
    }
    Ok(channel::capacity_from_snr(reward))
}

#[derive(Debug, Clone)]
pub struct Env {
    config: WorldConfig,
    channel: ChannelParams,
    uav_pos: Position3,
    power: f64,
    slot: usize,
}

impl Env {
    /// Validates `config` and resets with seed 0.
    pub fn new(config: WorldConfig) -> Result<Env> {
        config.validate()?;
        let channel = config.channel()?;
        let mut env = Env {
            uav_pos: config.uav_start,
            power: config.initial_power,
            slot: 0,
            config,
            channel,
        };
        env.reset(0);
        Ok(env)
    }

    /// Starts a new episode. The seed only matters with `random_start`.
    pub fn reset(&mut self, seed: u64) -> State {
        self.uav_pos = if self.config.random_start {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (nx, ny) = self.config.grid_cells();
            let step = self.config.grid_step;
            Position3 {
                x: rng.gen_range(0..nx) as f64 * step,
                y: rng.gen_range(0..ny) as f64 * step,
                z: self.config.altitude,
            }
        } else {
            self.config.uav_start
        };
        self.power = self.config.initial_power;
        self.slot = 0;
        self.state()
    }

    /// Places the UAV and power directly; used by planners and tests.
    pub fn reset_to(&mut self, uav_pos: Position3, power: f64) -> Result<State> {
        let (lx, ly) = self.config.bounds;
        if uav_pos.x < 0.0 || uav_pos.x > lx || uav_pos.y < 0.0 || uav_pos.y > ly {
            return Err(Error::Argument(format!("UAV position {uav_pos:?} out of bounds")));
        }
        if uav_pos.z != self.config.altitude {
            return Err(Error::Argument("UAV height must equal the altitude".into()));
        }
        if !(0.0..=self.config.p_max).contains(&power) {
            return Err(Error::Argument(format!("power {power} outside [0, p_max]")));
        }
        self.uav_pos = uav_pos;
        self.power = power;
        self.slot = 0;
        Ok(self.state())
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.is_done() {
            return Err(Error::State(format!(
                "episode finished after {} slots; call reset",
                self.config.slots
            )));
        }
        let (pos, power) = transition(&self.config, self.uav_pos, self.power, action);
        self.uav_pos = pos;
        self.power = power;
        self.slot += 1;

        let d_u = channel::distance(&pos, &self.config.ue_pos);
        let d_j = channel::distance(&self.config.ue_pos, &self.config.eve_pos);
        let reward = channel::snr_ue(power, d_u, &self.channel)?;
        let c_u = channel::capacity_ue(power, d_u, &self.channel)?;
        let c_j = channel::capacity_eve(power, d_j, &self.channel)?;
        Ok(StepOutcome {
            next_state: self.state(),
            reward,
            done: self.is_done(),
            diagnostics: Diagnostics {
                c_u,
                c_j,
                secrecy: channel::secrecy_rate_per_slot(c_u, c_j),
                uav_pos: pos,
                power,
            },
        })
    }

    pub fn state(&self) -> State {
        State::between(&self.uav_pos, &self.config.ue_pos)
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.config.slots
    }

    pub fn uav_pos(&self) -> Position3 {
        self.uav_pos
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn channel(&self) -> &ChannelParams {
        &self.channel
    }
}

/// Maximizer of the average uplink capacity under the position and power limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticOptimum {
    pub uav_pos: Position3,
    pub power: f64,
    pub reward: f64,
}

/// Capacity grows with power and shrinks with distance, so the optimum is
/// peak power with the UAV straight above the UE (clamped into bounds).
pub fn optimal_static_policy(config: &WorldConfig) -> Result<StaticOptimum> {
    let (lx, ly) = config.bounds;
    let uav_pos = Position3 {
        x: config.ue_pos.x.clamp(0.0, lx),
        y: config.ue_pos.y.clamp(0.0, ly),
        z: config.altitude,
    };
    let channel = config.channel()?;
    let reward = reward_at(config, &channel, &uav_pos, config.p_max)?;
    Ok(StaticOptimum {
        uav_pos,
        power: config.p_max,
        reward,
    })
}

/// Optimum restricted to grid cells: the cell nearest the UE on each axis.
/// Peak power is always reachable because `+p1` clamps at `p_max`.
pub fn optimal_lattice_policy(config: &WorldConfig) -> Result<StaticOptimum> {
    config.validate()?;
    let (nx, ny) = config.grid_cells();
    let step = config.grid_step;
    let nearest = |target: f64, n: usize| {
        let i = (target / step).round().clamp(0.0, (n - 1) as f64);
        i * step
    };
    let uav_pos = Position3 {
        x: nearest(config.ue_pos.x, nx),
        y: nearest(config.ue_pos.y, ny),
        z: config.altitude,
    };
    let channel = config.channel()?;
    let reward = reward_at(config, &channel, &uav_pos, config.p_max)?;
    Ok(StaticOptimum {
        uav_pos,
        power: config.p_max,
        reward,
    })
}
