//! Tabular Q-learning on the discrete (cell, power level) lattice, and value
//! iteration over the same lattice as an exact reference.
//!
//! The tabular state key includes the power level. Without it the reward is
//! not a function of the key and the table has no well-defined fixed point.
//! Episodes end by slot count, which is a time limit rather than a terminal
//! state, so Q-learning always bootstraps; value iteration solves the matching
//! infinite-horizon discounted problem.

use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::Position3;
use crate::dqn::{argmax, episode_seed, EpsilonSchedule};
use crate::env::{self, Action, Env, State, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::eval::Policy;
use crate::metrics::{EpisodeAccumulator, EpisodeMetrics};
use crate::world::WorldConfig;

/// Largest table value_iteration will allocate (states x actions).
const MAX_TABLE_ENTRIES: usize = 50_000_000;

fn multiple_of(value: f64, unit: f64) -> Option<usize> {
    let k = (value / unit).round();
    if k >= 0.0 && (value - k * unit).abs() <= 1e-9 * unit.max(value.abs()) {
        Some(k as usize)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateKey {
    pub ix: usize,
    pub iy: usize,
    /// Power level: power = level * p1 (the top level is p_max).
    pub ip: usize,
}

/// Enumeration of grid cells x power levels for a lattice-aligned world.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nx: usize,
    ny: usize,
    levels: usize,
    step: f64,
    p1: f64,
    p_max: f64,
    altitude: f64,
}

impl Lattice {
    /// Fails unless bounds, start cell, p_max and initial power all sit on
    /// the grid / power ladder.
    pub fn new(config: &WorldConfig) -> Result<Lattice> {
        config.validate()?;
        let step = config.grid_step;
        let on_grid = |field: &str, v: f64| {
            multiple_of(v, step).ok_or_else(|| {
                Error::config(field, format!("{v} is not a multiple of grid_step {step}"))
            })
        };
        let nx = on_grid("bounds", config.bounds.0)? + 1;
        let ny = on_grid("bounds", config.bounds.1)? + 1;
        if !config.random_start {
            on_grid("uav_start", config.uav_start.x)?;
            on_grid("uav_start", config.uav_start.y)?;
        }
        let top = multiple_of(config.p_max, config.p1).ok_or_else(|| {
            Error::config("p1", format!("p_max {} is not a multiple of p1 {}", config.p_max, config.p1))
        })?;
        multiple_of(config.initial_power, config.p1).ok_or_else(|| {
            Error::config(
                "initial_power",
                format!("{} is not a multiple of p1 {}", config.initial_power, config.p1),
            )
        })?;
        Ok(Lattice {
            nx,
            ny,
            levels: top + 1,
            step,
            p1: config.p1,
            p_max: config.p_max,
            altitude: config.altitude,
        })
    }

    pub fn num_states(&self) -> usize {
        self.nx * self.ny * self.levels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.nx, self.ny, self.levels)
    }

    pub fn index(&self, key: StateKey) -> usize {
        (key.ix * self.ny + key.iy) * self.levels + key.ip
    }

    pub fn key(&self, index: usize) -> StateKey {
        StateKey {
            ix: index / (self.ny * self.levels),
            iy: (index / self.levels) % self.ny,
            ip: index % self.levels,
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = StateKey> + '_ {
        (0..self.num_states()).map(|i| self.key(i))
    }

    pub fn key_of(&self, pos: &Position3, power: f64) -> Result<StateKey> {
        let off = || Error::Argument(format!("({pos:?}, {power}) is not a lattice point"));
        let ix = multiple_of(pos.x, self.step).ok_or_else(off)?;
        let iy = multiple_of(pos.y, self.step).ok_or_else(off)?;
        let ip = multiple_of(power, self.p1).ok_or_else(off)?;
        if ix >= self.nx || iy >= self.ny || ip >= self.levels {
            return Err(off());
        }
        Ok(StateKey { ix, iy, ip })
    }

    pub fn position(&self, key: StateKey) -> Position3 {
        Position3 {
            x: key.ix as f64 * self.step,
            y: key.iy as f64 * self.step,
            z: self.altitude,
        }
    }

    pub fn power(&self, key: StateKey) -> f64 {
        if key.ip + 1 == self.levels {
            self.p_max
        } else {
            key.ip as f64 * self.p1
        }
    }
}

/// Q-values for every lattice state and action, row-major by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    lattice: Lattice,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(lattice: Lattice) -> QTable {
        let n = lattice.num_states() * NUM_ACTIONS;
        QTable {
            lattice,
            values: vec![0.0; n],
        }
    }

    /// Uniform values in [0, 1).
    pub fn random(lattice: Lattice, seed: u64) -> QTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = lattice.num_states() * NUM_ACTIONS;
        QTable {
            lattice,
            values: (0..n).map(|_| rng.gen()).collect(),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, key: StateKey) -> &[f64] {
        let i = self.lattice.index(key) * NUM_ACTIONS;
        &self.values[i..i + NUM_ACTIONS]
    }

    pub fn get(&self, key: StateKey, action: Action) -> f64 {
        self.row(key)[action.index()]
    }

    pub fn set(&mut self, key: StateKey, action: Action, value: f64) {
        let i = self.lattice.index(key) * NUM_ACTIONS + action.index();
        self.values[i] = value;
    }

    pub fn max(&self, key: StateKey) -> f64 {
        self.row(key).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Argmax action, lowest index on ties.
    pub fn greedy(&self, key: StateKey) -> Action {
        Action::from_index(argmax(self.row(key))).expect("row has NUM_ACTIONS entries")
    }

    pub fn greedy_policy(&self) -> Vec<Action> {
        self.lattice.keys().map(|k| self.greedy(k)).collect()
    }

    /// Writes the table as a versioned text file: a header naming the lattice
    /// followed by one `ix,iy,ip,action,value` line per entry.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let l = &self.lattice;
        let io = |e| Error::io(path, e);
        writeln!(w, "{QTABLE_MAGIC} {QTABLE_VERSION}").map_err(io)?;
        writeln!(
            w,
            "# nx={} ny={} levels={} grid_step={} p1={} p_max={} altitude={}",
            l.nx, l.ny, l.levels, l.step, l.p1, l.p_max, l.altitude
        )
        .map_err(io)?;
        writeln!(w, "ix,iy,ip,action,value").map_err(io)?;
        for key in l.keys() {
            for (a, v) in self.row(key).iter().enumerate() {
                writeln!(w, "{},{},{},{},{}", key.ix, key.iy, key.ip, a, v).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Reads a table written by [`QTable::save`] for the lattice of `config`.
    pub fn load(path: impl AsRef<Path>, config: &WorldConfig) -> Result<QTable> {
        let path = path.as_ref();
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            reason,
        };
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = std::io::BufReader::new(file).lines();
        let mut next = || -> Result<Option<String>> {
            lines.next().transpose().map_err(|e| Error::io(path, e))
        };
        let first = next()?.unwrap_or_default();
        if first != format!("{QTABLE_MAGIC} {QTABLE_VERSION}") {
            return Err(parse_err(format!("unrecognized header {first:?}")));
        }
        let _lattice_comment = next()?;
        let _columns = next()?;
        let mut table = QTable::zeros(Lattice::new(config)?);
        let mut seen = vec![false; table.values.len()];
        while let Some(line) = next()? {
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(parse_err(format!("malformed line {line:?}")));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("{s:?}: {e}")));
            let key = StateKey { ix: int(fields[0])?, iy: int(fields[1])?, ip: int(fields[2])? };
            let (nx, ny, levels) = table.lattice.dims();
            if key.ix >= nx || key.iy >= ny || key.ip >= levels {
                return Err(parse_err(format!("state {key:?} outside lattice")));
            }
            let action = Action::from_index(int(fields[3])?)?;
            let value: f64 = fields[4]
                .parse()
                .map_err(|e| parse_err(format!("{:?}: {e}", fields[4])))?;
            let i = table.lattice.index(key) * NUM_ACTIONS + action.index();
            seen[i] = true;
            table.values[i] = value;
        }
        if seen.iter().any(|s| !s) {
            return Err(parse_err("table is missing entries".into()));
        }
        Ok(table)
    }
}

pub const QTABLE_MAGIC: &str = "uavsec-qtable";
pub const QTABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QLearnParams {
    pub alpha: f64,
    /// Per-pair decay exponent: the n-th update of a pair uses
    /// `alpha / n^alpha_exponent`. Zero keeps alpha constant.
    pub alpha_exponent: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub episodes: usize,
    /// Fill the table with seeded uniform values instead of zeros.
    pub random_init: bool,
}

impl Default for QLearnParams {
    fn default() -> Self {
        QLearnParams {
            alpha: 0.1,
            alpha_exponent: 0.0,
            gamma: 0.9,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                min: 0.05,
                decay: 0.995,
            },
            episodes: 1000,
            random_init: false,
        }
    }
}

impl QLearnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("tabular.alpha", format!("must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.alpha_exponent >= 0.0 && self.alpha_exponent <= 1.0) {
            return Err(Error::config("tabular.alpha_exponent", "must lie in [0, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config("tabular.gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        self.epsilon.validate("tabular.epsilon")?;
        if self.episodes == 0 {
            return Err(Error::config("tabular.episodes", "must be >= 1"));
        }
        Ok(())
    }
}

/// `(1 - alpha) * q_old + alpha * (reward + gamma * max_next_q)`.
pub fn q_update(q_old: f64, reward: f64, max_next_q: f64, alpha: f64, gamma: f64) -> f64 {
    (1.0 - alpha) * q_old + alpha * (reward + gamma * max_next_q)
}

#[derive(Debug, Clone)]
pub struct TabularOutcome {
    pub table: QTable,
    pub metrics: Vec<EpisodeMetrics>,
    /// Number of updates applied to each (state, action) pair.
    pub visits: Vec<u32>,
}

pub fn train_tabular(config: &WorldConfig, params: &QLearnParams, seed: u64) -> Result<TabularOutcome> {
    params.validate()?;
    let lattice = Lattice::new(config)?;
    let mut env = Env::new(config.clone())?;
    let mut table = if params.random_init {
        QTable::random(lattice.clone(), seed ^ 0xA5A5_A5A5)
    } else {
        QTable::zeros(lattice.clone())
    };
    let mut visits = vec![0u32; table.values.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut metrics = Vec::with_capacity(params.episodes);

    for episode in 0..params.episodes {
        let epsilon = params.epsilon.at(episode);
        env.reset(episode_seed(seed, episode));
        let mut key = lattice.key_of(&env.uav_pos(), env.power())?;
        let mut acc = EpisodeAccumulator::new();
        while !env.is_done() {
            let explore = rng.gen::<f64>() < epsilon;
            let action = if explore {
                Action::from_index(rng.gen_range(0..NUM_ACTIONS))?
            } else {
                table.greedy(key)
            };
            let out = env.step(action)?;
            acc.record(&out);
            let next = lattice.key_of(&out.diagnostics.uav_pos, out.diagnostics.power)?;
            let i = lattice.index(key) * NUM_ACTIONS + action.index();
            visits[i] += 1;
            let alpha = params.alpha / (visits[i] as f64).powf(params.alpha_exponent);
            let updated = q_update(table.values[i], out.reward, table.max(next), alpha, params.gamma);
            table.values[i] = updated;
            key = next;
        }
        metrics.push(acc.finish(episode, epsilon)?);
    }
    Ok(TabularOutcome { table, metrics, visits })
}

#[derive(Debug, Clone)]
pub struct ValueIteration {
    pub q: QTable,
    pub sweeps: usize,
    /// `sup |T Q - Q|` of the returned table.
    pub residual: f64,
    /// `sup |Q_{k+1} - Q_k|` for every sweep.
    pub deltas: Vec<f64>,
}

/// Synchronous value iteration on the lattice until the sup-norm change
/// drops below `tol`.
pub fn value_iteration(config: &WorldConfig, gamma: f64, tol: f64) -> Result<ValueIteration> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Argument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Argument("tolerance must be > 0".into()));
    }
    let lattice = Lattice::new(config)?;
    let entries = lattice.num_states().saturating_mul(NUM_ACTIONS);
    if entries > MAX_TABLE_ENTRIES {
        return Err(Error::Argument(format!(
            "lattice has {entries} state-action pairs, more than {MAX_TABLE_ENTRIES}"
        )));
    }
    let channel = config.channel()?;
    let mut next_state = Vec::with_capacity(entries);
    let mut reward = Vec::with_capacity(entries);
    for key in lattice.keys() {
        let (pos, power) = (lattice.position(key), lattice.power(key));
        for action in Action::all() {
            let (p2, w2) = env::transition(config, pos, power, action);
            next_state.push(lattice.index(lattice.key_of(&p2, w2)?));
            reward.push(env::reward_at(config, &channel, &p2, w2)?);
        }
    }

    let bellman = |q: &[f64], out: &mut Vec<f64>| {
        let v: Vec<f64> = q
            .chunks_exact(NUM_ACTIONS)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        out.clear();
        out.extend(reward.iter().zip(&next_state).map(|(r, &s)| r + gamma * v[s]));
    };
    let sup_diff = |a: &[f64], b: &[f64]| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    };

    let max_sweeps = 1_000_000;
    let mut q = vec![0.0; entries];
    let mut next = Vec::with_capacity(entries);
    let mut deltas = Vec::new();
    loop {
        bellman(&q, &mut next);
        let delta = sup_diff(&q, &next);
        deltas.push(delta);
        std::mem::swap(&mut q, &mut next);
        if delta < tol {
            break;
        }
        if deltas.len() >= max_sweeps {
            return Err(Error::State(format!(
                "value iteration did not reach tolerance {tol} in {max_sweeps} sweeps"
            )));
        }
    }
    bellman(&q, &mut next);
    let residual = sup_diff(&q, &next);
    Ok(ValueIteration {
        sweeps: deltas.len(),
        residual,
        deltas,
        q: QTable { lattice, values: q },
    })
}

/// Greedy policy over a Q-table, usable in rollouts.
pub struct TablePolicy<'a> {
    table: &'a QTable,
    ue: Position3,
    altitude: f64,
}

impl<'a> TablePolicy<'a> {
    pub fn new(table: &'a QTable, config: &WorldConfig) -> Self {
        TablePolicy {
            table,
            ue: config.ue_pos,
            altitude: config.altitude,
        }
    }
}

impl Policy for TablePolicy<'_> {
    fn act(&mut self, state: &State, power: f64) -> Result<Action> {
        let pos = Position3 {
            x: state.dx + self.ue.x,
            y: state.dy + self.ue.y,
            z: self.altitude,
        };
        Ok(self.table.greedy(self.table.lattice.key_of(&pos, power)?))
    }
}
