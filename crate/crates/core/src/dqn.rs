//! DQN training loop: replay memory, epsilon-greedy exploration and a
//! periodically synchronized target network.
//!
//! Per slot the agent observes the state, picks an action, steps the
//! environment, stores the transition, and (once the memory holds a full
//! mini-batch) takes one SGD step on the TD loss. Every `target_sync` slots
//! the target network is overwritten with the training network. Epsilon
//! decays once per episode.

use std::collections::VecDeque;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, Action, Env, State, StepOutcome, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::metrics::{EpisodeAccumulator, EpisodeMetrics};
use crate::neural::{self, Mlp, Transition};
use crate::world::WorldConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub initial: f64,
    #[serde(rename = "final")]
    pub min: f64,
    /// Multiplicative decay applied once per episode.
    pub decay: f64,
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize) -> f64 {
        let mut eps = self.initial;
        for _ in 0..episode {
            eps *= self.decay;
            if eps <= self.min {
                return self.min;
            }
        }
        eps.max(self.min)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.min)
            && self.min <= self.initial
            && self.initial <= 1.0
            && self.decay > 0.0
            && self.decay <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(
                field,
                format!(
                    "need 0 <= final <= initial <= 1 and 0 < decay <= 1, got {:?}",
                    self
                ),
            ))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DqnParams {
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Target-network sync period B, in slots.
    pub target_sync: usize,
    pub learning_rate: f64,
    pub episodes: usize,
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Train on the raw SNR instead of SNR divided by the static optimum.
    pub raw_reward: bool,
    /// Keep the bootstrap term on the final slot, treating the slot limit as
    /// truncation rather than a terminal state.
    pub bootstrap_at_time_limit: bool,
}

impl Default for DqnParams {
    fn default() -> Self {
        DqnParams {
            gamma: 0.95,
            epsilon: EpsilonSchedule {
                initial: 1.0,
                min: 0.05,
                decay: 0.995,
            },
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync: 100,
            learning_rate: 1e-3,
            episodes: 1000,
            hidden: vec![64, 64],
            seed: 0,
            raw_reward: false,
            bootstrap_at_time_limit: false,
        }
    }
}

impl DqnParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(Error::config("dqn.gamma", format!("must lie in [0, 1), got {}", self.gamma)));
        }
        self.epsilon.validate("dqn.epsilon")?;
        if self.replay_capacity == 0 {
            return Err(Error::config("dqn.replay_capacity", "must be >= 1"));
        }
        if self.batch_size == 0 || self.batch_size > self.replay_capacity {
            return Err(Error::config(
                "dqn.batch_size",
                format!("must lie in [1, replay_capacity = {}]", self.replay_capacity),
            ));
        }
        if self.target_sync == 0 {
            return Err(Error::config("dqn.target_sync", "must be >= 1"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("dqn.learning_rate", "must be finite and > 0"));
        }
        if self.episodes == 0 {
            return Err(Error::config("dqn.episodes", "must be >= 1"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("dqn.hidden", "layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// Maps an observation to the network input: offsets divided by
/// (L_x, L_y, altitude), plus power / p_max when power is observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Encoder {
    scale: [f64; 3],
    p_max: f64,
    observe_power: bool,
}

impl Encoder {
    pub fn new(config: &WorldConfig) -> Encoder {
        Encoder {
            scale: config.state_scale(),
            p_max: config.p_max,
            observe_power: config.observe_power,
        }
    }

    pub fn dim(&self) -> usize {
        if self.observe_power {
            4
        } else {
            3
        }
    }

    pub fn encode_into(&self, state: &State, power: f64, out: &mut Vec<f64>) {
        out.push(state.dx / self.scale[0]);
        out.push(state.dy / self.scale[1]);
        out.push(state.dz / self.scale[2]);
        if self.observe_power {
            out.push(power / self.p_max);
        }
    }

    pub fn encode(&self, state: &State, power: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(4);
        self.encode_into(state, power, &mut v);
        v
    }
}

/// One stored transition. `power` fields hold the UE power observed alongside
/// each state; they only reach the network when power is observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experience {
    pub state: State,
    pub power: f64,
    pub action: Action,
    pub reward: f64,
    pub next_state: State,
    pub next_power: f64,
    pub done: bool,
}

/// Bounded FIFO of the latest `capacity` experiences.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    buf: VecDeque<Experience>,
    capacity: usize,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Result<ReplayMemory> {
        if capacity == 0 {
            return Err(Error::Argument("replay capacity must be >= 1".into()));
        }
        Ok(ReplayMemory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        })
    }

    pub fn push(&mut self, e: Experience) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.buf.iter()
    }

    /// `k` distinct experiences chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Result<Vec<&Experience>> {
        if self.buf.len() < k {
            return Err(Error::InsufficientData {
                needed: k,
                available: self.buf.len(),
            });
        }
        Ok(index::sample(rng, self.buf.len(), k)
            .into_iter()
            .map(|i| &self.buf[i])
            .collect())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy choice. The exploration coin is always drawn so the random
/// stream does not depend on epsilon.
pub fn select_action<R: Rng + ?Sized>(
    net: &Mlp,
    input: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<Action> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if rng.gen::<f64>() < epsilon {
        return Action::from_index(rng.gen_range(0..NUM_ACTIONS));
    }
    Action::from_index(argmax(&net.forward(input)?))
}

/// What happened in one training slot, for observers and tests.
pub struct SlotEvent<'a> {
    pub episode: usize,
    pub slot: usize,
    /// Slots elapsed since training started, counting this one.
    pub global_slot: usize,
    pub epsilon: f64,
    pub outcome: &'a StepOutcome,
    pub memory_len: usize,
    /// Loss of the gradient step taken this slot, if any.
    pub loss: Option<f64>,
    pub synced: bool,
    pub train_net: &'a Mlp,
    pub target_net: &'a Mlp,
}

#[derive(Debug, Clone)]
pub struct DqnOutcome {
    pub net: Mlp,
    pub metrics: Vec<EpisodeMetrics>,
    pub gradient_steps: usize,
}

/// Seed for the environment reset of `episode`; only used with random starts.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(episode as u64)
}

pub struct DqnTrainer {
    env: Env,
    params: DqnParams,
    encoder: Encoder,
    train_net: Mlp,
    target_net: Mlp,
    memory: ReplayMemory,
    rng: ChaCha8Rng,
    reward_scale: f64,
    episode: usize,
    global_slot: usize,
    gradient_steps: usize,
    inputs: Vec<f64>,
}

impl DqnTrainer {
    pub fn new(config: WorldConfig, params: DqnParams) -> Result<DqnTrainer> {
        params.validate()?;
        let reward_scale = if params.raw_reward {
            1.0
        } else {
            1.0 / env::optimal_static_policy(&config)?.reward
        };
        let encoder = Encoder::new(&config);
        let env = Env::new(config)?;
        let mut sizes = vec![encoder.dim()];
        sizes.extend(&params.hidden);
        sizes.push(NUM_ACTIONS);
        let train_net = Mlp::new(&sizes, params.seed)?;
        let target_net = neural::copy_weights(&train_net);
        Ok(DqnTrainer {
            env,
            encoder,
            target_net,
            train_net,
            memory: ReplayMemory::new(params.replay_capacity)?,
            rng: ChaCha8Rng::seed_from_u64(params.seed ^ 0x5DEE_CE66_D1CE_5EED),
            reward_scale,
            episode: 0,
            global_slot: 0,
            gradient_steps: 0,
            inputs: Vec::new(),
            params,
        })
    }

    pub fn train_net(&self) -> &Mlp {
        &self.train_net
    }

    pub fn target_net(&self) -> &Mlp {
        &self.target_net
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn encoder(&self) -> Encoder {
        self.encoder
    }

    pub fn gradient_steps(&self) -> usize {
        self.gradient_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.params.epsilon.at(self.episode)
    }

    fn gradient_step(&mut self) -> Result<f64> {
        let batch = self.memory.sample(self.params.batch_size, &mut self.rng)?;
        let dim = self.encoder.dim();
        self.inputs.clear();
        for e in &batch {
            self.encoder.encode_into(&e.state, e.power, &mut self.inputs);
            self.encoder
                .encode_into(&e.next_state, e.next_power, &mut self.inputs);
        }
        let transitions: Vec<Transition<'_>> = batch
            .iter()
            .zip(self.inputs.chunks_exact(2 * dim))
            .map(|(e, x)| Transition {
                input: &x[..dim],
                action: e.action.index(),
                reward: e.reward * self.reward_scale,
                next_input: &x[dim..],
                done: e.done,
            })
            .collect();
        let (loss, grads) =
            neural::backward(&transitions, &self.train_net, &self.target_net, self.params.gamma)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                episode: self.episode,
                slot: self.env.slot(),
                loss,
            });
        }
        neural::sgd_step(&mut self.train_net, &grads, self.params.learning_rate)?;
        self.gradient_steps += 1;
        Ok(loss)
    }

    pub fn run_episode(&mut self, observer: &mut dyn FnMut(&SlotEvent<'_>)) -> Result<EpisodeMetrics> {
        let epsilon = self.epsilon();
        let mut state = self.env.reset(episode_seed(self.params.seed, self.episode));
        let mut acc = EpisodeAccumulator::new();
        let mut input = Vec::with_capacity(4);
        while !self.env.is_done() {
            let power = self.env.power();
            input.clear();
            self.encoder.encode_into(&state, power, &mut input);
            let action = select_action(&self.train_net, &input, epsilon, &mut self.rng)?;
            let outcome = self.env.step(action)?;
            acc.record(&outcome);
            self.memory.push(Experience {
                state,
                power,
                action,
                reward: outcome.reward,
                next_state: outcome.next_state,
                next_power: outcome.diagnostics.power,
                done: outcome.done && !self.params.bootstrap_at_time_limit,
            });
            let loss = if self.memory.len() >= self.params.batch_size {
                Some(self.gradient_step()?)
            } else {
                None
            };
            self.global_slot += 1;
            let synced = self.global_slot.is_multiple_of(self.params.target_sync);
            if synced {
                self.target_net = neural::copy_weights(&self.train_net);
            }
            observer(&SlotEvent {
                episode: self.episode,
                slot: self.env.slot() - 1,
                global_slot: self.global_slot,
                epsilon,
                outcome: &outcome,
                memory_len: self.memory.len(),
                loss,
                synced,
                train_net: &self.train_net,
                target_net: &self.target_net,
            });
            state = outcome.next_state;
        }
        let metrics = acc.finish(self.episode, epsilon)?;
        self.episode += 1;
        Ok(metrics)
    }

    pub fn train(mut self, observer: &mut dyn FnMut(&SlotEvent<'_>)) -> Result<DqnOutcome> {
        let mut metrics = Vec::with_capacity(self.params.episodes);
        for _ in 0..self.params.episodes {
            metrics.push(self.run_episode(observer)?);
        }
        Ok(DqnOutcome {
            net: self.train_net,
            metrics,
            gradient_steps: self.gradient_steps,
        })
    }
}

pub fn train_dqn(config: &WorldConfig, params: &DqnParams) -> Result<DqnOutcome> {
    DqnTrainer::new(config.clone(), params.clone())?.train(&mut |_| {})
}
