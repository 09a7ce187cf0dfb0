//! Policy rollouts and the evaluation metrics built on them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{self, Position3};
use crate::dqn::{argmax, episode_seed, Encoder};
use crate::env::{self, Action, Env, State, NUM_ACTIONS};
use crate::error::Result;
use crate::metrics::{EpisodeAccumulator, EpisodeMetrics};
use crate::neural::Mlp;
use crate::world::WorldConfig;

pub trait Policy {
    fn act(&mut self, state: &State, power: f64) -> Result<Action>;
}

/// Always takes the network's argmax (ties to the lowest index).
pub struct GreedyPolicy<'a> {
    net: &'a Mlp,
    encoder: Encoder,
}

impl<'a> GreedyPolicy<'a> {
    pub fn new(net: &'a Mlp, config: &WorldConfig) -> Self {
        GreedyPolicy {
            net,
            encoder: Encoder::new(config),
        }
    }
}

impl Policy for GreedyPolicy<'_> {
    fn act(&mut self, state: &State, power: f64) -> Result<Action> {
        let q = self.net.forward(&self.encoder.encode(state, power))?;
        Action::from_index(argmax(&q))
    }
}

pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        RandomPolicy {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, _: &State, _: f64) -> Result<Action> {
        Action::from_index(self.rng.gen_range(0..NUM_ACTIONS))
    }
}

/// Repeats one action forever.
pub struct FixedPolicy(pub Action);

impl Policy for FixedPolicy {
    fn act(&mut self, _: &State, _: f64) -> Result<Action> {
        Ok(self.0)
    }
}

impl<F: FnMut(&State, f64) -> Result<Action>> Policy for F {
    fn act(&mut self, state: &State, power: f64) -> Result<Action> {
        self(state, power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub metrics: EpisodeMetrics,
    pub final_pos: Position3,
    pub final_power: f64,
    pub final_reward: f64,
    pub rewards: Vec<f64>,
}

/// Plays one full episode from `env.reset(seed)`.
pub fn rollout(env: &mut Env, seed: u64, episode: usize, policy: &mut dyn Policy) -> Result<Rollout> {
    let mut state = env.reset(seed);
    let mut acc = EpisodeAccumulator::new();
    let mut rewards = Vec::with_capacity(env.config().slots);
    while !env.is_done() {
        let action = policy.act(&state, env.power())?;
        let out = env.step(action)?;
        acc.record(&out);
        rewards.push(out.reward);
        state = out.next_state;
    }
    let last = *acc.last().expect("episodes have at least one slot");
    Ok(Rollout {
        metrics: acc.finish(episode, 0.0)?,
        final_pos: last.diagnostics.uav_pos,
        final_power: last.diagnostics.power,
        final_reward: last.reward,
        rewards,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rollouts: Vec<Rollout>,
    pub mean_cumulative_reward: f64,
    pub mean_secrecy_capacity: f64,
}

impl EvalReport {
    pub fn final_positions(&self) -> Vec<Position3> {
        self.rollouts.iter().map(|r| r.final_pos).collect()
    }

    pub fn metrics(&self) -> Vec<EpisodeMetrics> {
        self.rollouts.iter().map(|r| r.metrics.clone()).collect()
    }
}

/// Runs `episodes` rollouts of `policy`; episode `k` resets with
/// `episode_seed(seed, k)`.
pub fn evaluate_policy(
    policy: &mut dyn Policy,
    config: &WorldConfig,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut env = Env::new(config.clone())?;
    let rollouts = (0..episodes)
        .map(|k| rollout(&mut env, episode_seed(seed, k), k, policy))
        .collect::<Result<Vec<_>>>()?;
    let n = episodes.max(1) as f64;
    Ok(EvalReport {
        mean_cumulative_reward: rollouts.iter().map(|r| r.metrics.cumulative_reward).sum::<f64>() / n,
        mean_secrecy_capacity: rollouts.iter().map(|r| r.metrics.secrecy_capacity).sum::<f64>() / n,
        rollouts,
    })
}

/// Greedy (epsilon = 0) evaluation of a trained network.
pub fn evaluate_net(net: &Mlp, config: &WorldConfig, episodes: usize, seed: u64) -> Result<EvalReport> {
    evaluate_policy(&mut GreedyPolicy::new(net, config), config, episodes, seed)
}

/// Closed-form metrics of hovering at the static optimum with peak power for
/// every slot.
pub fn static_optimal_metrics(config: &WorldConfig) -> Result<EpisodeMetrics> {
    config.validate()?;
    let opt = env::optimal_static_policy(config)?;
    let ch = config.channel()?;
    let c_u = channel::capacity_ue(opt.power, channel::distance(&opt.uav_pos, &config.ue_pos), &ch)?;
    let c_j = channel::capacity_eve(opt.power, channel::distance(&config.ue_pos, &config.eve_pos), &ch)?;
    let state = State::between(&opt.uav_pos, &config.ue_pos);
    Ok(EpisodeMetrics {
        episode: 0,
        cumulative_reward: opt.reward * config.slots as f64,
        mean_c_u: c_u,
        mean_c_j: c_j,
        secrecy_capacity: channel::secrecy_rate_per_slot(c_u, c_j),
        final_dx: state.dx,
        final_dy: state.dy,
        final_power: opt.power,
        epsilon: 0.0,
    })
}
