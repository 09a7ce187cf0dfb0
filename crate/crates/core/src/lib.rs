//! Aerial base station placement and uplink power control for physical-layer
//! security.
//!
//! A UAV flying at fixed altitude serves a ground user (UE) while a passive
//! ground eavesdropper listens. An agent moves the UAV on a horizontal grid and
//! adjusts the UE transmit power to maximize the uplink SNR, which in turn
//! raises the secrecy capacity. Two learners are provided: tabular Q-learning
//! on the discrete lattice and a DQN with replay memory and a target network.
//!
//! Module map:
//! - [`channel`]: path-loss gains, capacities and secrecy capacity
//! - [`env`]: the MDP (state, 12 actions, SNR reward, clamped transitions)
//! - [`tabular`]: Q-learning and the value-iteration reference
//! - [`neural`]: MLP, TD loss, backpropagation, SGD, checkpoints
//! - [`dqn`]: replay memory, epsilon-greedy selection, training loop
//! - [`eval`], [`metrics`], [`config`], [`run`]: evaluation and the experiment harness

pub mod channel;
pub mod config;
pub mod dqn;
pub mod env;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod neural;
pub mod run;
pub mod tabular;
pub mod world;

pub use channel::{ChannelParams, Position3};
pub use config::{load_config, ExperimentConfig};
pub use dqn::{train_dqn, DqnParams, DqnTrainer, ReplayMemory};
pub use env::{Action, Env, State, StepOutcome};
pub use error::{Error, Result};
pub use metrics::EpisodeMetrics;
pub use neural::Mlp;
pub use run::{run_experiment, Mode};
pub use tabular::{train_tabular, value_iteration, QLearnParams, QTable};
pub use world::WorldConfig;
