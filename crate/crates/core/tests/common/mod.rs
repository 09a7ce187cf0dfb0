//! Oracles and fixtures shared by the integration tests and the acceptance
//! suite. Nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

pub mod physics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavsec_core::dqn::EpsilonSchedule;
use uavsec_core::neural::{self, Activation, Transition};
use uavsec_core::{Mlp, Position3, QLearnParams, QTable, WorldConfig};

pub fn pos(x: f64, y: f64, z: f64) -> Position3 {
    Position3 { x, y, z }
}

/// 5 x 5 cells, power levels {0, 0.5, 1}.
pub fn tiny_world() -> WorldConfig {
    WorldConfig {
        ue_pos: pos(3.0, 1.0, 0.0),
        eve_pos: pos(0.0, 4.0, 0.0),
        uav_start: pos(0.0, 0.0, 2.0),
        altitude: 2.0,
        bounds: (4.0, 4.0),
        grid_step: 1.0,
        p_max: 1.0,
        p1: 0.5,
        initial_power: 0.5,
        zeta0_over_sigma2: 100.0,
        slots: 20,
        random_start: true,
        observe_power: false,
    }
}

/// 11 x 11 cells, power levels {0, 0.5, 1}.
pub fn grid11_world() -> WorldConfig {
    WorldConfig {
        ue_pos: pos(7.0, 3.0, 0.0),
        eve_pos: pos(2.0, 8.0, 0.0),
        uav_start: pos(0.0, 0.0, 3.0),
        altitude: 3.0,
        bounds: (10.0, 10.0),
        slots: 50,
        ..tiny_world()
    }
}

/// Q-learning settings used against the value-iteration reference: uniform
/// exploration throughout (the update is off-policy) and a constant step size
/// (the dynamics are deterministic).
pub fn oracle_qlearn_params(episodes: usize) -> QLearnParams {
    QLearnParams {
        alpha: 0.1,
        alpha_exponent: 0.0,
        gamma: 0.9,
        epsilon: EpsilonSchedule {
            initial: 1.0,
            min: 1.0,
            decay: 1.0,
        },
        episodes,
        random_init: false,
    }
}

/// SNR at every (cell, power level) of the lattice, by direct enumeration.
/// Returns the best `(x, y, power, snr)`.
pub fn brute_force_lattice_optimum(config: &WorldConfig) -> (f64, f64, f64, f64) {
    let nx = (config.bounds.0 / config.grid_step).round() as usize;
    let ny = (config.bounds.1 / config.grid_step).round() as usize;
    let np = (config.p_max / config.p1).round() as usize;
    let mut best = (0.0, 0.0, 0.0, f64::NEG_INFINITY);
    for i in 0..=nx {
        for j in 0..=ny {
            for k in 0..=np {
                let (x, y, p) = (i as f64 * config.grid_step, j as f64 * config.grid_step, k as f64 * config.p1);
                let dx = x - config.ue_pos.x;
                let dy = y - config.ue_pos.y;
                let dz = config.altitude - config.ue_pos.z;
                let snr = config.zeta0_over_sigma2 * p / (dx * dx + dy * dy + dz * dz);
                if snr > best.3 {
                    best = (x, y, p, snr);
                }
            }
        }
    }
    best
}

/// Actions whose value is within `tol` of the row maximum.
pub fn optimal_set(row: &[f64], tol: f64) -> Vec<usize> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..row.len()).filter(|&a| row[a] >= max - tol).collect()
}

/// Fraction of states where the trained table's greedy action is one of the
/// reference table's optimal actions.
pub fn greedy_agreement(trained: &QTable, reference: &QTable, tol: f64) -> f64 {
    let lattice = reference.lattice();
    let agree = lattice
        .keys()
        .filter(|&k| optimal_set(reference.row(k), tol).contains(&trained.greedy(k).index()))
        .count();
    agree as f64 / lattice.num_states() as f64
}

/// `max |Q - Q*| / max |Q*|`.
pub fn relative_sup_error(trained: &QTable, reference: &QTable) -> f64 {
    let diff = trained
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = reference.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
    diff / scale
}

/// A random small network pair with a random mini-batch.
pub struct GradInstance {
    pub train: Mlp,
    pub target: Mlp,
    pub inputs: Vec<Vec<f64>>,
    pub next_inputs: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub done: Vec<bool>,
    pub gamma: f64,
}

/// Smallest |pre-activation| of any rectifier unit over `inputs`.
fn kink_margin(net: &Mlp, inputs: &[Vec<f64>]) -> f64 {
    let mut margin = f64::INFINITY;
    for x in inputs {
        let mut a = x.clone();
        for layer in net.layers() {
            let z: Vec<f64> = (0..layer.out_dim())
                .map(|o| {
                    let row = &layer.weights()[o * layer.in_dim()..(o + 1) * layer.in_dim()];
                    layer.biases()[o] + row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            if layer.activation() == Activation::Relu {
                margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
                a = z.iter().map(|v| v.max(0.0)).collect();
            } else {
                a = z;
            }
        }
    }
    margin
}

impl GradInstance {
    /// Instances with a rectifier input within 1e-3 of its kink are redrawn;
    /// central differences are meaningless there.
    pub fn random(seed: u64) -> GradInstance {
        let mut attempt = 0u64;
        loop {
            let inst = Self::draw(seed.wrapping_mul(1_000_003).wrapping_add(attempt));
            if kink_margin(&inst.train, &inst.inputs) > 1e-3 {
                return inst;
            }
            attempt += 1;
        }
    }

    fn draw(seed: u64) -> GradInstance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.gen_range(2..=4);
        let mut sizes = vec![input];
        for _ in 0..rng.gen_range(1..=2) {
            sizes.push(rng.gen_range(3..=8));
        }
        let output = rng.gen_range(2..=12);
        sizes.push(output);
        let mut train = Mlp::new(&sizes, rng.gen()).unwrap();
        // Nonzero biases so every parameter gets exercised.
        let params: Vec<f64> = train.params().iter().map(|p| p + rng.gen_range(-0.1..0.1)).collect();
        train.set_params(&params).unwrap();
        let target = Mlp::new(&sizes, rng.gen()).unwrap();
        let n = rng.gen_range(1..=8);
        let vec_in = |rng: &mut ChaCha8Rng| (0..input).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let inputs = (0..n).map(|_| vec_in(&mut rng)).collect();
        let next_inputs = (0..n).map(|_| vec_in(&mut rng)).collect();
        GradInstance {
            train,
            target,
            inputs,
            next_inputs,
            actions: (0..n).map(|_| rng.gen_range(0..output)).collect(),
            rewards: (0..n).map(|_| rng.gen_range(0.0..2.0)).collect(),
            done: (0..n).map(|_| rng.gen_bool(0.3)).collect(),
            gamma: rng.gen_range(0.0..0.99),
        }
    }

    pub fn batch(&self) -> Vec<Transition<'_>> {
        (0..self.actions.len())
            .map(|i| Transition {
                input: &self.inputs[i],
                action: self.actions[i],
                reward: self.rewards[i],
                next_input: &self.next_inputs[i],
                done: self.done[i],
            })
            .collect()
    }

    /// Central differences of the loss with respect to every training
    /// parameter; the target network is held fixed.
    pub fn numeric_gradient(&self, h: f64) -> Vec<f64> {
        let base = self.train.params();
        let mut net = self.train.clone();
        let batch = self.batch();
        (0..base.len())
            .map(|i| {
                let mut p = base.clone();
                p[i] = base[i] + h;
                net.set_params(&p).unwrap();
                let up = neural::loss(&batch, &net, &self.target, self.gamma).unwrap();
                p[i] = base[i] - h;
                net.set_params(&p).unwrap();
                let down = neural::loss(&batch, &net, &self.target, self.gamma).unwrap();
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `|g_backprop - g_fd| / (|g_backprop| + |g_fd|)` in the Euclidean norm.
    pub fn relative_error(&self, h: f64) -> f64 {
        let (_, grads) = neural::backward(&self.batch(), &self.train, &self.target, self.gamma).unwrap();
        let analytic = grads.to_flat();
        let numeric = self.numeric_gradient(h);
        let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
        let diff = norm(&mut analytic.iter().zip(&numeric).map(|(a, b)| a - b));
        let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
        if scale == 0.0 {
            0.0
        } else {
            diff / scale
        }
    }
}

/// Chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Upper 0.1% point of the chi-square distribution with 11 degrees of freedom.
pub const CHI2_11_P999: f64 = 31.264;
