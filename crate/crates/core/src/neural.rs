//! Small fully connected network used as the Q-function approximator.
//!
//! Weights are stored row-major (`out x in`). Hidden layers use a rectifier,
//! the output layer is linear. Training minimizes the temporal-difference
//! loss
//!
//! ```text
//! L = mean_i (y_i - Q(s_i, a_i; theta))^2,   y_i = r_i + gamma * max_a Q(s'_i, a; theta_target)
//! ```
//!
//! where the target network is held constant and `y_i = r_i` for terminal
//! transitions.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    fn from_code(code: u8) -> Option<Activation> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        biases: Vec<f64>,
        activation: Activation,
    ) -> Result<Layer> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Shape("layer dimensions must be non-zero".into()));
        }
        if weights.len() != in_dim * out_dim || biases.len() != out_dim {
            return Err(Error::Shape(format!(
                "layer {in_dim}->{out_dim} expects {} weights and {out_dim} biases, got {} and {}",
                in_dim * out_dim,
                weights.len(),
                biases.len()
            )));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Argument("layer parameters must be finite".into()));
        }
        Ok(Layer {
            in_dim,
            out_dim,
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.in_dim).zip(&self.biases) {
            let z = b + dot(row, input);
            out.push(match self.activation {
                Activation::Relu => z.max(0.0),
                Activation::Identity => z,
            });
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

impl Mlp {
    /// Glorot-uniform weights and zero biases. `sizes` lists every layer width
    /// including input and output.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Mlp> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(sizes, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..fan_in * fan_out)
                .map(|_| rng.gen_range(-limit..=limit))
                .collect()
        })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Mlp> {
        Self::build(sizes, |fan_in, fan_out| vec![0.0; fan_in * fan_out])
    }

    fn build(sizes: &[usize], mut init: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Mlp> {
        if sizes.len() < 2 {
            return Err(Error::Shape("need at least input and output sizes".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let activation = if i == last {
                    Activation::Identity
                } else {
                    Activation::Relu
                };
                Layer::new(w[0], w[1], init(w[0], w[1]), vec![0.0; w[1]], activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Mlp> {
        let Some(last) = layers.last() else {
            return Err(Error::Shape("network needs at least one layer".into()));
        };
        if last.activation != Activation::Identity {
            return Err(Error::Shape("output layer must be linear".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Shape(format!(
                    "layer output {} does not feed next input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Mlp { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Widths of every layer boundary, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// All parameters flattened layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            let (b, tail) = tail.split_at(l.biases.len());
            l.weights.copy_from_slice(w);
            l.biases.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} features, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            l.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Forward pass keeping every layer output; `acts[0]` is the input.
    fn forward_cached(&self, input: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.layers.len() + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(input);
        for (i, l) in self.layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(i + 1);
            l.forward_into(&head[i], &mut tail[0]);
        }
    }

    fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.in_dim == b.in_dim && a.out_dim == b.out_dim)
    }

    /// Serializes to the checkpoint layout: magic, version, layer dims and
    /// activations, then every layer's row-major weights and biases as
    /// little-endian f64.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.layers.len() * 9 + self.param_count() * 8);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.in_dim as u32).to_le_bytes());
            out.extend_from_slice(&(l.out_dim as u32).to_le_bytes());
            out.push(l.activation.code());
        }
        for v in self.params() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Mlp> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
            return Err(Error::Shape("not a network checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Shape(format!("unsupported checkpoint version {version}")));
        }
        let n_layers = r.u32()? as usize;
        if n_layers == 0 || n_layers > 1024 {
            return Err(Error::Shape(format!("implausible layer count {n_layers}")));
        }
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let (i, o) = (r.u32()? as usize, r.u32()? as usize);
            let act = Activation::from_code(r.u8()?)
                .ok_or_else(|| Error::Shape("unknown activation code".into()))?;
            dims.push((i, o, act));
        }
        let mut layers = Vec::with_capacity(n_layers);
        for (i, o, act) in dims {
            let weights = r.f64s(i.checked_mul(o).ok_or_else(|| Error::Shape("overflow".into()))?)?;
            let biases = r.f64s(o)?;
            layers.push(Layer::new(i, o, weights, biases, act)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Shape(format!(
                "{} trailing bytes after parameters",
                bytes.len() - r.pos
            )));
        }
        Mlp::from_layers(layers)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Loads a checkpoint, rejecting it unless its layer widths equal `expected`
    /// (when given).
    pub fn load(path: impl AsRef<Path>, expected: Option<&[usize]>) -> Result<Mlp> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let net = Mlp::from_bytes(&bytes)?;
        if let Some(sizes) = expected {
            if net.sizes() != sizes {
                return Err(Error::Shape(format!(
                    "checkpoint has layer sizes {:?}, expected {sizes:?}",
                    net.sizes()
                )));
            }
        }
        Ok(net)
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"UAVSECNN";
pub const CHECKPOINT_VERSION: u32 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ByteReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Shape("checkpoint truncated".into()));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Shape("overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Deep copy used for target-network synchronization.
pub fn copy_weights(src: &Mlp) -> Mlp {
    src.clone()
}

/// One encoded transition for the TD loss.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a> {
    pub input: &'a [f64],
    pub action: usize,
    pub reward: f64,
    pub next_input: &'a [f64],
    pub done: bool,
}

/// Per-layer gradients, shape-congruent with the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Gradients {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.biases.len()]))
                .collect(),
        }
    }

    /// Flattened in the same order as [`Mlp::params`].
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|(w, b)| w.iter().chain(b).copied())
            .collect()
    }

    pub fn weight_grad(&self, layer: usize) -> &[f64] {
        &self.layers[layer].0
    }

    pub fn bias_grad(&self, layer: usize) -> &[f64] {
        &self.layers[layer].1
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|((w, b), l)| w.len() == l.weights.len() && b.len() == l.biases.len())
    }
}

fn check_batch(batch: &[Transition<'_>], train: &Mlp, target: &Mlp) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    if !train.same_shape(target) {
        return Err(Error::Shape("training and target networks differ in shape".into()));
    }
    for t in batch {
        train.check_input(t.input)?;
        train.check_input(t.next_input)?;
        if t.action >= train.output_dim() {
            return Err(Error::Shape(format!(
                "action {} outside the {} network outputs",
                t.action,
                train.output_dim()
            )));
        }
    }
    Ok(())
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Bootstrapped targets `r + gamma * max_a Q_target(s', a)`, or `r` when done.
pub fn td_targets(batch: &[Transition<'_>], target: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    batch
        .iter()
        .map(|t| {
            if t.done {
                Ok(t.reward)
            } else {
                Ok(t.reward + gamma * max_of(&target.forward(t.next_input)?))
            }
        })
        .collect()
}

pub fn loss(batch: &[Transition<'_>], train: &Mlp, target: &Mlp, gamma: f64) -> Result<f64> {
    check_batch(batch, train, target)?;
    let targets = td_targets(batch, target, gamma)?;
    let mut total = 0.0;
    for (t, y) in batch.iter().zip(targets) {
        let err = y - train.forward(t.input)?[t.action];
        total += err * err;
    }
    Ok(total / batch.len() as f64)
}

/// Loss and its exact gradient with respect to the training network only.
pub fn backward(
    batch: &[Transition<'_>],
    train: &Mlp,
    target: &Mlp,
    gamma: f64,
) -> Result<(f64, Gradients)> {
    check_batch(batch, train, target)?;
    let targets = td_targets(batch, target, gamma)?;
    let n = batch.len() as f64;
    let mut grads = Gradients::zeros_like(train);
    let mut acts = Vec::new();
    let mut delta = Vec::new();
    let mut delta_prev = Vec::new();
    let mut total = 0.0;

    for (t, y) in batch.iter().zip(targets) {
        train.forward_cached(t.input, &mut acts);
        let q = acts[train.layers.len()][t.action];
        let err = y - q;
        total += err * err;

        delta.clear();
        delta.resize(train.output_dim(), 0.0);
        delta[t.action] = -2.0 * err / n;

        for (li, layer) in train.layers.iter().enumerate().rev() {
            let input = &acts[li];
            let (gw, gb) = &mut grads.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if li == 0 {
                break;
            }
            delta_prev.clear();
            delta_prev.resize(layer.in_dim, 0.0);
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                for (acc, &w) in delta_prev.iter_mut().zip(row) {
                    *acc += d * w;
                }
            }
            // The previous layer's activation derivative; its outputs are acts[li].
            if train.layers[li - 1].activation == Activation::Relu {
                for (acc, &a) in delta_prev.iter_mut().zip(&acts[li]) {
                    if a <= 0.0 {
                        *acc = 0.0;
                    }
                }
            }
            std::mem::swap(&mut delta, &mut delta_prev);
        }
    }
    Ok((total / n, grads))
}

/// `theta <- theta - lr * grad`.
pub fn sgd_step(net: &mut Mlp, grads: &Gradients, lr: f64) -> Result<()> {
    if !grads.congruent(net) {
        return Err(Error::Shape("gradients do not match the network".into()));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Argument(format!("learning rate must be >= 0, got {lr}")));
    }
    for (l, (gw, gb)) in net.layers.iter_mut().zip(&grads.layers) {
        for (w, g) in l.weights.iter_mut().zip(gw) {
            *w -= lr * g;
        }
        for (b, g) in l.biases.iter_mut().zip(gb) {
            *b -= lr * g;
        }
    }
    Ok(())
}
