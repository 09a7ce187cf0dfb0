//! Python module `uavsec`: channel formulas, the environment, the network
//! and the two trainers.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use uavsec_core::channel::{self, ChannelParams, Position3};
use uavsec_core::dqn::DqnParams;
use uavsec_core::env::{self, Action};
use uavsec_core::tabular::{self, QLearnParams};
use uavsec_core::{eval, metrics, Error, WorldConfig};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::Divergence { .. } | Error::State(_) | Error::Csv(_) => {
            PyRuntimeError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

type Xyz = (f64, f64, f64);

fn pos((x, y, z): Xyz) -> PyResult<Position3> {
    Position3::new(x, y, z).map_err(to_py)
}

fn xyz(p: Position3) -> Xyz {
    (p.x, p.y, p.z)
}

fn params(zeta0_over_sigma2: f64) -> PyResult<ChannelParams> {
    // p_max and bounds do not enter the capacity formulas.
    ChannelParams::new(zeta0_over_sigma2, 1.0, (1.0, 1.0)).map_err(to_py)
}

#[pyfunction]
fn distance(a: Xyz, b: Xyz) -> PyResult<f64> {
    Ok(channel::distance(&pos(a)?, &pos(b)?))
}

#[pyfunction]
fn a2g_gain(d_u: f64, zeta0: f64) -> PyResult<f64> {
    channel::a2g_gain(d_u, zeta0).map_err(to_py)
}

#[pyfunction]
fn g2g_gain(d_j: f64, zeta0: f64) -> PyResult<f64> {
    channel::g2g_gain(d_j, zeta0).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, d_u, zeta0_over_sigma2 = 1e4))]
fn capacity_ue(p: f64, d_u: f64, zeta0_over_sigma2: f64) -> PyResult<f64> {
    channel::capacity_ue(p, d_u, &params(zeta0_over_sigma2)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (p, d_j, zeta0_over_sigma2 = 1e4))]
fn capacity_eve(p: f64, d_j: f64, zeta0_over_sigma2: f64) -> PyResult<f64> {
    channel::capacity_eve(p, d_j, &params(zeta0_over_sigma2)?).map_err(to_py)
}

#[pyfunction]
fn secrecy_rate_per_slot(c_u: f64, c_j: f64) -> f64 {
    channel::secrecy_rate_per_slot(c_u, c_j)
}

#[pyfunction]
fn secrecy_capacity(per_slot: Vec<(f64, f64)>) -> PyResult<f64> {
    channel::secrecy_capacity(&per_slot).map_err(to_py)
}

#[pyfunction]
fn q_update(q_old: f64, reward: f64, max_next_q: f64, alpha: f64, gamma: f64) -> f64 {
    tabular::q_update(q_old, reward, max_next_q, alpha, gamma)
}

#[pyfunction]
fn reward_capacity_identity(reward: f64) -> PyResult<f64> {
    env::reward_capacity_identity(reward).map_err(to_py)
}

/// Scenario configuration. Keyword arguments override the defaults.
#[pyclass(name = "World", from_py_object)]
#[derive(Clone)]
struct PyWorld {
    inner: WorldConfig,
}

#[pymethods]
impl PyWorld {
    #[new]
    #[pyo3(signature = (*, ue_pos=None, eve_pos=None, uav_start=None, altitude=None, bounds=None,
                        grid_step=None, p_max=None, p1=None, initial_power=None,
                        zeta0_over_sigma2=None, slots=None, random_start=None, observe_power=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        ue_pos: Option<Xyz>,
        eve_pos: Option<Xyz>,
        uav_start: Option<Xyz>,
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
    ) -> PyResult<Self> {
        let mut w = WorldConfig::default();
        if let Some(a) = altitude {
            w.altitude = a;
            w.uav_start.z = a;
        }
        if let Some(p) = p_max {
            w.p_max = p;
            w.p1 = p / 10.0;
            w.initial_power = p / 2.0;
        }
        if let Some(p) = ue_pos {
            w.ue_pos = pos(p)?;
        }
        if let Some(p) = eve_pos {
            w.eve_pos = pos(p)?;
        }
        if let Some(p) = uav_start {
            w.uav_start = pos(p)?;
        }
        w.bounds = bounds.unwrap_or(w.bounds);
        w.grid_step = grid_step.unwrap_or(w.grid_step);
        w.p1 = p1.unwrap_or(w.p1);
        w.initial_power = initial_power.unwrap_or(w.initial_power);
        w.zeta0_over_sigma2 = zeta0_over_sigma2.unwrap_or(w.zeta0_over_sigma2);
        w.slots = slots.unwrap_or(w.slots);
        w.random_start = random_start.unwrap_or(w.random_start);
        w.observe_power = observe_power.unwrap_or(w.observe_power);
        w.validate().map_err(to_py)?;
        Ok(PyWorld { inner: w })
    }

    /// Loads the `[world]` section of an experiment config file.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        Ok(PyWorld {
            inner: uavsec_core::load_config(path).map_err(to_py)?.world,
        })
    }

    #[getter]
    fn ue_pos(&self) -> Xyz {
        xyz(self.inner.ue_pos)
    }

    #[getter]
    fn eve_pos(&self) -> Xyz {
        xyz(self.inner.eve_pos)
    }

    #[getter]
    fn altitude(&self) -> f64 {
        self.inner.altitude
    }

    #[getter]
    fn p_max(&self) -> f64 {
        self.inner.p_max
    }

    #[getter]
    fn slots(&self) -> usize {
        self.inner.slots
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner)
    }
}

#[pyclass(name = "StepOutcome", get_all, skip_from_py_object)]
struct PyStepOutcome {
    state: Xyz,
    reward: f64,
    done: bool,
    c_u: f64,
    c_j: f64,
    secrecy: f64,
    uav_pos: Xyz,
    power: f64,
}

#[pymethods]
impl PyStepOutcome {
    fn __repr__(&self) -> String {
        format!(
            "StepOutcome(state={:?}, reward={}, done={}, c_u={}, c_j={}, power={})",
            self.state, self.reward, self.done, self.c_u, self.c_j, self.power
        )
    }
}

fn state_tuple(s: env::State) -> Xyz {
    (s.dx, s.dy, s.dz)
}

#[pyclass(name = "Env", skip_from_py_object)]
struct PyEnv {
    inner: uavsec_core::Env,
}

#[pymethods]
impl PyEnv {
    #[new]
    fn new(world: &PyWorld) -> PyResult<Self> {
        Ok(PyEnv {
            inner: uavsec_core::Env::new(world.inner.clone()).map_err(to_py)?,
        })
    }

    #[pyo3(signature = (seed = 0))]
    fn reset(&mut self, seed: u64) -> Xyz {
        state_tuple(self.inner.reset(seed))
    }

    /// Takes action index 0..12 (`move * 3 + power`; moves +x, -x, +y, -y;
    /// power up, hold, down).
    fn step(&mut self, action: usize) -> PyResult<PyStepOutcome> {
        let out = self
            .inner
            .step(Action::from_index(action).map_err(to_py)?)
            .map_err(to_py)?;
        let d = out.diagnostics;
        Ok(PyStepOutcome {
            state: state_tuple(out.next_state),
            reward: out.reward,
            done: out.done,
            c_u: d.c_u,
            c_j: d.c_j,
            secrecy: d.secrecy,
            uav_pos: xyz(d.uav_pos),
            power: d.power,
        })
    }

    #[getter]
    fn state(&self) -> Xyz {
        state_tuple(self.inner.state())
    }

    #[getter]
    fn uav_pos(&self) -> Xyz {
        xyz(self.inner.uav_pos())
    }

    #[getter]
    fn power(&self) -> f64 {
        self.inner.power()
    }

    #[getter]
    fn slot(&self) -> usize {
        self.inner.slot()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }
}

/// Closed-form optimum: `(uav_pos, power, reward)`.
#[pyfunction]
fn optimal_static_policy(world: &PyWorld) -> PyResult<(Xyz, f64, f64)> {
    let o = env::optimal_static_policy(&world.inner).map_err(to_py)?;
    Ok((xyz(o.uav_pos), o.power, o.reward))
}

#[pyclass(name = "EpisodeMetrics", get_all, skip_from_py_object)]
struct PyEpisodeMetrics {
    episode: usize,
    cumulative_reward: f64,
    mean_c_u: f64,
    mean_c_j: f64,
    secrecy_capacity: f64,
    final_dx: f64,
    final_dy: f64,
    final_power: f64,
    epsilon: f64,
}

impl From<metrics::EpisodeMetrics> for PyEpisodeMetrics {
    fn from(m: metrics::EpisodeMetrics) -> Self {
        PyEpisodeMetrics {
            episode: m.episode,
            cumulative_reward: m.cumulative_reward,
            mean_c_u: m.mean_c_u,
            mean_c_j: m.mean_c_j,
            secrecy_capacity: m.secrecy_capacity,
            final_dx: m.final_dx,
            final_dy: m.final_dy,
            final_power: m.final_power,
            epsilon: m.epsilon,
        }
    }
}

#[pymethods]
impl PyEpisodeMetrics {
    fn __repr__(&self) -> String {
        format!(
            "EpisodeMetrics(episode={}, cumulative_reward={}, secrecy_capacity={})",
            self.episode, self.cumulative_reward, self.secrecy_capacity
        )
    }
}

fn convert(rows: Vec<metrics::EpisodeMetrics>) -> Vec<PyEpisodeMetrics> {
    rows.into_iter().map(Into::into).collect()
}

#[pyfunction]
fn static_optimal_metrics(world: &PyWorld) -> PyResult<PyEpisodeMetrics> {
    Ok(eval::static_optimal_metrics(&world.inner).map_err(to_py)?.into())
}

#[pyclass(name = "Mlp", from_py_object)]
#[derive(Clone)]
struct PyMlp {
    inner: uavsec_core::Mlp,
}

#[pymethods]
impl PyMlp {
    #[new]
    #[pyo3(signature = (sizes, seed = 0))]
    fn new(sizes: Vec<usize>, seed: u64) -> PyResult<Self> {
        Ok(PyMlp {
            inner: uavsec_core::Mlp::new(&sizes, seed).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(PyMlp {
            inner: uavsec_core::Mlp::load(path, None).map_err(to_py)?,
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(to_py)
    }

    fn forward(&self, input: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.forward(&input).map_err(to_py)
    }

    #[getter]
    fn sizes(&self) -> Vec<usize> {
        self.inner.sizes()
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.inner.param_count()
    }
}

#[pyclass(name = "EvalReport", get_all, skip_from_py_object)]
struct PyEvalReport {
    mean_cumulative_reward: f64,
    mean_secrecy_capacity: f64,
    final_positions: Vec<Xyz>,
    final_powers: Vec<f64>,
    final_rewards: Vec<f64>,
}

impl From<eval::EvalReport> for PyEvalReport {
    fn from(r: eval::EvalReport) -> Self {
        PyEvalReport {
            mean_cumulative_reward: r.mean_cumulative_reward,
            mean_secrecy_capacity: r.mean_secrecy_capacity,
            final_positions: r.rollouts.iter().map(|x| xyz(x.final_pos)).collect(),
            final_powers: r.rollouts.iter().map(|x| x.final_power).collect(),
            final_rewards: r.rollouts.iter().map(|x| x.final_reward).collect(),
        }
    }
}

/// Trains a DQN; returns `(network, per-episode metrics)`. Unset keywords use
/// the library defaults.
#[pyfunction]
#[pyo3(signature = (world, *, episodes=None, gamma=None, learning_rate=None, batch_size=None,
                    target_sync=None, replay_capacity=None, hidden=None,
                    bootstrap_at_time_limit=false, seed=0))]
#[allow(clippy::too_many_arguments)]
fn train_dqn(
    py: Python<'_>,
    world: &PyWorld,
    episodes: Option<usize>,
    gamma: Option<f64>,
    learning_rate: Option<f64>,
    batch_size: Option<usize>,
    target_sync: Option<usize>,
    replay_capacity: Option<usize>,
    hidden: Option<Vec<usize>>,
    bootstrap_at_time_limit: bool,
    seed: u64,
) -> PyResult<(PyMlp, Vec<PyEpisodeMetrics>)> {
    let d = DqnParams::default();
    let params = DqnParams {
        episodes: episodes.unwrap_or(d.episodes),
        gamma: gamma.unwrap_or(d.gamma),
        learning_rate: learning_rate.unwrap_or(d.learning_rate),
        batch_size: batch_size.unwrap_or(d.batch_size),
        target_sync: target_sync.unwrap_or(d.target_sync),
        replay_capacity: replay_capacity.unwrap_or(d.replay_capacity),
        hidden: hidden.unwrap_or(d.hidden),
        bootstrap_at_time_limit,
        seed,
        ..d
    };
    let world = world.inner.clone();
    let out = py
        .detach(move || uavsec_core::train_dqn(&world, &params))
        .map_err(to_py)?;
    Ok((PyMlp { inner: out.net }, convert(out.metrics)))
}

/// Greedy rollouts of `net`.
#[pyfunction]
#[pyo3(signature = (net, world, episodes = 1, seed = 0))]
fn evaluate_dqn(net: &PyMlp, world: &PyWorld, episodes: usize, seed: u64) -> PyResult<PyEvalReport> {
    Ok(eval::evaluate_net(&net.inner, &world.inner, episodes, seed)
        .map_err(to_py)?
        .into())
}

/// Tabular Q-learning; returns per-episode metrics.
#[pyfunction]
#[pyo3(signature = (world, *, episodes=None, alpha=None, gamma=None, seed=0))]
fn train_tabular(
    world: &PyWorld,
    episodes: Option<usize>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    seed: u64,
) -> PyResult<Vec<PyEpisodeMetrics>> {
    let d = QLearnParams::default();
    let params = QLearnParams {
        episodes: episodes.unwrap_or(d.episodes),
        alpha: alpha.unwrap_or(d.alpha),
        gamma: gamma.unwrap_or(d.gamma),
        ..d
    };
    let out = tabular::train_tabular(&world.inner, &params, seed).map_err(to_py)?;
    Ok(convert(out.metrics))
}

/// Runs value iteration; returns `(sweeps, residual)`.
#[pyfunction]
#[pyo3(signature = (world, gamma, tol = 1e-10))]
fn value_iteration(world: &PyWorld, gamma: f64, tol: f64) -> PyResult<(usize, f64)> {
    let vi = tabular::value_iteration(&world.inner, gamma, tol).map_err(to_py)?;
    Ok((vi.sweeps, vi.residual))
}

#[pymodule]
pub fn uavsec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_ACTIONS", env::NUM_ACTIONS)?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(a2g_gain, m)?)?;
    m.add_function(wrap_pyfunction!(g2g_gain, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_ue, m)?)?;
    m.add_function(wrap_pyfunction!(capacity_eve, m)?)?;
    m.add_function(wrap_pyfunction!(secrecy_rate_per_slot, m)?)?;
    m.add_function(wrap_pyfunction!(secrecy_capacity, m)?)?;
    m.add_function(wrap_pyfunction!(q_update, m)?)?;
    m.add_function(wrap_pyfunction!(reward_capacity_identity, m)?)?;
    m.add_function(wrap_pyfunction!(optimal_static_policy, m)?)?;
    m.add_function(wrap_pyfunction!(static_optimal_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(train_dqn, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_dqn, m)?)?;
    m.add_function(wrap_pyfunction!(train_tabular, m)?)?;
    m.add_function(wrap_pyfunction!(value_iteration, m)?)?;
    m.add_class::<PyWorld>()?;
    m.add_class::<PyEnv>()?;
    m.add_class::<PyStepOutcome>()?;
    m.add_class::<PyEpisodeMetrics>()?;
    m.add_class::<PyMlp>()?;
    m.add_class::<PyEvalReport>()?;
    Ok(())
}
