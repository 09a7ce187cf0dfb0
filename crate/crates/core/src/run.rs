//! Experiment runner: one entry point per mode, all writing the same
//! artifact layout (manifest, metrics CSV, optional checkpoint).

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dqn::{self, episode_seed};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::eval::{self, RandomPolicy};
use crate::metrics::{self, EpisodeMetrics};
use crate::tabular;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Dqn,
    Tabular,
    Random,
    StaticOptimal,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dqn => "dqn",
            Mode::Tabular => "tabular",
            Mode::Random => "random",
            Mode::StaticOptimal => "static-optimal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub mode: Mode,
    pub seed: u64,
    pub code_version: String,
    pub status: RunStatus,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub error: Option<String>,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub config: ExperimentConfig,
}

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const WEIGHTS_FILE: &str = "dqn.weights";
pub const QTABLE_FILE: &str = "qtable.csv";

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).expect("manifest is representable as TOML");
        std::fs::write(&path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(dir: &Path) -> Result<RunManifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path,
            reason: e.to_string(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub metrics: Vec<EpisodeMetrics>,
    pub out_dir: PathBuf,
    pub outputs: Vec<String>,
}

impl RunSummary {
    /// Mean secrecy capacity over the last `n` metric rows.
    pub fn tail_secrecy(&self, n: usize) -> f64 {
        let tail = &self.metrics[self.metrics.len().saturating_sub(n)..];
        tail.iter().map(|m| m.secrecy_capacity).sum::<f64>() / tail.len() as f64
    }
}

/// Runs one experiment and writes its artifacts into `out_dir`.
///
/// The manifest is written with status `running` before any work starts and
/// rewritten at the end with the final status and every file produced.
pub fn run_experiment(mode: Mode, config: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunSummary> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut config = config.clone();
    config.dqn.seed = seed;
    let mut manifest = RunManifest {
        mode,
        seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        status: RunStatus::Running,
        started_unix: now_unix(),
        finished_unix: None,
        error: None,
        outputs: vec![MANIFEST_FILE.to_string()],
        config: config.clone(),
    };
    manifest.write(out_dir)?;

    let result = execute(mode, &config, seed, out_dir, &mut manifest.outputs);
    manifest.finished_unix = Some(now_unix());
    match &result {
        Ok(_) => manifest.status = RunStatus::Complete,
        Err(e) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(e.to_string());
        }
    }
    manifest.write(out_dir)?;
    let metrics = result?;
    Ok(RunSummary {
        mode,
        seed,
        metrics,
        out_dir: out_dir.to_path_buf(),
        outputs: manifest.outputs,
    })
}

fn execute(
    mode: Mode,
    config: &ExperimentConfig,
    seed: u64,
    out_dir: &Path,
    outputs: &mut Vec<String>,
) -> Result<Vec<EpisodeMetrics>> {
    let metrics = match mode {
        Mode::Dqn => {
            let outcome = dqn::train_dqn(&config.world, &config.dqn)?;
            outcome.net.save(out_dir.join(WEIGHTS_FILE))?;
            outputs.push(WEIGHTS_FILE.to_string());
            outcome.metrics
        }
        Mode::Tabular => {
            let outcome = tabular::train_tabular(&config.world, &config.tabular, seed)?;
            outcome.table.save(out_dir.join(QTABLE_FILE))?;
            outputs.push(QTABLE_FILE.to_string());
            outcome.metrics
        }
        Mode::Random => random_baseline(config, seed)?,
        Mode::StaticOptimal => vec![eval::static_optimal_metrics(&config.world)?],
    };
    metrics::export_training_curve(out_dir.join(METRICS_FILE), &metrics)?;
    outputs.push(METRICS_FILE.to_string());
    Ok(metrics)
}

/// Uniform-random actions for as many episodes as DQN training uses.
pub fn random_baseline(config: &ExperimentConfig, seed: u64) -> Result<Vec<EpisodeMetrics>> {
    let mut env = Env::new(config.world.clone())?;
    let mut policy = RandomPolicy::new(seed);
    (0..config.dqn.episodes)
        .map(|k| {
            let mut m = eval::rollout(&mut env, episode_seed(seed, k), k, &mut policy)?.metrics;
            m.epsilon = 1.0;
            Ok(m)
        })
        .collect()
}

/// Runs one experiment per seed in parallel, each in `out_dir/seed-<n>`.
pub fn sweep(mode: Mode, config: &ExperimentConfig, seeds: &[u64], out_dir: &Path) -> Vec<Result<RunSummary>> {
    use rayon::prelude::*;
    seeds
        .par_iter()
        .map(|&seed| run_experiment(mode, config, seed, &out_dir.join(format!("seed-{seed}"))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.world.slots = 10;
        c.dqn.episodes = 3;
        c.dqn.hidden = vec![8];
        c.tabular.episodes = 3;
        c
    }

    #[test]
    fn static_optimal_writes_one_row() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(Mode::StaticOptimal, &small(), 0, dir.path()).unwrap();
        assert_eq!(s.metrics.len(), 1);
        let back = metrics::load_training_curve(dir.path().join(METRICS_FILE)).unwrap();
        assert_eq!(back, s.metrics);
        let m = RunManifest::read(dir.path()).unwrap();
        assert_eq!(m.status, RunStatus::Complete);
        assert_eq!(m.outputs, vec![MANIFEST_FILE, METRICS_FILE]);
    }

    #[test]
    fn every_mode_lists_its_artifacts() {
        for (mode, extra) in [
            (Mode::Dqn, Some(WEIGHTS_FILE)),
            (Mode::Tabular, Some(QTABLE_FILE)),
            (Mode::Random, None),
        ] {
            let dir = tempfile::tempdir().unwrap();
            let s = run_experiment(mode, &small(), 4, dir.path()).unwrap();
            assert_eq!(s.metrics.len(), 3);
            let m = RunManifest::read(dir.path()).unwrap();
            for f in &m.outputs {
                assert!(dir.path().join(f).exists(), "{f} missing");
            }
            if let Some(extra) = extra {
                assert!(m.outputs.iter().any(|o| o == extra));
            }
        }
    }

    #[test]
    fn failed_run_is_flagged_in_manifest() {
        let mut c = small();
        // Off-lattice power ladder makes tabular training fail after the
        // manifest is written.
        c.world.p1 = 0.3;
        let dir = tempfile::tempdir().unwrap();
        assert!(run_experiment(Mode::Tabular, &c, 0, dir.path()).is_err());
        let m = RunManifest::read(dir.path()).unwrap();
        assert_eq!(m.status, RunStatus::Failed);
        assert!(m.error.is_some());
    }
}
