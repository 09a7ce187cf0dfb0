//! Per-episode metrics shared by every run mode, and their CSV form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel;
use crate::env::StepOutcome;
use crate::error::{Error, Result};

/// One row of the training-curve CSV. Field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub cumulative_reward: f64,
    pub mean_c_u: f64,
    pub mean_c_j: f64,
    pub secrecy_capacity: f64,
    pub final_dx: f64,
    pub final_dy: f64,
    pub final_power: f64,
    pub epsilon: f64,
}

pub const CSV_COLUMNS: [&str; 9] = [
    "episode",
    "cumulative_reward",
    "mean_c_u",
    "mean_c_j",
    "secrecy_capacity",
    "final_dx",
    "final_dy",
    "final_power",
    "epsilon",
];

/// Collects step outcomes over one episode.
#[derive(Debug, Default, Clone)]
pub struct EpisodeAccumulator {
    cumulative_reward: f64,
    capacities: Vec<(f64, f64)>,
    last: Option<StepOutcome>,
}

impl EpisodeAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, outcome: &StepOutcome) {
        self.cumulative_reward += outcome.reward;
        self.capacities
            .push((outcome.diagnostics.c_u, outcome.diagnostics.c_j));
        self.last = Some(*outcome);
    }

    pub fn cumulative_reward(&self) -> f64 {
        self.cumulative_reward
    }

    pub fn last(&self) -> Option<&StepOutcome> {
        self.last.as_ref()
    }

    pub fn finish(&self, episode: usize, epsilon: f64) -> Result<EpisodeMetrics> {
        let last = self
            .last
            .ok_or_else(|| Error::Argument("episode recorded no slots".into()))?;
        let n = self.capacities.len() as f64;
        Ok(EpisodeMetrics {
            episode,
            cumulative_reward: self.cumulative_reward,
            mean_c_u: self.capacities.iter().map(|c| c.0).sum::<f64>() / n,
            mean_c_j: self.capacities.iter().map(|c| c.1).sum::<f64>() / n,
            secrecy_capacity: channel::secrecy_capacity(&self.capacities)?,
            final_dx: last.next_state.dx,
            final_dy: last.next_state.dy,
            final_power: last.diagnostics.power,
            epsilon,
        })
    }
}

/// Writes a headered CSV, one row per episode. Floats use Rust's shortest
/// round-trip formatting, so the output is locale-independent and parses
/// back to identical values.
pub fn write_csv<W: std::io::Write>(writer: W, rows: &[EpisodeMetrics]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Argument("no metrics to export".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn export_training_curve(path: impl AsRef<Path>, rows: &[EpisodeMetrics]) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(std::io::BufWriter::new(file), rows)
}

pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<EpisodeMetrics>> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Argument(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn load_training_curve(path: impl AsRef<Path>) -> Result<Vec<EpisodeMetrics>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file)
}
