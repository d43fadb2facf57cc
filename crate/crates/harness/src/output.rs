//! Artifact formats. Everything except `meta.json` is a pure function of the
//! resolved config, so reruns with the same seed are byte-identical.
//!
//! `timeseries.csv` has one row per (trajectory, sample time, wavefunction,
//! particle) with the fixed columns of [`Row`].

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ccqm_core::CollapseEvent;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::Preset;
use crate::error::{HarnessError, Result};

pub const CONFIG_FILE: &str = "config.toml";
pub const META_FILE: &str = "meta.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const GROWTH_FILE: &str = "growth.csv";
pub const VISIBILITY_FILE: &str = "visibility.csv";
pub const SCREEN_FILE: &str = "screen.csv";
pub const MARGINALS_FILE: &str = "marginals.csv";
pub const RESIDUALS_FILE: &str = "residuals.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub trajectory: usize,
    pub time: f64,
    pub wavefunction: u64,
    pub n_particles: usize,
    pub relative_volume: usize,
    pub norm: f64,
    /// Particle slot within the wavefunction.
    pub particle: usize,
    /// RMS radius of the particle's marginal density.
    pub marginal_width: f64,
    /// Probability within the outer 5% of the grid on any axis.
    pub boundary_occupancy: f64,
}

/// One event-log line: a core event tagged with its trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedEvent {
    pub trajectory: usize,
    #[serde(flatten)]
    pub event: CollapseEvent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub n_particles: usize,
    pub relative_volume: usize,
    pub expected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityRow {
    pub point: usize,
    /// Absent for the collapse-free reference.
    pub v_critical: Option<usize>,
    pub visibility: f64,
    pub mean_collapses: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalRow {
    pub bin: usize,
    pub x_lo: f64,
    pub x_hi: f64,
    pub pre: f64,
    pub grw_mean: f64,
    pub grw_se: f64,
    pub ccqm_mean: f64,
    pub ccqm_se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub trajectory: usize,
    pub before: f64,
    pub grw: f64,
    pub ccqm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub v_critical: usize,
    pub fraction_f: f64,
    pub base_magnitude: f64,
    pub events: usize,
    pub passed: bool,
    pub dir: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub recipe: String,
    pub seed: u64,
    pub config_hash: String,
    pub preset: Preset,
    pub constants: String,
    pub trajectories: usize,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl Summary {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Wall-clock details kept out of the reproducible artifacts.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Meta {
    pub started_unix_s: f64,
    pub elapsed_s: f64,
    pub threads: usize,
    pub harness_version: String,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| HarnessError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| artifact(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| artifact(path, e))?;
    r.deserialize().collect::<std::result::Result<Vec<T>, _>>().map_err(|e| artifact(path, e))
}

pub fn write_events(path: &Path, events: &[TaggedEvent]) -> Result<()> {
    let mut w = create(path)?;
    for e in events {
        let line = serde_json::to_string(e).expect("event serializes");
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<TaggedEvent>> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| artifact(path, format!("line {}: {e}", n + 1)))?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| artifact(path, e))?;
    writeln!(w).map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| artifact(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn artifact(path: &Path, detail: impl ToString) -> HarnessError {
    HarnessError::Artifact { path: path.display().to_string(), detail: detail.to_string() }
}
