//! Experiment harness: configs, recipes, artifacts and their replay checks.

pub mod checks;
pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod replay;
pub mod runner;

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use crate::config::{Preset, Recipe, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::*;
use crate::runner::{produce, Artifacts};

pub use crate::config::{ConfigError, SCHEMA_VERSION};
pub use crate::error::exit;

fn constants_note(preset: Preset) -> String {
    match preset {
        Preset::Desk => "desk preset: scaled constants in simulation units, not the published values".into(),
        Preset::PaperScale => "paper-scale preset: published GRW constants, event-free at desk horizons".into(),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

/// Writes every reproducible artifact of `art` into `out` and returns the summary.
pub fn write_artifacts(cfg: &RunConfig, art: &Artifacts, out: &Path) -> Result<Summary> {
    create_dir(out)?;
    let hash = cfg.hash();
    write_text(&out.join(CONFIG_FILE), &cfg.to_toml())?;
    write_events(&out.join(&cfg.output.events), &art.events)?;
    write_csv(&out.join(&cfg.output.timeseries), &art.rows)?;
    if !art.growth.is_empty() {
        write_csv(&out.join(GROWTH_FILE), &art.growth)?;
    }
    if !art.visibility.is_empty() {
        write_csv(&out.join(VISIBILITY_FILE), &art.visibility)?;
        write_screen(&out.join(SCREEN_FILE), &art.screen, art.visibility.len())?;
    }
    if !art.marginals.is_empty() {
        write_csv(&out.join(MARGINALS_FILE), &art.marginals)?;
    }
    if !art.residuals.is_empty() {
        write_csv(&out.join(RESIDUALS_FILE), &art.residuals)?;
    }
    if !art.sweep.is_empty() {
        write_csv(&out.join(SWEEP_FILE), &art.sweep)?;
    }
    for (t, reg, rng) in &art.checkpoints {
        reg.save_checkpoint(&out.join(CHECKPOINT_DIR).join(format!("traj_{t:04}")), &hash, rng)?;
    }
    let (metrics, checks) = checks::evaluate(cfg, art);
    let summary = Summary {
        recipe: cfg.recipe.name().into(),
        seed: cfg.seed,
        config_hash: hash,
        preset: cfg.preset,
        constants: constants_note(cfg.preset),
        trajectories: cfg.trajectories,
        passed: checks.iter().all(|c| c.passed),
        metrics,
        checks,
    };
    write_json(&out.join(&cfg.output.summary), &summary)?;
    Ok(summary)
}

fn write_screen(path: &Path, screen: &[Vec<f64>], points: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| artifact_err(path, e))?;
    let mut header = vec!["x".to_string()];
    header.extend((0..points).map(|p| format!("point_{p}")));
    w.write_record(&header).map_err(|e| artifact_err(path, e))?;
    for row in screen {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(|e| artifact_err(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn artifact_err(path: &Path, e: impl ToString) -> HarnessError {
    HarnessError::Artifact { path: path.display().to_string(), detail: e.to_string() }
}

/// Runs the recipe named in `cfg`, writing artifacts under `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    run_point(cfg, out, 0)
}

fn run_point(cfg: &RunConfig, out: &Path, point: usize) -> Result<Summary> {
    log::info!("recipe {} seed {} -> {}", cfg.recipe.name(), cfg.seed, out.display());
    let art = if cfg.recipe == Recipe::Sweep { sweep(cfg, out)? } else { produce(cfg, point)? };
    let summary = write_artifacts(cfg, &art, out)?;
    for c in summary.failed_checks() {
        log::warn!("{}: check {} failed: {}", cfg.recipe.name(), c.name, c.detail);
    }
    Ok(summary)
}

/// Resolved config of sweep point `(v_c, F, f0)`.
pub fn sweep_point(cfg: &RunConfig, v_critical: usize, fraction_f: f64, base_magnitude: f64) -> RunConfig {
    let s = cfg.sweep.clone().expect("validated sweep table");
    let mut p = cfg.clone();
    p.recipe = s.base;
    p.sweep = None;
    let ccqm = p.ccqm.as_mut().expect("validated ccqm table");
    ccqm.v_critical = v_critical;
    ccqm.fraction_f = fraction_f;
    if p.lattice.base_magnitude.is_some() {
        p.lattice.base_magnitude = Some(base_magnitude);
    } else {
        p.lattice.base_magnitude_relative = Some(base_magnitude);
    }
    p
}

fn sweep(cfg: &RunConfig, out: &Path) -> Result<Artifacts> {
    let s = cfg.sweep.clone().expect("validated sweep table");
    let mut points = Vec::new();
    for &v in &s.v_critical {
        for &f in &s.fraction_f {
            for &b in &s.base_magnitude {
                points.push((v, f, b));
            }
        }
    }
    let rows = points
        .par_iter()
        .enumerate()
        .map(|(i, &(v, f, b))| {
            let p = sweep_point(cfg, v, f, b);
            p.validate()?;
            let dir = format!("point_{i:04}");
            let summary = run_point(&p, &out.join(&dir), i + 1)?;
            let events = summary.metrics.get("events").copied().unwrap_or(0.0) as usize;
            Ok(SweepRow { point: i, v_critical: v, fraction_f: f, base_magnitude: b, events, passed: summary.passed, dir })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Artifacts { sweep: rows, ..Artifacts::default() })
}

/// Runs `cfg` on a pool of `threads` workers (0 = rayon's default) and writes
/// the timestamped `meta.json` sidecar.
pub fn run_with_threads(cfg: &RunConfig, out: &Path, threads: usize) -> Result<Summary> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Artifact { path: "thread pool".into(), detail: e.to_string() })?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let clock = Instant::now();
    let summary = pool.install(|| run(cfg, out))?;
    let meta = Meta {
        started_unix_s: started,
        elapsed_s: clock.elapsed().as_secs_f64(),
        threads: pool.current_num_threads(),
        harness_version: env!("CARGO_PKG_VERSION").into(),
    };
    write_json(&out.join(META_FILE), &meta)?;
    Ok(summary)
}
