//! Re-derives a run's property checks from its artifact directory.

use std::path::Path;

use ccqm_core::lattice::relative_volume;
use ccqm_core::Registry;
use serde::{Deserialize, Serialize};

use crate::checks::{evaluate, NORM_TOL};
use crate::config::{Recipe, RunConfig};
use crate::error::{HarnessError, Result};
use crate::output::*;
use crate::runner::Artifacts;

pub const REPLAY_FILE: &str = "replay.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub recipe: String,
    pub checks: Vec<Check>,
    pub passed: bool,
}

fn optional_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        read_csv(path)
    } else {
        Ok(Vec::new())
    }
}

pub fn replay(dir: &Path) -> Result<ReplayReport> {
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let summary: Summary = read_json(&dir.join(&cfg.output.summary))?;
    let mut checks = Vec::new();
    checks.push(Check::new(
        "config_hash",
        summary.config_hash == cfg.hash(),
        format!("summary {} vs config {}", summary.config_hash, cfg.hash()),
    ));

    let mut art = Artifacts {
        events: read_events(&dir.join(&cfg.output.events))?,
        rows: read_csv(&dir.join(&cfg.output.timeseries))?,
        growth: optional_csv(&dir.join(GROWTH_FILE))?,
        visibility: optional_csv(&dir.join(VISIBILITY_FILE))?,
        marginals: optional_csv(&dir.join(MARGINALS_FILE))?,
        residuals: optional_csv(&dir.join(RESIDUALS_FILE))?,
        sweep: optional_csv(&dir.join(SWEEP_FILE))?,
        ..Artifacts::default()
    };
    if cfg.recipe == Recipe::Sweep {
        for row in &mut art.sweep {
            let sub = replay(&dir.join(&row.dir))?;
            row.passed = sub.passed;
        }
    }
    let (_, derived) = evaluate(&cfg, &art);
    for c in &derived {
        let recorded = summary.checks.iter().find(|s| s.name == c.name).map(|s| s.passed);
        checks.push(Check::new(
            &format!("agrees:{}", c.name),
            recorded == Some(c.passed),
            format!("recorded {recorded:?}, replayed {}", c.passed),
        ));
    }
    checks.extend(derived);
    checks.extend(snapshot_checks(dir, &cfg, &art)?);

    let report = ReplayReport { recipe: cfg.recipe.name().into(), passed: checks.iter().all(|c| c.passed), checks };
    write_json(&dir.join(REPLAY_FILE), &report)?;
    Ok(report)
}

/// Final registry states must match the last time-series sample of each trajectory.
fn snapshot_checks(dir: &Path, cfg: &RunConfig, art: &Artifacts) -> Result<Vec<Check>> {
    let root = dir.join(CHECKPOINT_DIR);
    if !root.exists() {
        return Ok(Vec::new());
    }
    let mut entries: Vec<_> = std::fs::read_dir(&root)
        .map_err(|e| HarnessError::io(&root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    let mut mismatches = Vec::new();
    let hash = cfg.hash();
    for path in &entries {
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let Some(t) = name.strip_prefix("traj_").and_then(|s| s.parse::<usize>().ok()) else {
            continue;
        };
        let (reg, _, stored_hash): (Registry, _, String) = Registry::load_checkpoint(path)?;
        if stored_hash != hash {
            mismatches.push(format!("{name}: config hash"));
        }
        for m in reg.members() {
            let last = art
                .rows
                .iter()
                .rev()
                .find(|r| r.trajectory == t && r.wavefunction == m.id && r.time.to_bits() == m.field.time.to_bits());
            match last {
                Some(r) if r.relative_volume == relative_volume(&m.field) && (m.field.norm() - 1.0).abs() <= NORM_TOL => {}
                Some(_) => mismatches.push(format!("{name}: wavefunction {} differs from its last sample", m.id)),
                None => mismatches.push(format!("{name}: wavefunction {} has no final sample", m.id)),
            }
        }
    }
    Ok(vec![Check::new(
        "snapshots",
        mismatches.is_empty(),
        format!("{} checkpoints; {}", entries.len(), mismatches.join("; ")),
    )])
}
