//! Property checks derived from artifacts alone, so `replay` reaches the same
//! verdicts from files on disk as the original run did in memory.

use std::collections::{BTreeMap, BTreeSet};

use ccqm_core::event::EventModel;
use ccqm_core::grw::{mean_wait, GRW_LAMBDA_PER_SECOND, SECONDS_PER_YEAR};

use crate::config::{ModelKind, Recipe, RunConfig};
use crate::output::{Check, TaggedEvent};
use crate::runner::Artifacts;

pub const NORM_TOL: f64 = 1e-9;
pub const BOUNDARY_TOL: f64 = 1e-6;
pub const SYMMETRY_BROKEN: f64 = 1e-3;
pub const SYMMETRY_KEPT: f64 = 1e-10;

pub type Metrics = BTreeMap<String, f64>;

/// `round(F·v)` with ties to even, at least one cell.
pub fn jump_target(fraction: f64, v_before: usize) -> usize {
    ((fraction * v_before as f64).round_ties_even() as usize).max(1)
}

fn by_trajectory(events: &[TaggedEvent]) -> BTreeMap<usize, Vec<&TaggedEvent>> {
    let mut map: BTreeMap<usize, Vec<&TaggedEvent>> = BTreeMap::new();
    for e in events {
        map.entry(e.trajectory).or_default().push(e);
    }
    map
}

pub fn evaluate(cfg: &RunConfig, art: &Artifacts) -> (Metrics, Vec<Check>) {
    let mut metrics = Metrics::new();
    let mut checks = Vec::new();

    let foreign = art.events.iter().filter(|e| e.event.seed != cfg.seed).count();
    checks.push(Check::new("event_seeds", foreign == 0, format!("{foreign} events carry a foreign seed")));
    metrics.insert("events".into(), art.events.len() as f64);

    if !art.rows.is_empty() {
        row_checks(art, &mut metrics, &mut checks);
    }
    match cfg.recipe {
        Recipe::Evolve | Recipe::FreeSpreadCcqm | Recipe::MergeThenCollapse => {
            ordered_times(art, &mut checks);
            if cfg.model == ModelKind::Ccqm {
                jump_contract(cfg, art, &mut metrics, &mut checks);
            }
            if cfg.recipe == Recipe::FreeSpreadCcqm {
                sawtooth(cfg, art, &mut checks);
            }
            if cfg.recipe == Recipe::MergeThenCollapse {
                merge_sequence(cfg, art, &mut checks);
            }
        }
        Recipe::ExpGrowth => {
            let bad: Vec<String> = art
                .growth
                .iter()
                .filter(|g| g.relative_volume != g.expected)
                .map(|g| format!("N={}: {} != {}", g.n_particles, g.relative_volume, g.expected))
                .collect();
            for g in &art.growth {
                metrics.insert(format!("volume_n{}", g.n_particles), g.relative_volume as f64);
            }
            checks.push(Check::new("exponential_growth", bad.is_empty() && !art.growth.is_empty(), bad.join("; ")));
        }
        Recipe::GrwRates => grw_rates(cfg, art, &mut metrics, &mut checks),
        Recipe::SymmetryCompare => {
            let max = |f: fn(&crate::output::ResidualRow) -> f64| art.residuals.iter().map(f).fold(0.0, f64::max);
            let min_grw = art.residuals.iter().map(|r| r.grw).fold(f64::INFINITY, f64::min);
            let (before, ccqm) = (max(|r| r.before), max(|r| r.ccqm));
            metrics.insert("residual_before".into(), before);
            metrics.insert("residual_grw_min".into(), min_grw);
            metrics.insert("residual_ccqm_max".into(), ccqm);
            checks.push(Check::new("input_symmetric", before <= SYMMETRY_KEPT, format!("{before:e}")));
            checks.push(Check::new("grw_breaks_symmetry", min_grw > SYMMETRY_BROKEN, format!("min residual {min_grw:e}")));
            checks.push(Check::new("ccqm_keeps_symmetry", ccqm <= SYMMETRY_KEPT, format!("max residual {ccqm:e}")));
        }
        Recipe::StatisticsPreservation => {
            let stats = cfg.statistics.clone().unwrap_or_default();
            let band = stats.band;
            let resolved = art.marginals.len() == stats.bins;
            checks.push(Check::new(
                "bins_resolved",
                resolved,
                format!("{} of {} bins hold grid points", art.marginals.len(), stats.bins),
            ));
            for (name, pick) in [
                ("grw", (|r: &crate::output::MarginalRow| (r.grw_mean, r.grw_se)) as fn(&_) -> (f64, f64)),
                ("ccqm", |r| (r.ccqm_mean, r.ccqm_se)),
            ] {
                let mut worst: f64 = 0.0;
                let mut failing = Vec::new();
                for r in &art.marginals {
                    let (mean, se) = pick(r);
                    let dev = (mean - r.pre).abs();
                    let z = if se > 0.0 { dev / se } else if dev <= 1e-12 { 0.0 } else { f64::INFINITY };
                    worst = worst.max(z);
                    if z > band {
                        failing.push(r.bin.to_string());
                    }
                }
                metrics.insert(format!("{name}_max_z"), worst);
                checks.push(Check::new(
                    &format!("{name}_marginal_preserved"),
                    failing.is_empty() && resolved,
                    format!("max |Δ|/se = {worst:.3}, bins outside {band}σ: [{}]", failing.join(",")),
                ));
            }
        }
        Recipe::DoubleSlit => {
            let ds = cfg.double_slit.clone().expect("validated double_slit table");
            for r in &art.visibility {
                let key = r.v_critical.map_or("visibility_free".to_string(), |v| format!("visibility_vc{v}"));
                metrics.insert(key, r.visibility);
            }
            let reference = art.visibility.iter().find(|r| r.v_critical.is_none());
            let sweep: Vec<_> = art.visibility.iter().filter(|r| r.v_critical.is_some()).collect();
            let above = reference.is_some_and(|r| r.visibility >= ds.min_visibility)
                && sweep.first().is_some_and(|r| r.visibility >= ds.min_visibility);
            checks.push(Check::new(
                "interference_survives",
                above,
                format!(
                    "free {:.4}, v_c={} {:.4}",
                    reference.map_or(f64::NAN, |r| r.visibility),
                    sweep.first().and_then(|r| r.v_critical).unwrap_or(0),
                    sweep.first().map_or(f64::NAN, |r| r.visibility)
                ),
            ));
            let monotone = sweep.len() >= 2 && sweep.windows(2).all(|w| w[1].visibility < w[0].visibility);
            let trend: Vec<String> =
                sweep.iter().map(|r| format!("{}:{:.4}", r.v_critical.unwrap_or(0), r.visibility)).collect();
            checks.push(Check::new("visibility_decreases", monotone, trend.join(" ")));
        }
        Recipe::Sweep => {
            let failed: Vec<String> = art.sweep.iter().filter(|r| !r.passed).map(|r| r.dir.clone()).collect();
            metrics.insert("points".into(), art.sweep.len() as f64);
            checks.push(Check::new("all_points_pass", failed.is_empty() && !art.sweep.is_empty(), failed.join(",")));
        }
    }
    (metrics, checks)
}

fn row_checks(art: &Artifacts, metrics: &mut Metrics, checks: &mut Vec<Check>) {
    let drift = art.rows.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max);
    let boundary = art.rows.iter().map(|r| r.boundary_occupancy).fold(0.0, f64::max);
    metrics.insert("max_norm_drift".into(), drift);
    metrics.insert("max_boundary_occupancy".into(), boundary);
    checks.push(Check::new("norm", drift <= NORM_TOL, format!("max |‖ψ‖ − 1| = {drift:e}")));
    checks.push(Check::new("boundary_occupancy", boundary <= BOUNDARY_TOL, format!("max {boundary:e}")));

    // Particle count per (trajectory, time) is the number of rows there.
    let mut counts: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut current: Option<(usize, u64, usize)> = None;
    for r in &art.rows {
        let key = (r.trajectory, r.time.to_bits());
        match &mut current {
            Some((t, time, n)) if (*t, *time) == key => *n += 1,
            _ => {
                if let Some((t, _, n)) = current {
                    counts.entry(t).or_default().insert(n);
                }
                current = Some((key.0, key.1, 1));
            }
        }
    }
    if let Some((t, _, n)) = current {
        counts.entry(t).or_default().insert(n);
    }
    let varying: Vec<String> = counts.iter().filter(|(_, s)| s.len() > 1).map(|(t, _)| t.to_string()).collect();
    checks.push(Check::new(
        "particle_count_conserved",
        varying.is_empty(),
        format!("trajectories with varying counts: [{}]", varying.join(",")),
    ));
}

fn ordered_times(art: &Artifacts, checks: &mut Vec<Check>) {
    let unordered = by_trajectory(&art.events)
        .values()
        .filter(|evs| evs.windows(2).any(|w| w[1].event.time < w[0].event.time))
        .count();
    checks.push(Check::new("event_order", unordered == 0, format!("{unordered} trajectories out of order")));
}

fn jumps(art: &Artifacts) -> impl Iterator<Item = &TaggedEvent> {
    art.events.iter().filter(|e| e.event.model == EventModel::CcqmJump)
}

fn jump_contract(cfg: &RunConfig, art: &Artifacts, metrics: &mut Metrics, checks: &mut Vec<Check>) {
    let p = cfg.ccqm.clone().expect("validated ccqm table");
    let mut worst = 0usize;
    let mut below = 0;
    let mut n = 0;
    for e in jumps(art) {
        let ev = &e.event;
        worst = worst.max(ev.v_after.abs_diff(jump_target(p.fraction_f, ev.v_before)));
        below += usize::from(ev.v_before < p.v_critical);
        n += 1;
    }
    metrics.insert("jumps".into(), n as f64);
    metrics.insert("max_volume_miss".into(), worst as f64);
    checks.push(Check::new("volume_contract", worst <= 1, format!("{n} jumps, max |v_after − round(F·v_before)| = {worst}")));
    checks.push(Check::new("jump_trigger", below == 0, format!("{below} jumps below v_c = {}", p.v_critical)));
}

fn sawtooth(cfg: &RunConfig, art: &Artifacts, checks: &mut Vec<Check>) {
    let v_c = cfg.ccqm.as_ref().expect("validated ccqm table").v_critical;
    let events = by_trajectory(&art.events);
    let mut short = Vec::new();
    let mut low_peaks = 0;
    for t in 0..cfg.trajectories {
        let js: Vec<&TaggedEvent> =
            events.get(&t).map(|v| v.iter().copied().filter(|e| e.event.model == EventModel::CcqmJump).collect()).unwrap_or_default();
        if js.len() < 2 || js.iter().any(|e| e.event.v_after >= v_c) {
            short.push(t.to_string());
        }
        // The maximum between consecutive jumps, from the series and the closing jump.
        for w in js.windows(2) {
            let (a, b) = (w[0].event.time, w[1].event.time);
            let series = art
                .rows
                .iter()
                .filter(|r| r.trajectory == t && r.time > a && r.time < b)
                .map(|r| r.relative_volume)
                .max()
                .unwrap_or(0);
            if series.max(w[1].event.v_before) < v_c {
                low_peaks += 1;
            }
        }
    }
    checks.push(Check::new(
        "sawtooth",
        short.is_empty(),
        format!("trajectories without a repeated spread-collapse cycle: [{}]", short.join(",")),
    ));
    checks.push(Check::new("inter_collapse_maxima", low_peaks == 0, format!("{low_peaks} cycles peaked below v_c = {v_c}")));
}

fn merge_sequence(cfg: &RunConfig, art: &Artifacts, checks: &mut Vec<Check>) {
    let events = by_trajectory(&art.events);
    let mut bad = Vec::new();
    for t in 0..cfg.trajectories {
        let evs = events.get(&t).cloned().unwrap_or_default();
        let first = |m: EventModel| evs.iter().position(|e| e.event.model == m);
        let ok = match (first(EventModel::Merge), first(EventModel::CcqmJump), first(EventModel::Split)) {
            (Some(m), Some(j), Some(s)) => m < j && m < s,
            _ => false,
        };
        if !ok {
            bad.push(t.to_string());
        }
    }
    checks.push(Check::new(
        "merge_collapse_split",
        bad.is_empty(),
        format!("trajectories missing merge, then jump and split: [{}]", bad.join(",")),
    ));
}

fn grw_rates(cfg: &RunConfig, art: &Artifacts, metrics: &mut Metrics, checks: &mut Vec<Check>) {
    let lambda = cfg.grw.expect("validated grw table").lambda_rate;
    let n = cfg.particles.len();
    let expected = mean_wait(n as f64, lambda);
    let mut gaps = Vec::new();
    let window = 1.0 / lambda;
    let n_windows = (cfg.t_end / window).floor() as usize;
    let mut counts = Vec::new();
    for t in 0..cfg.trajectories {
        let times: Vec<f64> = art.events.iter().filter(|e| e.trajectory == t).map(|e| e.event.time).collect();
        let mut prev = 0.0;
        for &x in &times {
            gaps.push(x - prev);
            prev = x;
        }
        let mut c = vec![0usize; n_windows];
        for &x in &times {
            let w = (x / window) as usize;
            if w < n_windows {
                c[w] += 1;
            }
        }
        counts.extend(c);
    }
    let k = gaps.len() as f64;
    let mean = gaps.iter().sum::<f64>() / k;
    let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let se = sd / k.sqrt();
    let cm = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    let cv = counts.iter().map(|&c| (c as f64 - cm).powi(2)).sum::<f64>() / (counts.len() as f64 - 1.0);
    let dispersion = cv / cm;
    metrics.insert("mean_inter_hit".into(), mean);
    metrics.insert("expected_inter_hit".into(), expected);
    metrics.insert("inter_hit_se".into(), se);
    metrics.insert("count_dispersion".into(), dispersion);
    metrics.insert("published_wait_one_particle_years".into(), mean_wait(1.0, GRW_LAMBDA_PER_SECOND) / SECONDS_PER_YEAR);
    metrics.insert("published_wait_1e23_particles_s".into(), mean_wait(1e23, GRW_LAMBDA_PER_SECOND));
    checks.push(Check::new(
        "mean_inter_hit",
        (mean - expected).abs() <= 3.0 * se,
        format!("{mean:.6} vs 1/(Nλ) = {expected:.6}, 3 SE = {:.6}", 3.0 * se),
    ));
    checks.push(Check::new(
        "poisson_dispersion",
        (0.9..=1.1).contains(&dispersion),
        format!("variance/mean over {} windows of length 1/λ = {dispersion:.4}", counts.len()),
    ));
}
