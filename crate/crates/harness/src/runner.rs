//! Recipe execution. Each recipe turns a resolved config into in-memory
//! artifacts; [`crate::checks`] derives the property checks from them.

use ccqm_core::ccqm::apply_ccqm_collapse;
use ccqm_core::event::EventModel;
use ccqm_core::grw::{grw_hit, sample_hit_schedule};
use ccqm_core::lattice::{marginal_density, relative_volume};
use ccqm_core::state::exchange_residual;
use ccqm_core::{stream, CollapseEvent, CollapseModel, ConfigField, Registry, SimRng};
use ndarray::Dimension;
use rayon::prelude::*;

use crate::checks::BOUNDARY_TOL;
use crate::config::{InitialState, ModelKind, Recipe, RunConfig};
use crate::error::Result;
use crate::output::*;

/// Fraction of each axis, per side, counted as boundary.
pub const BOUNDARY_BAND: f64 = 0.05;

#[derive(Debug, Default)]
pub struct Artifacts {
    pub events: Vec<TaggedEvent>,
    pub rows: Vec<Row>,
    pub growth: Vec<GrowthRow>,
    pub visibility: Vec<VisibilityRow>,
    /// Ensemble-mean screen densities: `x` then one column per sweep point.
    pub screen: Vec<Vec<f64>>,
    pub marginals: Vec<MarginalRow>,
    pub residuals: Vec<ResidualRow>,
    pub sweep: Vec<SweepRow>,
    pub checkpoints: Vec<(usize, Registry, SimRng)>,
}

pub fn collapse_model(cfg: &RunConfig) -> CollapseModel {
    match cfg.model {
        ModelKind::Unitary => CollapseModel::Unitary,
        ModelKind::Grw => CollapseModel::Grw(cfg.grw.expect("validated grw table")),
        ModelKind::Ccqm => CollapseModel::Ccqm(cfg.ccqm.clone().expect("validated ccqm table")),
    }
}

/// Stream index of trajectory `t` at sweep point `point`.
pub fn stream_index(point: usize, t: usize) -> u64 {
    ((point as u64) << 32) | t as u64
}

fn boundary_occupancy(field: &ConfigField) -> f64 {
    let m = field.lattice.grid_points;
    let band = ((BOUNDARY_BAND * m as f64).round() as usize).max(1);
    let p: f64 = field
        .amplitudes
        .indexed_iter()
        .filter(|(idx, _)| idx.slice().iter().any(|&i| i < band || i >= m - band))
        .map(|(_, z)| z.norm_sqr())
        .sum();
    p * field.lattice.point_volume()
}

fn marginal_width(field: &ConfigField, k: usize) -> ccqm_core::Result<f64> {
    let g = marginal_density(field, k)?;
    let xs = field.lattice.coordinates();
    let dv = field.lattice.dx().powi(g.ndim() as i32);
    let mut var = 0.0;
    for axis in 0..g.ndim() {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (idx, &w) in g.indexed_iter() {
            let x = xs[idx[axis]];
            s0 += w * dv;
            s1 += w * x * dv;
            s2 += w * x * x * dv;
        }
        let mean = s1 / s0;
        var += s2 / s0 - mean * mean;
    }
    Ok(var.max(0.0).sqrt())
}

pub fn field_rows(field: &ConfigField, wavefunction: u64, trajectory: usize) -> ccqm_core::Result<Vec<Row>> {
    let n = field.lattice.n_particles();
    let (volume, norm, boundary) = (relative_volume(field), field.norm(), boundary_occupancy(field));
    (0..n)
        .map(|k| {
            Ok(Row {
                trajectory,
                time: field.time,
                wavefunction,
                n_particles: n,
                relative_volume: volume,
                norm,
                particle: k,
                marginal_width: marginal_width(field, k)?,
                boundary_occupancy: boundary,
            })
        })
        .collect()
}

fn registry_rows(reg: &Registry, trajectory: usize) -> ccqm_core::Result<Vec<Row>> {
    let mut rows = Vec::new();
    for m in reg.members() {
        rows.extend(field_rows(&m.field, m.id, trajectory)?);
    }
    Ok(rows)
}

pub struct Trajectory {
    pub index: usize,
    pub events: Vec<CollapseEvent>,
    pub rows: Vec<Row>,
    pub registry: Registry,
    pub rng: SimRng,
}

/// Evolves the config's initial wavefunctions from `t = 0` to `t_end`.
pub fn run_trajectory(cfg: &RunConfig, index: usize, stream_idx: u64) -> Result<Trajectory> {
    let mut reg = Registry::new(cfg.merge_coefficient, cfg.seed)?;
    if let Some(m) = cfg.max_joint_points {
        reg.max_joint_points = m;
    }
    for f in cfg.initial_fields()? {
        reg.insert(f)?;
    }
    let model = collapse_model(cfg);
    let mut rng = stream(cfg.seed, stream_idx);
    let n_ticks = (cfg.t_end / cfg.dt - 1e-9).ceil().max(0.0) as u64;
    let mut rows = registry_rows(&reg, index)?;
    for tick in 1..=n_ticks {
        let before = cfg.stop_at_boundary.then(|| (reg.clone(), rng.clone()));
        reg.tick(&cfg.hamiltonian, cfg.dt, &model, &mut rng)?;
        if let Some((prev_reg, prev_rng)) = before {
            if reg.members().iter().any(|m| boundary_occupancy(&m.field) > BOUNDARY_TOL) {
                (reg, rng) = (prev_reg, prev_rng);
                let last = reg.members().first().map(|m| m.field.time);
                if rows.last().map(|r| r.time.to_bits()) != last.map(f64::to_bits) {
                    rows.extend(registry_rows(&reg, index)?);
                }
                break;
            }
        }
        let done = tick == n_ticks || cfg.max_events.is_some_and(|m| reg.event_log.len() >= m);
        if done || tick % cfg.output.sample_every as u64 == 0 {
            rows.extend(registry_rows(&reg, index)?);
        }
        if done {
            break;
        }
    }
    Ok(Trajectory { index, events: reg.event_log.clone(), rows, registry: reg, rng })
}

fn run_ensemble(cfg: &RunConfig, first_index: usize, point: usize, count: usize) -> Result<Vec<Trajectory>> {
    (0..count)
        .into_par_iter()
        .map(|t| run_trajectory(cfg, first_index + t, stream_index(point, t)))
        .collect()
}

fn absorb(art: &mut Artifacts, trajectories: Vec<Trajectory>, keep_checkpoints: bool) {
    for tr in trajectories {
        art.events.extend(tr.events.into_iter().map(|event| TaggedEvent { trajectory: tr.index, event }));
        art.rows.extend(tr.rows);
        if keep_checkpoints {
            art.checkpoints.push((tr.index, tr.registry, tr.rng));
        }
    }
}

/// Runs every recipe except `sweep`, which needs one directory per point.
pub fn produce(cfg: &RunConfig, point: usize) -> Result<Artifacts> {
    let mut art = Artifacts::default();
    match cfg.recipe {
        Recipe::Evolve | Recipe::FreeSpreadCcqm | Recipe::MergeThenCollapse => {
            let trs = run_ensemble(cfg, 0, point, cfg.trajectories)?;
            absorb(&mut art, trs, cfg.output.checkpoint);
        }
        Recipe::ExpGrowth => exp_growth(cfg, &mut art)?,
        Recipe::GrwRates => grw_rates(cfg, point, &mut art)?,
        Recipe::SymmetryCompare => symmetry_compare(cfg, point, &mut art)?,
        Recipe::StatisticsPreservation => statistics(cfg, point, &mut art)?,
        Recipe::DoubleSlit => double_slit(cfg, point, &mut art)?,
        Recipe::Sweep => unreachable!("sweeps are expanded by the caller"),
    }
    Ok(art)
}

fn exp_growth(cfg: &RunConfig, art: &mut Artifacts) -> Result<()> {
    let f0 = cfg.resolved_base_magnitude()?;
    let mut expected = 1;
    for n in 1..=cfg.particles.len() {
        let InitialState::FlatCells { count, .. } = &cfg.particles[n - 1].initial else {
            unreachable!("validated flat_cells");
        };
        expected *= count.iter().product::<usize>();
        let mut sub = cfg.clone();
        sub.particles.truncate(n);
        sub.particles.iter_mut().for_each(|p| p.wavefunction = 0);
        sub.lattice.base_magnitude = Some(f0);
        sub.lattice.base_magnitude_relative = None;
        let field = sub.initial_fields()?.remove(0);
        art.rows.extend(field_rows(&field, (n - 1) as u64, 0)?);
        art.growth.push(GrowthRow { n_particles: n, relative_volume: relative_volume(&field), expected });
    }
    Ok(())
}

fn grw_rates(cfg: &RunConfig, point: usize, art: &mut Artifacts) -> Result<()> {
    let params = cfg.grw.expect("validated grw table");
    let n = cfg.particles.len();
    let per: Vec<Vec<TaggedEvent>> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(cfg.seed, stream_index(point, t));
            let hits = sample_hit_schedule(n, params.lambda_rate, cfg.t_end, &mut rng)?;
            Ok(hits
                .into_iter()
                .map(|h| TaggedEvent {
                    trajectory: t,
                    event: CollapseEvent {
                        time: h.time,
                        model: EventModel::Grw,
                        particle_index: Some(h.particle),
                        center: Vec::new(),
                        width_param: params.alpha,
                        v_before: 0,
                        v_after: 0,
                        seed: cfg.seed,
                        wavefunction: None,
                    },
                })
                .collect())
        })
        .collect::<ccqm_core::Result<_>>()?;
    art.events = per.into_iter().flatten().collect();
    Ok(())
}

fn symmetry_compare(cfg: &RunConfig, point: usize, art: &mut Artifacts) -> Result<()> {
    let field = cfg.initial_fields()?.remove(0);
    let grw = cfg.grw.expect("validated grw table");
    let ccqm = cfg.ccqm.clone().expect("validated ccqm table");
    let before = exchange_residual(&field, 0, 1)?;
    let per: Vec<(ResidualRow, [CollapseEvent; 2])> = (0..cfg.trajectories)
        .into_par_iter()
        .map(|t| {
            // Both models draw from the same stream.
            let mut rng = stream(cfg.seed, stream_index(point, t));
            let (hit, mut ev_grw) = grw_hit(&field, 0, &grw, &mut rng)?;
            let mut rng = stream(cfg.seed, stream_index(point, t));
            let jump = apply_ccqm_collapse(&field, &ccqm, None, &mut rng)?;
            let mut ev_ccqm = jump.event;
            for ev in [&mut ev_grw, &mut ev_ccqm] {
                ev.seed = cfg.seed;
                ev.wavefunction = Some(0);
            }
            let row = ResidualRow {
                trajectory: t,
                before,
                grw: exchange_residual(&hit, 0, 1)? / hit.norm(),
                ccqm: exchange_residual(&jump.field, 0, 1)? / jump.field.norm(),
            };
            Ok((row, [ev_grw, ev_ccqm]))
        })
        .collect::<ccqm_core::Result<_>>()?;
    for (row, evs) in per {
        let t = row.trajectory;
        art.residuals.push(row);
        art.events.extend(evs.into_iter().map(|event| TaggedEvent { trajectory: t, event }));
    }
    Ok(())
}

/// Bin of each grid point so that every bin holds about `1/bins` of `density`.
/// The midpoint cumulative mass decides, so no bin is skipped while every
/// point carries less than `1/bins`.
fn quantile_bins(density: &[f64], bins: usize) -> Vec<usize> {
    let total: f64 = density.iter().sum();
    let mut below = 0.0;
    density
        .iter()
        .map(|&d| {
            let mid = (below + d / 2.0) / total;
            below += d;
            ((mid * bins as f64) as usize).min(bins - 1)
        })
        .collect()
}

fn binned_marginal(field: &ConfigField, bin_of: &[usize], bins: usize) -> ccqm_core::Result<Vec<f64>> {
    let g = marginal_density(field, 0)?;
    let dx = field.lattice.dx();
    let mut q = vec![0.0; bins];
    for (&b, &v) in bin_of.iter().zip(g.iter()) {
        q[b] += v * dx;
    }
    Ok(q)
}

struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    n: usize,
}

impl Moments {
    fn new(bins: usize) -> Self {
        Moments { sum: vec![0.0; bins], sum_sq: vec![0.0; bins], n: 0 }
    }

    fn add(&mut self, q: &[f64]) {
        for (b, &v) in q.iter().enumerate() {
            self.sum[b] += v;
            self.sum_sq[b] += v * v;
        }
        self.n += 1;
    }

    fn mean_se(&self, b: usize) -> (f64, f64) {
        let n = self.n as f64;
        let mean = self.sum[b] / n;
        let var = ((self.sum_sq[b] - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }
}

fn statistics(cfg: &RunConfig, point: usize, art: &mut Artifacts) -> Result<()> {
    let field = cfg.initial_fields()?.remove(0);
    let grw = cfg.grw.expect("validated grw table");
    let ccqm = cfg.ccqm.clone().expect("validated ccqm table");
    let bins = cfg.statistics.clone().unwrap_or_default().bins;
    let trials = cfg.trajectories;
    let density = marginal_density(&field, 0)?;
    let bin_of = quantile_bins(density.as_slice().expect("standard layout"), bins);
    let pre = binned_marginal(&field, &bin_of, bins)?;
    // Centers are drawn with the width the jump will use, as on every jump after
    // the first in a trajectory.
    let warm = apply_ccqm_collapse(&field, &ccqm, None, &mut stream(cfg.seed, stream_index(point, 2 * trials)))?;
    let per: Vec<(Vec<f64>, Vec<f64>, [CollapseEvent; 2])> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(cfg.seed, stream_index(point, t));
            let (hit, mut ev_grw) = grw_hit(&field, 0, &grw, &mut rng)?;
            let mut rng = stream(cfg.seed, stream_index(point, trials + t));
            let jump = apply_ccqm_collapse(&field, &ccqm, Some(warm.epsilon), &mut rng)?;
            let mut ev_ccqm = jump.event;
            for ev in [&mut ev_grw, &mut ev_ccqm] {
                ev.seed = cfg.seed;
                ev.wavefunction = Some(0);
            }
            Ok((binned_marginal(&hit, &bin_of, bins)?, binned_marginal(&jump.field, &bin_of, bins)?, [ev_grw, ev_ccqm]))
        })
        .collect::<ccqm_core::Result<_>>()?;
    let (mut mg, mut mc) = (Moments::new(bins), Moments::new(bins));
    for (t, (qg, qc, evs)) in per.into_iter().enumerate() {
        mg.add(&qg);
        mc.add(&qc);
        art.events.extend(evs.into_iter().map(|event| TaggedEvent { trajectory: t, event }));
    }
    let xs = field.lattice.coordinates();
    let dx = field.lattice.dx();
    for b in 0..bins {
        // Empty bins are left out; the check then sees fewer rows than bins.
        let Some(first) = bin_of.iter().position(|&k| k == b) else { continue };
        let last = bin_of.iter().rposition(|&k| k == b).expect("bin has a first point");
        let (grw_mean, grw_se) = mg.mean_se(b);
        let (ccqm_mean, ccqm_se) = mc.mean_se(b);
        art.marginals.push(MarginalRow {
            bin: b,
            x_lo: xs[first] - dx / 2.0,
            x_hi: xs[last] + dx / 2.0,
            pre: pre[b],
            grw_mean,
            grw_se,
            ccqm_mean,
            ccqm_se,
        });
    }
    Ok(())
}

/// `(max − min)/(max + min)` of `density` over grid points with `|x| ≤ window`.
pub fn visibility(xs: &[f64], density: &[f64], window: f64) -> f64 {
    let inside = xs.iter().zip(density).filter(|(x, _)| x.abs() <= window).map(|(_, &d)| d);
    let (lo, hi) = inside.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    (hi - lo) / (hi + lo)
}

/// One fringe spacing `h t / (m d)` of the far-field pattern.
pub fn fringe_spacing(cfg: &RunConfig) -> f64 {
    let InitialState::TwoSource { separation, .. } = cfg.particles[0].initial else {
        unreachable!("validated two_source");
    };
    cfg.hamiltonian.h_sim * cfg.t_end / (cfg.particles[0].mass * separation)
}

fn double_slit(cfg: &RunConfig, point: usize, art: &mut Artifacts) -> Result<()> {
    let ds = cfg.double_slit.clone().expect("validated double_slit table");
    let window = ds.window.unwrap_or_else(|| fringe_spacing(cfg));
    let xs = cfg.initial_fields()?[0].lattice.coordinates();
    art.screen = xs.iter().map(|&x| vec![x]).collect();
    let levels: Vec<Option<usize>> = std::iter::once(None).chain(ds.v_critical.iter().copied().map(Some)).collect();
    let mut first_index = 0;
    for (p, v_c) in levels.into_iter().enumerate() {
        let mut sub = cfg.clone();
        let count = match v_c {
            None => {
                sub.model = ModelKind::Unitary;
                1
            }
            Some(v) => {
                sub.model = ModelKind::Ccqm;
                sub.ccqm.as_mut().expect("validated ccqm table").v_critical = v;
                cfg.trajectories
            }
        };
        let trs = run_ensemble(&sub, first_index, (point << 8) | p, count)?;
        let mut mean = vec![0.0; xs.len()];
        let mut jumps = 0;
        for tr in &trs {
            let field = &tr.registry.members()[0].field;
            let g = marginal_density(field, 0)?;
            mean.iter_mut().zip(g.iter()).for_each(|(m, &v)| *m += v / count as f64);
            jumps += tr.events.iter().filter(|e| e.model == EventModel::CcqmJump).count();
        }
        art.screen.iter_mut().zip(&mean).for_each(|(row, &d)| row.push(d));
        art.visibility.push(VisibilityRow {
            point: p,
            v_critical: v_c,
            visibility: visibility(&xs, &mean, window),
            mean_collapses: jumps as f64 / count as f64,
        });
        absorb(art, trs, false);
        first_index += count;
    }
    Ok(())
}
