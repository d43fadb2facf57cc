//! Critical-volume collapse.
//!
//! A wavefunction whose relative volume reaches `v_critical` either splits into
//! independent factors or is localized in configuration space by a Gaussian jump
//! `Π_k j_ε(x_k − c_k)`, with `ε` chosen so that the relative volume drops to
//! `round(F · v)`. The jumped field is projected with the exchange operator `S`,
//! so (anti)symmetry under exchange of identical particles survives the jump.
//! The center `c` is drawn with probability `∝ ‖S(J_c ψ)‖²`.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::HamiltonianSpec;
use crate::event::{CollapseEvent, EventModel};
use crate::grw::{convolve_axis, squared_kernel};
use crate::lattice::{for_each_index, flat_index, relative_volume, CellMap, ConfigField, LatticeSpec};
use crate::rng::sample_categorical;
use crate::state::{exchange_permutations, permute_particles, symmetrize};

/// Attempts (center draws) before a collapse gives up.
pub const MAX_COLLAPSE_ATTEMPTS: usize = 16;

/// Relative change of `ε` at which the center/`ε` fixed point is accepted.
pub const FIXED_POINT_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcqmParams {
    /// Critical relative volume `v_c`, in cells.
    pub v_critical: usize,
    /// Target ratio `F` of post- to pre-collapse volume.
    pub fraction_f: f64,
    /// `κ_split` in `p₀·exp(−w/κ_split)`.
    #[serde(default)]
    pub split_coefficient: f64,
    /// `p₀`, the split probability of a non-interacting sub-system.
    #[serde(default)]
    pub split_probability: f64,
    /// Simulated time between volume checks.
    pub check_interval: f64,
    /// Iterate center sampling and the `ε` solve to a fixed point instead of
    /// sampling with the provisional `ε`.
    #[serde(default)]
    pub exact_center_epsilon: bool,
}

impl CcqmParams {
    pub fn new(v_critical: usize, fraction_f: f64, check_interval: f64) -> Result<Self> {
        let p = CcqmParams {
            v_critical,
            fraction_f,
            split_coefficient: 0.0,
            split_probability: 0.0,
            check_interval,
            exact_center_epsilon: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_critical < 2 {
            return Err(Error::Config(format!("v_critical must be at least 2, got {}", self.v_critical)));
        }
        if !(self.fraction_f > 0.0 && self.fraction_f < 1.0) {
            return Err(Error::Config(format!("fraction_f must lie in (0, 1), got {}", self.fraction_f)));
        }
        if !(self.split_coefficient >= 0.0 && self.split_coefficient.is_finite()) {
            return Err(Error::Config(format!("split_coefficient must be >= 0, got {}", self.split_coefficient)));
        }
        if !(0.0..=1.0).contains(&self.split_probability) {
            return Err(Error::Config(format!("split_probability must lie in [0, 1], got {}", self.split_probability)));
        }
        if !(self.check_interval > 0.0 && self.check_interval.is_finite()) {
            return Err(Error::Config(format!("check_interval must be positive, got {}", self.check_interval)));
        }
        Ok(())
    }
}

/// `round(F · v)` with ties to even, at least one cell.
pub fn target_volume(v_before: usize, fraction_f: f64) -> usize {
    ((fraction_f * v_before as f64).round_ties_even() as usize).max(1)
}

pub fn check_critical(field: &ConfigField, params: &CcqmParams) -> bool {
    relative_volume(field) >= params.v_critical
}

/// Starting `ε` when no previous jump is available: `1/((F·v)^{1/D} · a²)`, with
/// `a` the geometric mean cell length.
pub fn initial_epsilon(lattice: &LatticeSpec, v_before: usize, fraction_f: f64) -> f64 {
    let dims = lattice.total_dim() as f64;
    let log_a: f64 = (0..lattice.total_dim())
        .map(|a| lattice.cell_lengths[lattice.particle_of_axis(a)].ln())
        .sum::<f64>()
        / dims;
    let a = log_a.exp();
    1.0 / ((fraction_f * v_before.max(1) as f64).powf(1.0 / dims) * a * a)
}

fn check_centers(lattice: &LatticeSpec, centers: &[Vec<f64>]) -> Result<()> {
    if centers.len() != lattice.n_particles() {
        return Err(Error::Config(format!(
            "{} centers given for {} particles",
            centers.len(),
            lattice.n_particles()
        )));
    }
    for (k, c) in centers.iter().enumerate() {
        if c.len() != lattice.particles[k].spatial_dim {
            return Err(Error::Config(format!("center {k} has {} coordinates, expected {}", c.len(), lattice.particles[k].spatial_dim)));
        }
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

/// Unsymmetrized product `Π_k (ε/π)^{d_k/4} exp(−ε |x_k − c_k|²/2)` on the joint grid.
pub fn product_jump(lattice: &LatticeSpec, centers: &[Vec<f64>], epsilon: f64) -> Result<Vec<f64>> {
    check_centers(lattice, centers)?;
    check_epsilon(epsilon)?;
    let coords = lattice.coordinates();
    let flat_centers: Vec<f64> = centers.iter().flatten().copied().collect();
    let tables: Vec<Vec<f64>> = flat_centers
        .iter()
        .map(|&c| {
            coords
                .iter()
                .map(|&x| {
                    let d = lattice.min_image(x - c);
                    (-0.5 * epsilon * d * d).exp()
                })
                .collect()
        })
        .collect();
    let prefactor = (epsilon / PI).powf(lattice.total_dim() as f64 / 4.0);
    let mut out = vec![0.0; lattice.n_points()];
    for_each_index(&lattice.shape(), |flat, idx| {
        out[flat] = prefactor * idx.iter().zip(&tables).map(|(&i, t)| t[i]).product::<f64>();
    });
    Ok(out)
}

/// Jump factor `S Π_k j_ε(x_k − c_k)`, (anti)symmetrized over identical bosons (fermions).
///
/// For identical fermions at coincident centers the antisymmetrized product
/// vanishes and [`Error::DegenerateJump`] is returned. The collapse itself uses
/// [`jump_and_project`], which applies `S` to the jumped wavefunction instead.
pub fn ccqm_jump_factor(lattice: &LatticeSpec, centers: &[Vec<f64>], epsilon: f64) -> Result<ArrayD<f64>> {
    let j = product_jump(lattice, centers, epsilon)?;
    let peak = j.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let field = ConfigField::new(
        lattice.clone(),
        ArrayD::from_shape_vec(IxDyn(&lattice.shape()), j.into_iter().map(|v| Complex64::new(v, 0.0)).collect())
            .expect("lattice shape"),
        0.0,
    )?;
    let s = symmetrize(&field)?;
    let out = s.amplitudes.mapv(|z| z.re);
    let s_peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(s_peak > 1e-12 * peak) {
        return Err(Error::DegenerateJump(format!("symmetrized jump factor vanishes for centers {centers:?}")));
    }
    Ok(out)
}

/// `S(J ψ)`, not normalized.
pub fn jump_and_project(field: &ConfigField, jump: &[f64]) -> Result<ConfigField> {
    let mut out = field.clone();
    for (z, &j) in out.as_slice_mut().iter_mut().zip(jump) {
        *z *= j;
    }
    symmetrize(&out)
}

/// Applies the jump at `centers` with width `epsilon` and renormalizes.
pub fn collapse_with(field: &ConfigField, centers: &[Vec<f64>], epsilon: f64) -> Result<ConfigField> {
    let j = product_jump(&field.lattice, centers, epsilon)?;
    let raw_norm = {
        let s: f64 = field.as_slice().iter().zip(&j).map(|(z, j)| z.norm_sqr() * j * j).sum();
        s.sqrt()
    };
    let phi = jump_and_project(field, &j)?;
    let n = phi.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(raw_norm > 1e-300) {
        return Err(Error::ZeroSupport(format!("jump at {centers:?} misses the wavefunction")));
    }
    if !(n > 1e-12 * raw_norm) {
        return Err(Error::DegenerateJump(format!("exchange projection annihilates the jump at {centers:?}")));
    }
    phi.normalized()
}

/// Relative volume of the normalized `S(J_ε ψ)`.
fn post_volume(field: &ConfigField, cells: &CellMap, centers: &[Vec<f64>], epsilon: f64) -> Result<usize> {
    let j = product_jump(&field.lattice, centers, epsilon)?;
    let phi = jump_and_project(field, &j)?;
    let amps = phi.as_slice();
    let norm = (amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * field.lattice.point_volume()).sqrt();
    if !(norm > 1e-300) {
        return Ok(0);
    }
    Ok(cells.count_above(amps, field.lattice.base_magnitude * norm))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSolution {
    pub epsilon: f64,
    pub v_post: usize,
    /// Whether `|v_post − target| ≤ 1`; otherwise `epsilon` is the best found.
    pub in_band: bool,
}

const BRACKET_FACTOR: f64 = 4.0;
const MAX_BRACKET_STEPS: usize = 80;
const MAX_BISECTIONS: usize = 200;

/// Finds `ε` such that the jump at `centers` leaves `target_v ± 1` occupied cells.
pub fn solve_epsilon(field: &ConfigField, centers: &[Vec<f64>], target_v: usize) -> Result<EpsilonSolution> {
    let v = relative_volume(field);
    let guess = initial_epsilon(&field.lattice, v, target_v as f64 / v.max(1) as f64);
    solve_epsilon_from(field, centers, target_v, guess)
}

/// [`solve_epsilon`] starting the bracket search at `initial`.
///
/// Post-jump volume is non-increasing in `ε` up to one-cell jitter; the bracket
/// is grown geometrically and then bisected in `log ε`. The first `ε` landing in
/// the `±1` band is returned.
pub fn solve_epsilon_from(
    field: &ConfigField,
    centers: &[Vec<f64>],
    target_v: usize,
    initial: f64,
) -> Result<EpsilonSolution> {
    check_centers(&field.lattice, centers)?;
    check_epsilon(initial)?;
    let cells = CellMap::new(&field.lattice);
    let mut best: Option<EpsilonSolution> = None;
    let mut eval = |eps: f64| -> Result<EpsilonSolution> {
        let v_post = post_volume(field, &cells, centers, eps)?;
        let sol = EpsilonSolution { epsilon: eps, v_post, in_band: v_post.abs_diff(target_v) <= 1 };
        let better = match &best {
            None => true,
            Some(b) => v_post.abs_diff(target_v) < b.v_post.abs_diff(target_v),
        };
        if better {
            best = Some(sol);
        }
        Ok(sol)
    };

    let first = eval(initial)?;
    if first.in_band {
        return Ok(first);
    }
    // lo: volume above the band; hi: volume below it.
    let (mut lo, mut hi);
    if first.v_post > target_v {
        lo = initial;
        hi = initial;
        let mut found = false;
        for _ in 0..MAX_BRACKET_STEPS {
            hi *= BRACKET_FACTOR;
            let s = eval(hi)?;
            if s.in_band {
                return Ok(s);
            }
            if s.v_post < target_v {
                found = true;
                break;
            }
            lo = hi;
        }
        if !found {
            return Ok(fallback(best));
        }
    } else {
        hi = initial;
        lo = initial;
        let mut found = false;
        for _ in 0..MAX_BRACKET_STEPS {
            lo /= BRACKET_FACTOR;
            let s = eval(lo)?;
            if s.in_band {
                return Ok(s);
            }
            if s.v_post > target_v {
                found = true;
                break;
            }
            hi = lo;
        }
        if !found {
            return Ok(fallback(best));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        let s = eval(mid)?;
        if s.in_band {
            return Ok(s);
        }
        if s.v_post > target_v {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(fallback(best))
}

fn fallback(best: Option<EpsilonSolution>) -> EpsilonSolution {
    let b = best.expect("at least one evaluation");
    log::warn!("no jump width reaches the target band; using ε = {} with volume {}", b.epsilon, b.v_post);
    b
}

/// Candidate collapse centers (flat grid indices) with unnormalized weights `‖S(J_c ψ)‖²`.
#[derive(Clone, Debug)]
pub struct CenterDistribution {
    pub candidates: Vec<usize>,
    pub weights: Vec<f64>,
}

impl CenterDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }
}

/// Grid points of occupied cells, or every grid point if no cell is occupied.
pub fn center_candidates(field: &ConfigField) -> Vec<usize> {
    let cells = CellMap::new(&field.lattice);
    let means = cells.mean_magnitudes(field.as_slice());
    let f0 = field.lattice.base_magnitude;
    let occupied: Vec<usize> =
        (0..cells.point_cell.len()).filter(|&p| means[cells.point_cell[p] as usize] > f0).collect();
    if occupied.is_empty() {
        (0..field.lattice.n_points()).collect()
    } else {
        occupied
    }
}

fn multi_index(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0usize; shape.len()];
    for a in (0..shape.len()).rev() {
        idx[a] = flat % shape[a];
        flat /= shape[a];
    }
    idx
}

/// Configuration point of flat grid index `flat`, split per particle.
pub fn grid_point(lattice: &LatticeSpec, flat: usize) -> Vec<Vec<f64>> {
    let idx = multi_index(&lattice.shape(), flat);
    (0..lattice.n_particles())
        .map(|k| lattice.axis_range(k).map(|a| lattice.coordinate(idx[a])).collect())
        .collect()
}

/// Exact discrete center law for width `epsilon`, restricted to [`center_candidates`].
pub fn center_distribution(field: &ConfigField, epsilon: f64) -> Result<CenterDistribution> {
    check_epsilon(epsilon)?;
    let lat = &field.lattice;
    let candidates = center_candidates(field);
    let perms = exchange_permutations(lat);
    let dims = lat.total_dim();
    let m = lat.grid_points;
    let amps = field.as_slice();

    let weights = if perms.len() == 1 {
        // ‖J_c ψ‖² = Σ_x Π_a exp(−ε (x_a − c_a)²) |ψ(x)|²: separable convolution.
        let kernel = squared_kernel(lat, epsilon);
        let mut p: Vec<f64> = amps.iter().map(|z| z.norm_sqr()).collect();
        for axis in 0..dims {
            p = convolve_axis(&p, dims, m, axis, &kernel);
        }
        candidates.iter().map(|&c| p[c]).collect()
    } else {
        exchange_weights(field, epsilon, &candidates)?
    };
    Ok(CenterDistribution { candidates, weights })
}

/// `(1/n!) Σ_π s_π ⟨J_c ψ, P_π(J_c ψ)⟩` for every candidate `c`.
fn exchange_weights(field: &ConfigField, epsilon: f64, candidates: &[usize]) -> Result<Vec<f64>> {
    let lat = &field.lattice;
    let shape = lat.shape();
    let m = lat.grid_points;
    let amps = field.as_slice();
    let perms = exchange_permutations(lat);

    // Flat index of the permuted configuration, per permutation.
    let index_field = ConfigField::new(
        lat.clone(),
        ArrayD::from_shape_vec(IxDyn(&shape), (0..lat.n_points()).map(|i| Complex64::new(i as f64, 0.0)).collect())
            .expect("lattice shape"),
        0.0,
    )?;
    let peak = amps.iter().fold(0.0f64, |a, z| a.max(z.norm_sqr()));
    let cutoff = 1e-16 * peak;
    let support: Vec<usize> = (0..amps.len()).filter(|&i| amps[i].norm_sqr() > cutoff).collect();

    // Pairs (x, πx, sign · Re ψ*(x) ψ(πx)).
    let mut terms: Vec<(Vec<usize>, Vec<usize>, f64)> = Vec::new();
    for p in &perms {
        let map = permute_particles(&index_field, &p.perm)?;
        let map = map.as_slice();
        for &x in &support {
            let px = map[x].re as usize;
            let w = p.sign * (amps[x].conj() * amps[px]).re;
            if w != 0.0 {
                terms.push((multi_index(&shape, x), multi_index(&shape, px), w));
            }
        }
    }
    let coords = lat.coordinates();
    let mut table = vec![0.0; m * m];
    for c in 0..m {
        for x in 0..m {
            let d = lat.min_image(coords[x] - coords[c]);
            table[c * m + x] = (-0.5 * epsilon * d * d).exp();
        }
    }
    let scale = 1.0 / perms.len() as f64;
    Ok(candidates
        .iter()
        .map(|&c| {
            let ci = multi_index(&shape, c);
            let s: f64 = terms
                .iter()
                .map(|(x, px, w)| {
                    let mut j = *w;
                    for a in 0..ci.len() {
                        let row = &table[ci[a] * m..];
                        j *= row[x[a]] * row[px[a]];
                    }
                    j
                })
                .sum();
            (s * scale).max(0.0)
        })
        .collect())
}

/// Draws a configuration-space collapse center for jump width `epsilon`.
pub fn sample_ccqm_center<R: Rng + ?Sized>(field: &ConfigField, epsilon: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let dist = center_distribution(field, epsilon)?;
    let i = sample_categorical(&dist.weights, rng)
        .ok_or_else(|| Error::ZeroSupport("collapse-center distribution vanishes".into()))?;
    Ok(grid_point(&field.lattice, dist.candidates[i]))
}

#[derive(Clone, Debug)]
pub struct CcqmOutcome {
    pub field: ConfigField,
    pub event: CollapseEvent,
    pub epsilon: f64,
    /// False when no center produced a volume within `±1` of the target.
    pub in_band: bool,
    pub attempts: usize,
}

/// One critical-volume jump: sample the center, solve `ε`, apply and renormalize.
///
/// `provisional_epsilon` (normally the previous jump's `ε`) sets the width used
/// for center sampling; without it [`initial_epsilon`] is used.
pub fn apply_ccqm_collapse<R: Rng + ?Sized>(
    field: &ConfigField,
    params: &CcqmParams,
    provisional_epsilon: Option<f64>,
    rng: &mut R,
) -> Result<CcqmOutcome> {
    params.validate()?;
    let v_before = relative_volume(field);
    if v_before < params.v_critical {
        return Err(Error::Config(format!(
            "collapse requested below the critical volume ({v_before} < {})",
            params.v_critical
        )));
    }
    let target = target_volume(v_before, params.fraction_f);
    let mut provisional = provisional_epsilon
        .filter(|e| *e > 0.0 && e.is_finite())
        .unwrap_or_else(|| initial_epsilon(&field.lattice, v_before, params.fraction_f));

    let mut fallback: Option<(ConfigField, Vec<Vec<f64>>, EpsilonSolution)> = None;
    let mut degenerate = Vec::new();
    for attempt in 1..=MAX_COLLAPSE_ATTEMPTS {
        let (centers, sol) = if params.exact_center_epsilon {
            fixed_point_center(field, target, &mut provisional, rng)?
        } else {
            let centers = sample_ccqm_center(field, provisional, rng)?;
            let sol = solve_epsilon_from(field, &centers, target, provisional)?;
            (centers, sol)
        };
        let post = match collapse_with(field, &centers, sol.epsilon) {
            Ok(p) => p,
            Err(e @ (Error::DegenerateJump(_) | Error::ZeroSupport(_))) => {
                degenerate.push(e.to_string());
                continue;
            }
            Err(e) => return Err(e),
        };
        if sol.in_band {
            return Ok(outcome(field, post, &centers, sol, v_before, true, attempt));
        }
        let closer = fallback.as_ref().is_none_or(|(_, _, b)| sol.v_post.abs_diff(target) < b.v_post.abs_diff(target));
        if closer {
            fallback = Some((post, centers, sol));
        }
    }
    match fallback {
        Some((post, centers, sol)) => {
            log::warn!("collapse at t = {} missed the volume band (target {target}, got {})", field.time, sol.v_post);
            Ok(outcome(field, post, &centers, sol, v_before, false, MAX_COLLAPSE_ATTEMPTS))
        }
        None => Err(Error::DegenerateJump(format!(
            "{MAX_COLLAPSE_ATTEMPTS} center draws all degenerate at t = {} (v = {v_before}): {}",
            field.time,
            degenerate.join("; ")
        ))),
    }
}

fn fixed_point_center<R: Rng + ?Sized>(
    field: &ConfigField,
    target: usize,
    provisional: &mut f64,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, EpsilonSolution)> {
    let mut last = None;
    for _ in 0..20 {
        let centers = sample_ccqm_center(field, *provisional, rng)?;
        let sol = solve_epsilon_from(field, &centers, target, *provisional)?;
        let settled = (sol.epsilon / *provisional - 1.0).abs() <= FIXED_POINT_TOL;
        *provisional = sol.epsilon;
        if settled {
            return Ok((centers, sol));
        }
        last = Some((centers, sol));
    }
    Ok(last.expect("at least one iteration"))
}

fn outcome(
    before: &ConfigField,
    post: ConfigField,
    centers: &[Vec<f64>],
    sol: EpsilonSolution,
    v_before: usize,
    in_band: bool,
    attempts: usize,
) -> CcqmOutcome {
    let v_after = relative_volume(&post);
    let event = CollapseEvent {
        time: before.time,
        model: EventModel::CcqmJump,
        particle_index: None,
        center: centers.iter().flatten().copied().collect(),
        width_param: sol.epsilon,
        v_before,
        v_after,
        seed: 0,
        wavefunction: None,
    };
    CcqmOutcome { field: post, event, epsilon: sol.epsilon, in_band, attempts }
}

/// Split probability `p₀ · exp(−w/κ)`; a sub-system with `w = 0` splits with `p₀`.
pub fn split_probability(weight: f64, p0: f64, kappa: f64) -> f64 {
    if weight <= 0.0 {
        p0
    } else if kappa <= 0.0 {
        0.0
    } else {
        p0 * (-weight / kappa).exp()
    }
}

/// `E[|V_pair(x_i − x_j)|]` under `|ψ|²`; zero when no pair rule applies.
pub fn interaction_weight(field: &ConfigField, h: &HamiltonianSpec, i: usize, j: usize) -> Result<f64> {
    let lat = &field.lattice;
    lat.check_particle(i)?;
    lat.check_particle(j)?;
    let Some(rule) = h.pair_rule(&lat.particles[i], &lat.particles[j]) else {
        return Ok(0.0);
    };
    let coords = lat.coordinates();
    let amps = field.as_slice();
    let mut x = vec![0.0; lat.total_dim()];
    let mut acc = 0.0;
    for_each_index(&lat.shape(), |flat, idx| {
        let w = amps[flat].norm_sqr();
        if w == 0.0 {
            return;
        }
        for (xa, &n) in x.iter_mut().zip(idx) {
            *xa = coords[n];
        }
        acc += w * rule.value(HamiltonianSpec::separation(lat, &x, i, j)).abs();
    });
    Ok(acc * lat.point_volume())
}

/// Outcome of the split draw at a critical check.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDecision {
    /// Smallest separable sub-systems: each identical-particle group, and every other particle alone.
    pub units: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub split: Vec<bool>,
    /// Blocks of the resulting partition; a single block means no split.
    pub partition: Vec<Vec<usize>>,
}

impl SplitDecision {
    pub fn is_trivial(&self) -> bool {
        self.partition.len() <= 1
    }
}

/// Sub-systems that may be separated: identical particles always stay together.
pub fn split_units(lattice: &LatticeSpec) -> Vec<Vec<usize>> {
    let groups = lattice.exchange_groups();
    let mut units: Vec<Vec<usize>> = Vec::new();
    for k in 0..lattice.n_particles() {
        if let Some(g) = groups.iter().find(|g| g.contains(&k)) {
            if g[0] == k {
                units.push(g.clone());
            }
        } else {
            units.push(vec![k]);
        }
    }
    units
}

pub fn decide_split<R: Rng + ?Sized>(
    field: &ConfigField,
    params: &CcqmParams,
    h: &HamiltonianSpec,
    rng: &mut R,
) -> Result<SplitDecision> {
    let lat = &field.lattice;
    let units = split_units(lat);
    let n = lat.n_particles();
    let mut pair_w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let w = interaction_weight(field, h, i, j)?;
            pair_w[i][j] = w;
            pair_w[j][i] = w;
        }
    }
    let weights: Vec<f64> = units
        .iter()
        .map(|u| u.iter().map(|&k| (0..n).filter(|j| !u.contains(j)).map(|j| pair_w[k][j]).sum::<f64>()).sum())
        .collect();
    let probabilities: Vec<f64> =
        weights.iter().map(|&w| split_probability(w, params.split_probability, params.split_coefficient)).collect();
    let split: Vec<bool> = if units.len() < 2 {
        vec![false; units.len()]
    } else {
        probabilities.iter().map(|&p| rng.random::<f64>() < p).collect()
    };
    let mut partition: Vec<Vec<usize>> = Vec::new();
    let mut rest: Vec<usize> = Vec::new();
    for (u, &s) in units.iter().zip(&split) {
        if s {
            partition.push(u.clone());
        } else {
            rest.extend(u);
        }
    }
    if !rest.is_empty() {
        rest.sort_unstable();
        partition.push(rest);
    }
    partition.sort_by_key(|b| b[0]);
    Ok(SplitDecision { units, weights, probabilities, split, partition })
}

/// Factors the field along `partition`: each block's factor is the field with all
/// other particles held at the mode of their joint marginal, renormalized.
pub fn perform_split(field: &ConfigField, partition: &[Vec<usize>]) -> Result<Vec<ConfigField>> {
    let lat = &field.lattice;
    let n = lat.n_particles();
    let mut seen = vec![false; n];
    for &k in partition.iter().flatten() {
        lat.check_particle(k)?;
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::SplitAborted(format!("particle {k} appears twice in the partition")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::SplitAborted("partition does not cover every particle".into()));
    }
    for g in lat.exchange_groups() {
        let block = partition.iter().position(|b| b.contains(&g[0]));
        if g.iter().any(|k| partition.iter().position(|b| b.contains(k)) != block) {
            return Err(Error::SplitAborted(format!("identical particles {g:?} cannot be separated")));
        }
    }
    if partition.len() <= 1 {
        return Ok(vec![field.clone()]);
    }

    let shape = lat.shape();
    let m = lat.grid_points;
    let amps = field.as_slice();
    let mut out = Vec::with_capacity(partition.len());
    for block in partition {
        let mut block = block.clone();
        block.sort_unstable();
        let block_axes: Vec<usize> = block.iter().flat_map(|&k| lat.axis_range(k)).collect();
        let other_axes: Vec<usize> = (0..shape.len()).filter(|a| !block_axes.contains(a)).collect();
        let other_shape = vec![m; other_axes.len()];
        let block_shape = vec![m; block_axes.len()];

        let mut marginal = vec![0.0; m.pow(other_axes.len() as u32)];
        let mut sub_idx = vec![0usize; other_axes.len()];
        for_each_index(&shape, |flat, idx| {
            for (s, &a) in sub_idx.iter_mut().zip(&other_axes) {
                *s = idx[a];
            }
            marginal[flat_index(&other_shape, &sub_idx)] += amps[flat].norm_sqr();
        });
        let mode = marginal
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0;
        let mode_idx = multi_index(&other_shape, mode);

        let mut data = vec![Complex64::new(0.0, 0.0); m.pow(block_axes.len() as u32)];
        let mut b_idx = vec![0usize; block_axes.len()];
        for_each_index(&shape, |flat, idx| {
            if other_axes.iter().zip(&mode_idx).all(|(&a, &i)| idx[a] == i) {
                for (s, &a) in b_idx.iter_mut().zip(&block_axes) {
                    *s = idx[a];
                }
                data[flat_index(&block_shape, &b_idx)] = amps[flat];
            }
        });
        let sub = lat.sub_lattice(&block)?;
        let factor = ConfigField::new(sub, ArrayD::from_shape_vec(IxDyn(&block_shape), data).expect("block shape"), field.time)?;
        let factor = factor
            .normalized()
            .map_err(|_| Error::SplitAborted(format!("block {block:?} has zero norm at the companion mode")))?;
        out.push(factor);
    }
    Ok(out)
}
