//! Population of live wavefunctions: merging, splitting and the global tick.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ccqm::{apply_ccqm_collapse, check_critical, decide_split, perform_split, CcqmParams};
use crate::error::{Error, Result};
use crate::event::{read_jsonl, write_jsonl, CollapseEvent, EventModel};
use crate::evolution::{HamiltonianSpec, Propagator};
use crate::grw::{grw_hit, next_wait, GrwParams};
use crate::lattice::{for_each_index, marginal_density, relative_volume, ConfigField, ParticleSpec};
use crate::rng::SimRng;
use crate::snapshot::{load_snapshot, save_snapshot};
use crate::state::{outer, symmetrize};

/// Default cap on the number of joint grid points a merge may produce.
pub const DEFAULT_MAX_JOINT_POINTS: usize = 1 << 22;

/// Collapse dynamics driven by [`Registry::tick`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollapseModel {
    Unitary,
    Grw(GrwParams),
    Ccqm(CcqmParams),
}

#[derive(Clone, Debug)]
pub struct Member {
    pub id: u64,
    pub field: ConfigField,
    /// `ε` of this wavefunction's last jump, used as the next provisional width.
    pub last_epsilon: Option<f64>,
    next_hit: Option<f64>,
    propagator: Option<(HamiltonianSpec, Propagator)>,
}

impl Member {
    fn new(id: u64, field: ConfigField) -> Self {
        Member { id, field, last_epsilon: None, next_hit: None, propagator: None }
    }

    fn evolve_to(&mut self, h: &HamiltonianSpec, dt: f64, t: f64) -> Result<()> {
        let stale = match &self.propagator {
            Some((ch, p)) => ch != h || p.dt() != dt || *p.lattice() != self.field.lattice,
            None => true,
        };
        if stale {
            self.propagator = Some((h.clone(), Propagator::new(&self.field.lattice, h, dt)?));
        }
        let (_, p) = self.propagator.as_ref().expect("just built");
        p.evolve_until(&mut self.field, h, t)
    }
}

/// `I₁₂ = Σ_{i∈f1, j∈f2} E[|V_ij|]` under the product of the two marginals.
pub fn interaction_integral(f1: &ConfigField, f2: &ConfigField, h: &HamiltonianSpec) -> Result<f64> {
    let (l1, l2) = (&f1.lattice, &f2.lattice);
    if l1.grid_points != l2.grid_points || l1.domain_length != l2.domain_length {
        return Err(Error::Config("wavefunctions live on different grids".into()));
    }
    let m = l1.grid_points;
    let dx = l1.dx();
    let mut total = 0.0;
    for (i, pi) in l1.particles.iter().enumerate() {
        for (j, pj) in l2.particles.iter().enumerate() {
            let Some(rule) = h.pair_rule(pi, pj) else { continue };
            if pi.spatial_dim != pj.spatial_dim {
                return Err(Error::Config(format!(
                    "pair interaction between a {}-d and a {}-d particle",
                    pi.spatial_dim, pj.spatial_dim
                )));
            }
            let dim = pi.spatial_dim;
            let shape = vec![m; dim];
            // |V| tabulated by per-axis index difference mod M.
            let mut w = vec![0.0; m.pow(dim as u32)];
            for_each_index(&shape, |flat, idx| {
                let r2: f64 = idx
                    .iter()
                    .map(|&d| {
                        let s = l1.min_image(d as f64 * dx);
                        s * s
                    })
                    .sum();
                w[flat] = rule.value(r2.sqrt()).abs();
            });
            let gi = marginal_density(f1, i)?;
            let gj = marginal_density(f2, j)?;
            let (gi, gj) = (gi.as_slice().expect("standard layout"), gj.as_slice().expect("standard layout"));
            let xs: Vec<(Vec<usize>, f64)> = collect_support(&shape, gi);
            let ys: Vec<(Vec<usize>, f64)> = collect_support(&shape, gj);
            let mut diff = vec![0usize; dim];
            let mut acc = 0.0;
            for (x, gx) in &xs {
                for (y, gy) in &ys {
                    for a in 0..dim {
                        diff[a] = (y[a] + m - x[a]) % m;
                    }
                    let flat = diff.iter().fold(0, |acc, &d| acc * m + d);
                    acc += gx * gy * w[flat];
                }
            }
            total += acc * dx.powi(2 * dim as i32);
        }
    }
    Ok(total)
}

fn collect_support(shape: &[usize], g: &[f64]) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    for_each_index(shape, |flat, idx| {
        if g[flat] > 0.0 {
            out.push((idx.to_vec(), g[flat]));
        }
    });
    out
}

/// `p = 1 − exp(−β · I₁₂ · dt)`.
pub fn merge_probability(f1: &ConfigField, f2: &ConfigField, h: &HamiltonianSpec, dt: f64, beta: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Config(format!("merge coefficient must be >= 0, got {beta}")));
    }
    if !(dt >= 0.0) {
        return Err(Error::Config(format!("time step must be non-negative, got {dt}")));
    }
    if beta == 0.0 || dt == 0.0 {
        return Ok(0.0);
    }
    let i12 = interaction_integral(f1, f2, h)?;
    Ok(-(-beta * i12 * dt).exp_m1())
}

/// `S(ψ₁ ⊗ ψ₂)` on the joint lattice, renormalized; particles of `f1` come first.
pub fn merge(f1: &ConfigField, f2: &ConfigField) -> Result<ConfigField> {
    if f1.time != f2.time {
        return Err(Error::MergeAborted(format!("fields at different times {} and {}", f1.time, f2.time)));
    }
    let lattice = f1.lattice.joined(&f2.lattice)?;
    let product = ConfigField::new(lattice, outer(&f1.amplitudes, &f2.amplitudes), f1.time)?;
    let raw = product.norm();
    let s = symmetrize(&product)?;
    if !(s.norm() > 1e-12 * raw) {
        return Err(Error::MergeAborted("exchange projection annihilates the product".into()));
    }
    s.normalized()
}

/// `1/‖ψ₁ψ₂ ± P₁₂ψ₁ψ₂‖` for two one-particle fields, the constant that normalizes
/// the unprojected (anti)symmetric sum.
pub fn pair_normalization(f1: &ConfigField, f2: &ConfigField) -> Result<f64> {
    let merged_raw = {
        let lattice = f1.lattice.joined(&f2.lattice)?;
        ConfigField::new(lattice, outer(&f1.amplitudes, &f2.amplitudes), f1.time)?
    };
    if merged_raw.lattice.n_particles() != 2 {
        return Err(Error::Config("pair normalization needs two one-particle fields".into()));
    }
    let s = symmetrize(&merged_raw)?;
    // S carries a 1/2, the unprojected sum does not.
    Ok(1.0 / (2.0 * s.norm()))
}

#[derive(Clone, Debug)]
pub struct Registry {
    members: Vec<Member>,
    pub event_log: Vec<CollapseEvent>,
    pub global_time: f64,
    /// Merge coefficient `β`.
    pub merge_coefficient: f64,
    pub max_joint_points: usize,
    /// Run seed stamped onto every logged event.
    pub seed: u64,
    next_id: u64,
    next_check: Option<f64>,
}

impl Registry {
    pub fn new(merge_coefficient: f64, seed: u64) -> Result<Self> {
        if !(merge_coefficient >= 0.0 && merge_coefficient.is_finite()) {
            return Err(Error::Config(format!("merge coefficient must be >= 0, got {merge_coefficient}")));
        }
        Ok(Registry {
            members: Vec::new(),
            event_log: Vec::new(),
            global_time: 0.0,
            merge_coefficient,
            max_joint_points: DEFAULT_MAX_JOINT_POINTS,
            seed,
            next_id: 0,
            next_check: None,
        })
    }

    /// Adds a normalized field at the registry's time (or sets the time if empty).
    pub fn insert(&mut self, mut field: ConfigField) -> Result<u64> {
        if self.members.is_empty() && self.event_log.is_empty() && self.next_id == 0 {
            self.global_time = field.time;
        } else if field.time != self.global_time {
            return Err(Error::Config(format!(
                "field time {} differs from registry time {}",
                field.time, self.global_time
            )));
        }
        field.normalize()?;
        let id = self.next_id;
        self.next_id += 1;
        self.members.push(Member::new(id, field));
        Ok(id)
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn get(&self, id: u64) -> Option<&ConfigField> {
        self.members.iter().find(|m| m.id == id).map(|m| &m.field)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn particle_count(&self) -> usize {
        self.members.iter().map(|m| m.field.lattice.n_particles()).sum()
    }

    fn log(&mut self, mut event: CollapseEvent) {
        event.seed = self.seed;
        self.event_log.push(event);
    }

    fn fresh_member(&mut self, field: ConfigField) -> Member {
        let id = self.next_id;
        self.next_id += 1;
        Member::new(id, field)
    }

    /// Advances every member by `dt` and applies the collapse model's events.
    ///
    /// GRW hits are applied at their own times within `(t, t + dt]`. In CCQM mode
    /// merges are proposed for every pair in ascending id order (at most one per
    /// pair), then every `check_interval` each critical member is split or collapsed.
    pub fn tick(&mut self, h: &HamiltonianSpec, dt: f64, model: &CollapseModel, rng: &mut SimRng) -> Result<()> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if self.members.is_empty() {
            return Ok(());
        }
        let t_new = self.global_time + dt;
        match model {
            CollapseModel::Unitary => self.evolve_all(h, dt, t_new)?,
            CollapseModel::Grw(params) => {
                params.validate()?;
                self.grw_step(h, dt, t_new, params, rng)?;
            }
            CollapseModel::Ccqm(params) => {
                params.validate()?;
                self.evolve_all(h, dt, t_new)?;
                self.global_time = t_new;
                self.propose_merges(h, dt, rng)?;
                let due = *self.next_check.get_or_insert(t_new - dt + params.check_interval);
                if t_new >= due - 1e-9 * dt {
                    while self.next_check.is_some_and(|c| c <= t_new + 1e-9 * dt) {
                        *self.next_check.as_mut().expect("set") += params.check_interval;
                    }
                    self.critical_checks(h, params, rng)?;
                }
            }
        }
        self.global_time = t_new;
        Ok(())
    }

    fn evolve_all(&mut self, h: &HamiltonianSpec, dt: f64, t_new: f64) -> Result<()> {
        for m in &mut self.members {
            m.evolve_to(h, dt, t_new)?;
        }
        Ok(())
    }

    fn grw_step(&mut self, h: &HamiltonianSpec, dt: f64, t_new: f64, params: &GrwParams, rng: &mut SimRng) -> Result<()> {
        let mut events = Vec::new();
        for m in &mut self.members {
            let n = m.field.lattice.n_particles();
            let rate = n as f64 * params.lambda_rate;
            let t0 = m.field.time;
            let mut next = *m.next_hit.get_or_insert_with(|| t0 + next_wait(rate, rng));
            while next <= t_new {
                m.evolve_to(h, dt, next)?;
                let particle = rng.random_range(0..n);
                let (field, mut ev) = grw_hit(&m.field, particle, params, rng)?;
                m.field = field;
                ev.wavefunction = Some(m.id);
                events.push(ev);
                next += next_wait(rate, rng);
            }
            m.next_hit = Some(next);
            m.evolve_to(h, dt, t_new)?;
        }
        for e in events {
            self.log(e);
        }
        Ok(())
    }

    fn propose_merges(&mut self, h: &HamiltonianSpec, dt: f64, rng: &mut SimRng) -> Result<()> {
        if self.merge_coefficient == 0.0 || self.members.len() < 2 {
            return Ok(());
        }
        let mut ids: Vec<u64> = self.members.iter().map(|m| m.id).collect();
        ids.sort_unstable();
        let mut consumed: Vec<u64> = Vec::new();
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                let (ia, ib) = (ids[a], ids[b]);
                if consumed.contains(&ia) || consumed.contains(&ib) {
                    continue;
                }
                let fa = self.get(ia).expect("live id").clone();
                let fb = self.get(ib).expect("live id").clone();
                let p = merge_probability(&fa, &fb, h, dt, self.merge_coefficient)?;
                if p == 0.0 || rng.random::<f64>() >= p {
                    continue;
                }
                let v_before = relative_volume(&fa) + relative_volume(&fb);
                let joint_points = fa.lattice.n_points().saturating_mul(fb.lattice.n_points());
                let base = CollapseEvent {
                    time: self.global_time,
                    model: EventModel::DeferredMerge,
                    particle_index: None,
                    center: Vec::new(),
                    width_param: self.merge_coefficient,
                    v_before,
                    v_after: v_before,
                    seed: 0,
                    wavefunction: Some(ia),
                };
                if joint_points > self.max_joint_points {
                    log::info!("merge of {ia} and {ib} deferred: {joint_points} joint points exceed the budget");
                    self.log(base);
                    continue;
                }
                let merged = match merge(&fa, &fb) {
                    Ok(f) => f,
                    Err(Error::MergeAborted(why)) => {
                        log::info!("merge of {ia} and {ib} aborted: {why}");
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                let v_after = relative_volume(&merged);
                self.members.retain(|m| m.id != ia && m.id != ib);
                let member = self.fresh_member(merged);
                let new_id = member.id;
                self.members.push(member);
                consumed.extend([ia, ib]);
                self.log(CollapseEvent { model: EventModel::Merge, v_after, wavefunction: Some(new_id), ..base });
            }
        }
        Ok(())
    }

    fn critical_checks(&mut self, h: &HamiltonianSpec, params: &CcqmParams, rng: &mut SimRng) -> Result<()> {
        let members = std::mem::take(&mut self.members);
        let mut out = Vec::with_capacity(members.len());
        let mut pending: Vec<CollapseEvent> = Vec::new();
        let mut next_id = self.next_id;
        for m in members {
            if !check_critical(&m.field, params) {
                out.push(m);
                continue;
            }
            let v_before = relative_volume(&m.field);
            let decision = decide_split(&m.field, params, h, rng)?;
            let mut parts = vec![m];
            if !decision.is_trivial() {
                let m = parts.pop().expect("one member");
                match perform_split(&m.field, &decision.partition) {
                    Ok(factors) => {
                        let v_after = factors.iter().map(relative_volume).sum();
                        pending.push(CollapseEvent {
                            time: m.field.time,
                            model: EventModel::Split,
                            particle_index: None,
                            center: Vec::new(),
                            width_param: params.split_coefficient,
                            v_before,
                            v_after,
                            seed: 0,
                            wavefunction: Some(m.id),
                        });
                        for f in factors {
                            parts.push(Member { last_epsilon: m.last_epsilon, ..Member::new(next_id, f) });
                            next_id += 1;
                        }
                    }
                    Err(Error::SplitAborted(why)) => {
                        log::info!("split of {} aborted: {why}", m.id);
                        parts.push(m);
                    }
                    Err(e) => return Err(e),
                }
            }
            for mut p in parts {
                if check_critical(&p.field, params) {
                    let res = apply_ccqm_collapse(&p.field, params, p.last_epsilon, rng)?;
                    p.field = res.field;
                    p.last_epsilon = Some(res.epsilon);
                    pending.push(CollapseEvent { wavefunction: Some(p.id), ..res.event });
                }
                out.push(p);
            }
        }
        self.members = out;
        self.next_id = next_id;
        for e in pending {
            self.log(e);
        }
        Ok(())
    }

    /// Writes one snapshot per member, the event log and `index.json` into `dir`.
    pub fn save_checkpoint(&self, dir: &Path, config_hash: &str, rng: &SimRng) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        for m in &self.members {
            let file = format!("wf_{}.bin", m.id);
            save_snapshot(&m.field, &dir.join(&file))?;
            entries.push(MemberEntry {
                id: m.id,
                file,
                particles: m.field.lattice.particles.clone(),
                last_epsilon: m.last_epsilon,
                next_hit: m.next_hit,
            });
        }
        write_jsonl(&self.event_log, std::io::BufWriter::new(fs::File::create(dir.join("events.jsonl"))?))?;
        let index = CheckpointIndex {
            format_version: 1,
            global_time: self.global_time,
            merge_coefficient: self.merge_coefficient,
            max_joint_points: self.max_joint_points,
            seed: self.seed,
            config_hash: config_hash.to_string(),
            next_id: self.next_id,
            next_check: self.next_check,
            rng: RngState::capture(rng),
            members: entries,
        };
        fs::write(dir.join("index.json"), serde_json::to_string_pretty(&index)?)?;
        Ok(())
    }

    /// Restores a registry, its rng and the stored config hash.
    pub fn load_checkpoint(dir: &Path) -> Result<(Registry, SimRng, String)> {
        let index: CheckpointIndex = serde_json::from_str(&fs::read_to_string(dir.join("index.json"))?)?;
        if index.format_version != 1 {
            return Err(Error::Format(format!("unsupported checkpoint version {}", index.format_version)));
        }
        let mut members = Vec::new();
        for e in &index.members {
            let field = load_snapshot(&dir.join(&e.file), &e.particles)?;
            members.push(Member { last_epsilon: e.last_epsilon, next_hit: e.next_hit, ..Member::new(e.id, field) });
        }
        let event_log = read_jsonl(std::io::BufReader::new(fs::File::open(dir.join("events.jsonl"))?))?;
        let reg = Registry {
            members,
            event_log,
            global_time: index.global_time,
            merge_coefficient: index.merge_coefficient,
            max_joint_points: index.max_joint_points,
            seed: index.seed,
            next_id: index.next_id,
            next_check: index.next_check,
        };
        Ok((reg, index.rng.restore(), index.config_hash))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct MemberEntry {
    id: u64,
    file: String,
    particles: Vec<ParticleSpec>,
    last_epsilon: Option<f64>,
    next_hit: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointIndex {
    format_version: u32,
    global_time: f64,
    merge_coefficient: f64,
    max_joint_points: usize,
    seed: u64,
    config_hash: String,
    next_id: u64,
    next_check: Option<f64>,
    rng: RngState,
    members: Vec<MemberEntry>,
}

/// ChaCha key, stream and word position; the position is a decimal string
/// because it is a u128.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RngState {
    key: [u8; 32],
    stream: u64,
    word_pos: String,
}

impl RngState {
    fn capture(rng: &SimRng) -> Self {
        RngState { key: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    fn restore(&self) -> SimRng {
        use rand::SeedableRng;
        let mut rng = SimRng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().unwrap_or(0));
        rng
    }
}
