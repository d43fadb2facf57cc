use std::f64::consts::PI;

use ccqm_core::event::EventModel;
use ccqm_core::lattice::{marginal_density, relative_volume};
use ccqm_core::registry::{merge, merge_probability, pair_normalization};
use ccqm_core::state::{product_state, Orbital};
use ccqm_core::{
    stream, CcqmParams, CollapseModel, ConfigField, Error, GrwParams, HamiltonianSpec, LatticeSpec, PairPotential,
    PairRule, ParticleSpec, Registry, Statistics,
};

fn one(species: &str, stats: Statistics, m: usize, l: f64, cell_points: usize, f0: f64) -> LatticeSpec {
    let p = ParticleSpec::new(species, stats, 1.0, 1).unwrap();
    LatticeSpec::new(vec![p], m, l, vec![cell_points as f64 * l / m as f64], f0, PI / 8.0).unwrap()
}

fn packet(lat: &LatticeSpec, x0: f64, sigma: f64, p0: f64) -> ConfigField {
    product_state(lat, &[Orbital::gaussian(lat, &[x0], sigma, &[p0])]).unwrap()
}

fn well(depth: f64, width: f64) -> HamiltonianSpec {
    HamiltonianSpec {
        pairs: vec![PairRule { species: None, potential: PairPotential::GaussianWell { depth, width }, cutoff: None }],
        ..HamiltonianSpec::free()
    }
}

#[test]
fn merge_probability_matches_marginal_double_sum() {
    let lat = one("e", Statistics::Distinguishable, 64, 32.0, 2, 1e-3);
    let (a, b) = (packet(&lat, -2.0, 1.5, 0.3), packet(&lat, 1.0, 2.0, -0.5));
    let (depth, width, beta, dt) = (2.0, 1.2, 0.7, 0.05);
    let (ga, gb) = (marginal_density(&a, 0).unwrap(), marginal_density(&b, 0).unwrap());
    let xs = lat.coordinates();
    let dx = lat.dx();
    let mut i12 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        for (j, &y) in xs.iter().enumerate() {
            let r = lat.min_image(x - y);
            i12 += ga[[i]] * gb[[j]] * depth * (-r * r / (2.0 * width * width)).exp() * dx * dx;
        }
    }
    let oracle = 1.0 - (-beta * i12 * dt).exp();
    let p = merge_probability(&a, &b, &well(depth, width), dt, beta).unwrap();
    assert!((p - oracle).abs() < 1e-14, "{p} vs {oracle}");
}

/// `⟨a|b⟩` for real Gaussians `exp(−(x−c)²/4σ²)`, normalized on the line.
fn gaussian_overlap(c1: f64, s1: f64, c2: f64, s2: f64) -> f64 {
    let v = s1 * s1 + s2 * s2;
    (2.0 * s1 * s2 / v).sqrt() * (-(c1 - c2).powi(2) / (4.0 * v)).exp()
}

#[test]
fn boson_pair_normalization_matches_overlap_formula() {
    let lat = one("b", Statistics::Boson, 256, 64.0, 2, 1e-3);
    for (c1, s1, c2, s2) in [(-1.0, 1.5, 1.0, 2.0), (0.0, 1.0, 0.0, 1.0), (-4.0, 1.2, 3.0, 0.9)] {
        let (a, b) = (packet(&lat, c1, s1, 0.0), packet(&lat, c2, s2, 0.0));
        let s = gaussian_overlap(c1, s1, c2, s2);
        let analytic = 1.0 / (2.0 * (1.0 + s * s)).sqrt();
        let numeric = pair_normalization(&a, &b).unwrap();
        assert!((numeric - analytic).abs() < 1e-8, "{numeric} vs {analytic}");
        let merged = merge(&a, &b).unwrap();
        assert!((merged.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn same_orbital_fermion_merge_aborts() {
    let lat = one("f", Statistics::Fermion, 64, 32.0, 2, 1e-3);
    let a = packet(&lat, 0.0, 1.5, 0.2);
    assert!(matches!(merge(&a, &a), Err(Error::MergeAborted(_))));
}

fn scenario(seed: u64) -> (Registry, Vec<usize>) {
    let la = one("a", Statistics::Distinguishable, 64, 64.0, 2, 1.0);
    let lb = one("b", Statistics::Distinguishable, 64, 64.0, 2, 1.0);
    let fa = packet(&la, -1.5, 1.5, 0.0);
    let fb = packet(&lb, 1.5, 1.5, 0.0);
    let f0 = 0.05 * fa.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max).powi(2);
    let fa = ConfigField { lattice: LatticeSpec { base_magnitude: f0, ..la }, ..fa };
    let fb = ConfigField { lattice: LatticeSpec { base_magnitude: f0, ..lb }, ..fb };
    let mut reg = Registry::new(50.0, seed).unwrap();
    reg.insert(fa).unwrap();
    reg.insert(fb).unwrap();
    let mut params = CcqmParams::new(40, 0.5, 0.2).unwrap();
    params.split_probability = 0.5;
    params.split_coefficient = 1e6;
    let model = CollapseModel::Ccqm(params);
    let h = well(0.5, 2.0);
    let mut rng = stream(seed, 0);
    let mut counts = Vec::new();
    for _ in 0..150 {
        reg.tick(&h, 0.05, &model, &mut rng).unwrap();
        counts.push(reg.particle_count());
        for m in reg.members() {
            assert!((m.field.norm() - 1.0).abs() < 1e-9);
            assert!((m.field.time - reg.global_time).abs() < 1e-12);
        }
    }
    (reg, counts)
}

#[test]
fn scripted_merge_collapse_split_conserves_particles() {
    let (reg, counts) = scenario(3);
    assert!(counts.iter().all(|&c| c == 2));
    let kinds: Vec<EventModel> = reg.event_log.iter().map(|e| e.model).collect();
    let merge_at = kinds.iter().position(|k| *k == EventModel::Merge).expect("a merge");
    let jump_at = kinds.iter().position(|k| *k == EventModel::CcqmJump).expect("a jump");
    assert!(merge_at < jump_at, "{kinds:?}");
    assert!(kinds.contains(&EventModel::Split), "{kinds:?}");
    for e in &reg.event_log {
        if e.model == EventModel::CcqmJump {
            assert!(e.v_before >= 40);
        }
    }
}

#[test]
fn identical_seed_gives_identical_log() {
    let (a, _) = scenario(11);
    let (b, _) = scenario(11);
    let la: Vec<String> = a.event_log.iter().map(|e| e.to_json_line()).collect();
    let lb: Vec<String> = b.event_log.iter().map(|e| e.to_json_line()).collect();
    assert!(!la.is_empty());
    assert_eq!(la, lb);
}

#[test]
fn critical_volume_never_outlives_check_interval() {
    let lat = one("e", Statistics::Distinguishable, 256, 128.0, 4, 1.0);
    let f = packet(&lat, 0.0, 0.8, 0.0);
    let peak = f.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let f = ConfigField { lattice: LatticeSpec { base_magnitude: 0.03 * peak, ..lat }, ..f };
    let v_c = relative_volume(&f) + 4;
    let params = CcqmParams::new(v_c, 0.3, 0.25).unwrap();
    let mut reg = Registry::new(0.0, 1).unwrap();
    reg.insert(f).unwrap();
    let mut rng = stream(1, 0);
    let mut since: Option<f64> = None;
    for _ in 0..200 {
        reg.tick(&HamiltonianSpec::free(), 0.05, &CollapseModel::Ccqm(params.clone()), &mut rng).unwrap();
        let v = relative_volume(&reg.members()[0].field);
        if v >= v_c {
            let start = *since.get_or_insert(reg.global_time);
            assert!(reg.global_time - start < params.check_interval + 1e-9);
        } else {
            since = None;
        }
    }
    assert!(reg.event_log.len() >= 3);
}

#[test]
fn tiny_budget_defers_merges() {
    let lat = one("e", Statistics::Distinguishable, 32, 32.0, 2, 1e-2);
    let mut reg = Registry::new(1e3, 2).unwrap();
    reg.max_joint_points = 100;
    reg.insert(packet(&lat, -1.0, 1.5, 0.0)).unwrap();
    reg.insert(packet(&lat, 1.0, 1.5, 0.0)).unwrap();
    let params = CcqmParams::new(10_000, 0.5, 1.0).unwrap();
    reg.tick(&well(1.0, 1.0), 0.1, &CollapseModel::Ccqm(params), &mut stream(2, 0)).unwrap();
    assert_eq!(reg.len(), 2);
    assert_eq!(reg.event_log[0].model, EventModel::DeferredMerge);
}

#[test]
fn checkpoint_resume_reproduces_the_run() {
    let lat = one("e", Statistics::Distinguishable, 64, 32.0, 2, 1e-2);
    let model = CollapseModel::Grw(GrwParams::new(2.0, 1.0).unwrap());
    let h = HamiltonianSpec::free();
    let mut reg = Registry::new(0.0, 9).unwrap();
    reg.insert(packet(&lat, 0.0, 2.0, 0.0)).unwrap();
    let mut rng = stream(9, 0);
    for _ in 0..10 {
        reg.tick(&h, 0.1, &model, &mut rng).unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    reg.save_checkpoint(dir.path(), "cfg", &rng).unwrap();
    for _ in 0..10 {
        reg.tick(&h, 0.1, &model, &mut rng).unwrap();
    }
    let (mut back, mut rng2, _) = Registry::load_checkpoint(dir.path()).unwrap();
    for _ in 0..10 {
        back.tick(&h, 0.1, &model, &mut rng2).unwrap();
    }
    assert_eq!(back.event_log, reg.event_log);
    assert_eq!(back.members()[0].field, reg.members()[0].field);
}
