mod common;

use std::f64::consts::PI;

use ccqm_core::ccqm::{
    apply_ccqm_collapse, center_distribution, check_critical, collapse_with, decide_split, perform_split,
    sample_ccqm_center, solve_epsilon, target_volume,
};
use ccqm_core::evolution::evolve_until;
use ccqm_core::lattice::relative_volume;
use ccqm_core::state::{exchange_residual, product_state, symmetrize, Orbital};
use ccqm_core::{
    stream, CcqmParams, ConfigField, HamiltonianSpec, LatticeSpec, PairPotential, PairRule, ParticleSpec, Statistics,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn lattice(n: usize, stats: Statistics, m: usize, l: f64, cell_points: usize) -> LatticeSpec {
    let dx = l / m as f64;
    let ps = (0..n).map(|_| ParticleSpec::new("x", stats, 1.0, 1).unwrap()).collect();
    LatticeSpec::new(ps, m, l, vec![cell_points as f64 * dx; n], 1.0, PI / 8.0).unwrap()
}

/// Sets `f0` to `fraction` of the largest amplitude magnitude.
fn with_relative_f0(f: ConfigField, fraction: f64) -> ConfigField {
    let peak = f.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    let lattice = LatticeSpec { base_magnitude: fraction * peak, ..f.lattice.clone() };
    ConfigField { lattice, ..f }
}

fn packet(m: usize, l: f64, cell_points: usize, sigma: f64, f0_fraction: f64) -> ConfigField {
    let lat = lattice(1, Statistics::Distinguishable, m, l, cell_points);
    with_relative_f0(product_state(&lat, &[Orbital::gaussian(&lat, &[1.0], sigma, &[0.5])]).unwrap(), f0_fraction)
}

/// Post-jump relative volume for one particle in 1D, by explicit loops.
fn brute_post_volume(f: &ConfigField, center: f64, eps: f64) -> usize {
    let lat = &f.lattice;
    let xs = lat.coordinates();
    let phi: Vec<Complex64> = xs
        .iter()
        .zip(f.as_slice())
        .map(|(&x, z)| {
            let d = lat.min_image(x - center);
            z * (-0.5 * eps * d * d).exp()
        })
        .collect();
    let norm = (phi.iter().map(|z| z.norm_sqr()).sum::<f64>() * lat.dx()).sqrt();
    let c = lat.cell_points(0);
    phi.chunks(c)
        .filter(|cell| cell.iter().map(|z| z.norm() / norm).sum::<f64>() / c as f64 > lat.base_magnitude)
        .count()
}

#[test]
fn solved_epsilon_agrees_with_log_scan() {
    let f = packet(512, 256.0, 4, 12.0, 0.05);
    let v = relative_volume(&f);
    let target = target_volume(v, 0.5);
    for center in [1.0, 8.0, -10.5] {
        let sol = solve_epsilon(&f, &[vec![center]], target).unwrap();
        assert!(sol.in_band);
        assert_eq!(brute_post_volume(&f, center, sol.epsilon), sol.v_post);
        let scan: Vec<(f64, usize)> = (0..200)
            .map(|i| {
                let eps = 10f64.powf(-6.0 + 6.0 * i as f64 / 199.0);
                (eps, brute_post_volume(&f, center, eps))
            })
            .collect();
        let band: Vec<f64> = scan.iter().filter(|(_, vp)| vp.abs_diff(target) <= 1).map(|(e, _)| *e).collect();
        assert!(!band.is_empty());
        let step = 10f64.powf(6.0 / 199.0);
        let (lo, hi) = (band[0] / step, band[band.len() - 1] * step);
        assert!(sol.epsilon >= lo && sol.epsilon <= hi, "ε = {} outside scan band [{lo}, {hi}]", sol.epsilon);
    }
}

#[test]
fn epsilon_limits_bracket_the_volume() {
    let f = packet(512, 256.0, 4, 12.0, 0.05);
    let v = relative_volume(&f);
    assert!(brute_post_volume(&f, 1.0, 1e-9).abs_diff(v) <= 1);
    assert_eq!(brute_post_volume(&f, 1.0, 1e4), 1);
}

/// `‖S(J_c ψ)‖²` for a two-particle 1D field, built term by term.
fn brute_pair_weight(f: &ConfigField, c: (usize, usize), eps: f64, sign: f64) -> f64 {
    let lat = &f.lattice;
    let m = lat.grid_points;
    let xs = lat.coordinates();
    let j = |x: usize, cx: usize| {
        let d = lat.min_image(xs[x] - xs[cx]);
        (-0.5 * eps * d * d).exp()
    };
    let mut total = 0.0;
    for a in 0..m {
        for b in 0..m {
            let direct = j(a, c.0) * j(b, c.1) * f.amplitudes[[a, b]];
            let swapped = j(b, c.0) * j(a, c.1) * f.amplitudes[[b, a]];
            total += (0.5 * (direct + sign * swapped)).norm_sqr();
        }
    }
    total
}

#[test]
fn fermion_center_law_matches_explicit_projection() {
    let lat = lattice(2, Statistics::Fermion, 16, 16.0, 2);
    let a = Orbital::gaussian(&lat, &[-3.0], 1.2, &[0.3]);
    let b = Orbital::gaussian(&lat, &[2.0], 1.5, &[-0.4]);
    let f = symmetrize(&product_state(&lat, &[a, b]).unwrap()).unwrap().normalized().unwrap();
    let f = with_relative_f0(f, 0.1);
    let eps = 0.3;
    let dist = center_distribution(&f, eps).unwrap();
    let scale = dist.weights.iter().sum::<f64>();
    let oracle: Vec<f64> =
        dist.candidates.iter().map(|&c| brute_pair_weight(&f, (c / 16, c % 16), eps, -1.0)).collect();
    let oscale: f64 = oracle.iter().sum();
    for (w, o) in dist.weights.iter().zip(&oracle) {
        assert!((w / scale - o / oscale).abs() < 1e-12);
    }
}

#[test]
fn center_draws_pass_chi_square() {
    let lat = lattice(1, Statistics::Distinguishable, 32, 32.0, 1);
    let a = Orbital::gaussian(&lat, &[-6.0], 2.0, &[0.0]);
    let b = Orbital::gaussian(&lat, &[5.0], 1.5, &[0.0]);
    let o = Orbital::superpose(&lat, &[(Complex64::new(0.8, 0.0), &a), (Complex64::new(0.6, 0.0), &b)]);
    let f = with_relative_f0(product_state(&lat, &[o]).unwrap(), 0.05);
    let eps = 0.4;
    let xs = lat.coordinates();
    let occupied: Vec<bool> = f.as_slice().iter().map(|z| z.norm() > f.lattice.base_magnitude).collect();
    let oracle: Vec<f64> = (0..32)
        .map(|c| {
            if !occupied[c] {
                return 0.0;
            }
            xs.iter()
                .zip(f.as_slice())
                .map(|(&x, z)| {
                    let d = lat.min_image(x - xs[c]);
                    (-eps * d * d).exp() * z.norm_sqr()
                })
                .sum()
        })
        .collect();
    let mut counts = vec![0u64; 32];
    let mut rng = stream(99, 3);
    for _ in 0..100_000 {
        let c = sample_ccqm_center(&f, eps, &mut rng).unwrap();
        counts[lat.nearest_index(c[0][0])] += 1;
    }
    assert!(counts.iter().zip(&occupied).all(|(&n, &o)| o || n == 0));
    let p = common::chi_square_p(&counts, &oracle);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn narrow_jump_picks_humps_by_weight() {
    let lat = lattice(1, Statistics::Distinguishable, 128, 128.0, 2);
    let a = Orbital::gaussian(&lat, &[-30.0], 2.0, &[0.0]);
    let b = Orbital::gaussian(&lat, &[30.0], 2.0, &[0.0]);
    let o = Orbital::superpose(&lat, &[(Complex64::new(0.8, 0.0), &a), (Complex64::new(0.6, 0.0), &b)]);
    let f = with_relative_f0(product_state(&lat, &[o]).unwrap(), 0.02);
    let dist = center_distribution(&f, 4.0).unwrap();
    let p = dist.probabilities();
    let left: f64 = dist.candidates.iter().zip(&p).filter(|(&c, _)| c < 64).map(|(_, p)| p).sum();
    assert!((left - 0.64).abs() < 1e-3, "left mass {left}");
}

#[test]
fn fermion_pair_collapse_preserves_antisymmetry() {
    let lat = lattice(2, Statistics::Fermion, 64, 32.0, 2);
    let a = Orbital::gaussian(&lat, &[-5.0], 2.0, &[0.3]);
    let b = Orbital::gaussian(&lat, &[4.0], 2.5, &[-0.2]);
    let f = symmetrize(&product_state(&lat, &[a, b]).unwrap()).unwrap().normalized().unwrap();
    let f = with_relative_f0(f, 0.1);
    let v = relative_volume(&f);
    let params = CcqmParams::new(v, 0.5, 1.0).unwrap();
    for seed in 0..5 {
        let out = apply_ccqm_collapse(&f, &params, None, &mut stream(seed, 0)).unwrap();
        assert!(exchange_residual(&out.field, 0, 1).unwrap() <= 1e-10);
        assert!((out.field.norm() - 1.0).abs() <= 1e-9);
        assert!(out.event.v_after <= out.event.v_before);
        assert!(out.event.v_after.abs_diff(target_volume(v, 0.5)) <= 1);
    }
}

#[test]
fn boson_jump_at_distinct_centers_is_symmetric() {
    let lat = lattice(2, Statistics::Boson, 32, 16.0, 2);
    let a = Orbital::gaussian(&lat, &[-2.0], 1.5, &[0.0]);
    let b = Orbital::gaussian(&lat, &[3.0], 1.0, &[0.0]);
    let f = symmetrize(&product_state(&lat, &[a, b]).unwrap()).unwrap().normalized().unwrap();
    let g = collapse_with(&f, &[vec![-2.0], vec![2.5]], 0.5).unwrap();
    assert!(exchange_residual(&g, 0, 1).unwrap() < 1e-12);
}

#[test]
fn first_critical_check_matches_volume_replay() {
    let f0 = packet(256, 128.0, 4, 2.0, 0.02);
    let params = CcqmParams::new(relative_volume(&f0) + 6, 0.5, 0.5).unwrap();
    let h = HamiltonianSpec::free();
    let mut f = f0.clone();
    let mut volumes = Vec::new();
    let mut first = None;
    for i in 0..40 {
        f = evolve_until(&f, &h, (i + 1) as f64 * 0.5, 0.05).unwrap();
        volumes.push(relative_volume(&f));
        if first.is_none() && check_critical(&f, &params) {
            first = Some(i);
        }
    }
    let replay = volumes.iter().position(|&v| v >= params.v_critical);
    assert!(replay.is_some());
    assert_eq!(first, replay);
}

fn no_interactions() -> HamiltonianSpec {
    HamiltonianSpec::free()
}

#[test]
fn free_particles_split_at_base_rate() {
    let lat = lattice(3, Statistics::Distinguishable, 8, 8.0, 1);
    let o = Orbital::gaussian(&lat, &[0.0], 1.0, &[0.0]);
    let f = product_state(&lat, &[o.clone(), o.clone(), o]).unwrap();
    let mut params = CcqmParams::new(2, 0.5, 1.0).unwrap();
    params.split_probability = 0.3;
    params.split_coefficient = 1.0;
    let trials = 10_000;
    let mut splits = [0u64; 3];
    let mut rng = stream(5, 5);
    for _ in 0..trials {
        let d = decide_split(&f, &params, &no_interactions(), &mut rng).unwrap();
        for (k, s) in d.split.iter().enumerate() {
            splits[k] += *s as u64;
        }
    }
    let sd = (0.3f64 * 0.7 / trials as f64).sqrt();
    for s in splits {
        assert!((s as f64 / trials as f64 - 0.3).abs() < 3.0 * sd, "rate {}", s as f64 / trials as f64);
    }
}

#[test]
fn weakly_bound_particle_splits_more_often() {
    let ps = vec![
        ParticleSpec::new("a", Statistics::Distinguishable, 1.0, 1).unwrap(),
        ParticleSpec::new("b", Statistics::Distinguishable, 1.0, 1).unwrap(),
        ParticleSpec::new("c", Statistics::Distinguishable, 1.0, 1).unwrap(),
    ];
    let lat = LatticeSpec::new(ps, 16, 32.0, vec![2.0; 3], 1e-3, PI / 8.0).unwrap();
    let near = Orbital::gaussian(&lat, &[-1.0], 1.0, &[0.0]);
    let near2 = Orbital::gaussian(&lat, &[0.0], 1.0, &[0.0]);
    let far = Orbital::gaussian(&lat, &[12.0], 1.0, &[0.0]);
    let f = product_state(&lat, &[near, near2, far]).unwrap();
    let well = |pair: (&str, &str), depth: f64| PairRule {
        species: Some((pair.0.into(), pair.1.into())),
        potential: PairPotential::GaussianWell { depth, width: 1.5 },
        cutoff: None,
    };
    let h = HamiltonianSpec {
        pairs: vec![well(("a", "b"), 5.0), well(("a", "c"), 0.5), well(("b", "c"), 0.5)],
        ..HamiltonianSpec::free()
    };
    let mut params = CcqmParams::new(2, 0.5, 1.0).unwrap();
    params.split_probability = 0.9;
    params.split_coefficient = 1.0;
    let mut splits = [0u64; 3];
    let mut rng = stream(8, 0);
    for _ in 0..4000 {
        let d = decide_split(&f, &params, &h, &mut rng).unwrap();
        for (k, s) in d.split.iter().enumerate() {
            splits[k] += *s as u64;
        }
    }
    assert!(splits[2] > splits[0] && splits[2] > splits[1], "{splits:?}");
}

/// Von Neumann entropy of the Schmidt spectrum of a two-particle 1D field.
fn entanglement_entropy(f: &ConfigField) -> f64 {
    let m = f.lattice.grid_points;
    let mat = DMatrix::from_fn(m, m, |i, j| {
        let z = f.amplitudes[[i, j]];
        nalgebra::Complex::new(z.re, z.im)
    });
    let s = mat.singular_values();
    let total: f64 = s.iter().map(|x| x * x).sum();
    s.iter()
        .map(|x| x * x / total)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

#[test]
fn weakly_entangled_split_has_high_fidelity() {
    let lat = lattice(2, Statistics::Distinguishable, 32, 32.0, 2);
    let a = Orbital::gaussian(&lat, &[-4.0], 1.5, &[0.2]);
    let b = Orbital::gaussian(&lat, &[5.0], 2.0, &[0.0]);
    let c = Orbital::gaussian(&lat, &[-2.0], 1.0, &[0.0]);
    let d = Orbital::gaussian(&lat, &[8.0], 1.0, &[0.3]);
    let main = product_state(&lat, &[a, b]).unwrap();
    let extra = product_state(&lat, &[c, d]).unwrap();
    let mut f = main.clone();
    for ((z, x), y) in f.as_slice_mut().iter_mut().zip(main.as_slice()).zip(extra.as_slice()) {
        *z = x + 0.12 * y;
    }
    let f = f.normalized().unwrap();
    let s = entanglement_entropy(&f);
    assert!(s < 0.1, "entropy {s}");
    let parts = perform_split(&f, &[vec![0], vec![1]]).unwrap();
    let rebuilt = product_state(
        &lat,
        &[Orbital { values: parts[0].amplitudes.clone() }, Orbital { values: parts[1].amplitudes.clone() }],
    )
    .unwrap();
    let fidelity = f.inner(&rebuilt).norm_sqr();
    assert!(fidelity > 0.95, "fidelity {fidelity}");
    let count: usize = parts.iter().map(|p| p.lattice.n_particles()).sum();
    assert_eq!(count, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn volume_contract_holds(sigma in 4.0f64..16.0, frac in 0.2f64..0.8, f0 in 0.02f64..0.2, seed in 0u64..1000) {
        let f = packet(256, 256.0, 4, sigma, f0);
        let v = relative_volume(&f);
        prop_assume!(v >= 4);
        let params = CcqmParams::new(v, frac, 1.0).unwrap();
        let out = apply_ccqm_collapse(&f, &params, None, &mut stream(seed, 0)).unwrap();
        prop_assert!(out.in_band);
        prop_assert!(out.event.v_after.abs_diff(target_volume(v, frac)) <= 1);
        prop_assert!(out.event.v_after <= out.event.v_before);
        prop_assert!((out.field.norm() - 1.0).abs() <= 1e-9);
    }
}
