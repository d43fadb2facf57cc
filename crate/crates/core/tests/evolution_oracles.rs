use std::f64::consts::PI;

use ccqm_core::evolution::{density_width, energy, evolve_until, step};
use ccqm_core::lattice::marginal_density;
use ccqm_core::state::{product_state, Orbital};
use ccqm_core::{ConfigField, ExternalPotential, HamiltonianSpec, LatticeSpec, ParticleSpec, Propagator, Statistics};
use num_complex::Complex64;

fn lattice(m: usize, l: f64, mass: f64) -> LatticeSpec {
    let p = ParticleSpec::new("a", Statistics::Distinguishable, mass, 1).unwrap();
    LatticeSpec::new(vec![p], m, l, vec![l / m as f64], 1e-3, PI / 8.0).unwrap()
}

fn harmonic(k: f64) -> HamiltonianSpec {
    HamiltonianSpec { external: ExternalPotential::Harmonic { stiffness: k, center: vec![] }, ..HamiltonianSpec::free() }
}

fn gaussian(lat: &LatticeSpec, x0: f64, sigma: f64, p0: f64) -> ConfigField {
    product_state(lat, &[Orbital::gaussian(lat, &[x0], sigma, &[p0])]).unwrap()
}

fn free_width(sigma0: f64, hbar: f64, mass: f64, t: f64) -> f64 {
    sigma0 * (1.0 + (hbar * t / (2.0 * mass * sigma0 * sigma0)).powi(2)).sqrt()
}

#[test]
fn free_gaussian_spreads_like_closed_form() {
    for mass in [1.0, 2.5] {
        let lat = lattice(512, 200.0, mass);
        let h = HamiltonianSpec::free();
        let f0 = gaussian(&lat, 0.0, 2.0, 0.0);
        for t in [1.0, 5.0, 12.0] {
            let f = evolve_until(&f0, &h, t, 0.01).unwrap();
            let w = density_width(&lat, &marginal_density(&f, 0).unwrap());
            let oracle = free_width(2.0, h.hbar(), mass, t);
            assert!((w / oracle - 1.0).abs() < 5e-3, "m = {mass}, t = {t}: {w} vs {oracle}");
        }
    }
}

#[test]
fn nondefault_planck_constant_rescales_spreading() {
    let lat = lattice(512, 200.0, 1.0);
    let h = HamiltonianSpec { h_sim: 3.0, ..HamiltonianSpec::free() };
    let f = evolve_until(&gaussian(&lat, 0.0, 2.0, 0.0), &h, 5.0, 0.01).unwrap();
    let w = density_width(&lat, &marginal_density(&f, 0).unwrap());
    assert!((w / free_width(2.0, 3.0 / (2.0 * PI), 1.0, 5.0) - 1.0).abs() < 5e-3);
}

#[test]
fn harmonic_ground_state_is_stationary_over_a_period() {
    // m = k = ħ = 1: ω = 1, ground-state density width 1/√2.
    let lat = lattice(256, 32.0, 1.0);
    let h = harmonic(1.0);
    let f0 = gaussian(&lat, 0.0, 0.5f64.sqrt(), 0.0);
    let f = evolve_until(&f0, &h, 2.0 * PI, 1e-3).unwrap();
    let n = f.as_slice().len() as f64;
    let rms = (f.as_slice().iter().zip(f0.as_slice()).map(|(a, b)| (a.norm() - b.norm()).powi(2)).sum::<f64>() / n).sqrt();
    assert!(rms < 1e-6, "rms change {rms}");
}

#[test]
fn norm_drift_over_ten_thousand_steps() {
    let lat = lattice(256, 64.0, 1.0);
    let h = harmonic(0.5);
    let mut f = gaussian(&lat, 3.0, 1.2, 0.8);
    let p = Propagator::new(&lat, &h, 0.01).unwrap();
    for _ in 0..10_000 {
        p.step_in_place(&mut f).unwrap();
    }
    assert!((f.norm() - 1.0).abs() <= 1e-8, "norm {}", f.norm());
}

#[test]
fn single_step_preserves_norm() {
    let lat = lattice(128, 32.0, 1.0);
    let f = gaussian(&lat, -2.0, 1.0, 1.5);
    let g = step(&f, &harmonic(2.0), 0.05).unwrap();
    assert!((g.norm() - 1.0).abs() <= 1e-10);
    assert_eq!(g.time, 0.05);
}

#[test]
fn energy_drift_at_suggested_step() {
    let lat = lattice(512, 64.0, 1.0);
    let h = harmonic(1.0);
    let dt = h.suggested_dt(&lat).unwrap();
    let mut f = gaussian(&lat, 2.0, 0.9, 0.3);
    let e0 = energy(&f, &h).unwrap();
    let p = Propagator::new(&lat, &h, dt).unwrap();
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        p.step_in_place(&mut f).unwrap();
        worst = worst.max((energy(&f, &h).unwrap() / e0 - 1.0).abs());
    }
    assert!(worst <= 1e-6, "relative energy drift {worst} at dt = {dt}");
}

#[test]
fn step_is_linear() {
    let lat = lattice(128, 32.0, 1.0);
    let h = harmonic(0.7);
    let a = gaussian(&lat, -3.0, 1.0, 0.5);
    let b = gaussian(&lat, 4.0, 2.0, -1.0);
    let (ca, cb) = (Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.4));
    let mut combo = a.clone();
    for ((z, x), y) in combo.as_slice_mut().iter_mut().zip(a.as_slice()).zip(b.as_slice()) {
        *z = ca * x + cb * y;
    }
    let lhs = step(&combo, &h, 0.03).unwrap();
    let (sa, sb) = (step(&a, &h, 0.03).unwrap(), step(&b, &h, 0.03).unwrap());
    for ((l, x), y) in lhs.as_slice().iter().zip(sa.as_slice()).zip(sb.as_slice()) {
        assert!((l - (ca * x + cb * y)).norm() < 1e-10);
    }
}

#[test]
fn split_evolution_composes() {
    let lat = lattice(128, 32.0, 1.0);
    let h = harmonic(0.3);
    let f = gaussian(&lat, 1.0, 1.0, 0.2);
    let once = evolve_until(&f, &h, 1.0, 0.02).unwrap();
    let twice = evolve_until(&evolve_until(&f, &h, 0.4, 0.02).unwrap(), &h, 1.0, 0.02).unwrap();
    assert!(once.distance(&twice) < 1e-10);
    let same = evolve_until(&f, &h, 0.0, 0.02).unwrap();
    assert_eq!(same, f);
}

/// L² error of the density against a coherent state oscillating in a unit harmonic well.
fn coherent_density_error(dt: f64) -> f64 {
    let lat = lattice(256, 32.0, 1.0);
    let (x0, sigma, t) = (3.0, 0.5f64.sqrt(), 2.0);
    let f = evolve_until(&gaussian(&lat, x0, sigma, 0.0), &harmonic(1.0), t, dt).unwrap();
    let xc = x0 * t.cos();
    let dx = lat.dx();
    lat.coordinates()
        .iter()
        .zip(f.as_slice())
        .map(|(&x, z)| {
            let exact = (-(x - xc).powi(2) / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt();
            (z.norm_sqr() - exact).powi(2) * dx
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn halving_dt_quarters_the_error() {
    let (e1, e2, e3) = (coherent_density_error(0.04), coherent_density_error(0.02), coherent_density_error(0.01));
    for r in [e1 / e2, e2 / e3] {
        assert!((3.2..=4.8).contains(&r), "ratios {} {}", e1 / e2, e2 / e3);
    }
}
