//! Built-in configurations, one per recipe, in scaled desk units (`h_sim = 2π`,
//! so `ħ = 1`). `paper_scale` keeps the published GRW constants instead.

use std::f64::consts::PI;

use ccqm_core::evolution::{PairPotential, PairRule};
use ccqm_core::{CcqmParams, GrwParams, HamiltonianSpec, Statistics};

use crate::config::*;

fn gaussian(species: &str, center: f64, width: f64) -> ParticleConfig {
    ParticleConfig {
        species: species.into(),
        statistics: Statistics::Distinguishable,
        mass: 1.0,
        spatial_dim: 1,
        cell_points: None,
        wavefunction: 0,
        initial: InitialState::Gaussian { center: vec![center], width, momentum: Vec::new() },
    }
}

fn ccqm(v_critical: usize, fraction_f: f64, check_interval: f64) -> CcqmParams {
    CcqmParams::new(v_critical, fraction_f, check_interval).expect("preset ccqm constants")
}

fn base(recipe: Recipe, grid_points: usize, domain_length: f64, cell_points: usize, relative_f0: f64) -> RunConfig {
    RunConfig {
        schema_version: SCHEMA_VERSION,
        recipe,
        preset: Preset::Desk,
        seed: 20_240_917,
        trajectories: 1,
        model: ModelKind::Unitary,
        dt: 0.05,
        t_end: 5.0,
        max_events: None,
        stop_at_boundary: false,
        merge_coefficient: 0.0,
        max_joint_points: None,
        lattice: LatticeConfig {
            grid_points,
            domain_length,
            cell_points,
            base_magnitude: None,
            base_magnitude_relative: Some(relative_f0),
            base_phase: PI / 8.0,
        },
        particles: Vec::new(),
        hamiltonian: HamiltonianSpec::free(),
        grw: None,
        ccqm: None,
        output: OutputConfig::default(),
        sweep: None,
        double_slit: None,
        statistics: None,
    }
}

pub fn preset(recipe: Recipe) -> RunConfig {
    match recipe {
        Recipe::Evolve => RunConfig { particles: vec![gaussian("e", 0.0, 1.0)], ..base(recipe, 128, 64.0, 4, 0.05) },
        Recipe::FreeSpreadCcqm => RunConfig {
            model: ModelKind::Ccqm,
            trajectories: 64,
            t_end: 1000.0,
            stop_at_boundary: true,
            particles: vec![gaussian("e", 0.0, 0.8)],
            ccqm: Some(ccqm(8, 0.5, 0.25)),
            ..base(recipe, 256, 128.0, 4, 0.03)
        },
        Recipe::ExpGrowth => {
            let flat = |species: &str| ParticleConfig {
                initial: InitialState::FlatCells { first: vec![4], count: vec![8] },
                ..gaussian(species, 0.0, 1.0)
            };
            RunConfig {
                t_end: 0.0,
                particles: vec![flat("a"), flat("b"), flat("c")],
                output: OutputConfig { checkpoint: false, ..OutputConfig::default() },
                ..base(recipe, 64, 64.0, 4, 0.5)
            }
        }
        Recipe::GrwRates => RunConfig {
            model: ModelKind::Grw,
            t_end: 1e4,
            particles: (0..10)
                .map(|k| ParticleConfig { wavefunction: k, ..gaussian(&format!("p{k}"), 0.0, 1.0) })
                .collect(),
            grw: Some(GrwParams::new(1.0, 1.0).expect("preset grw constants")),
            output: OutputConfig { checkpoint: false, ..OutputConfig::default() },
            ..base(recipe, 16, 16.0, 2, 0.05)
        },
        Recipe::SymmetryCompare => {
            let fermion = |x: f64| ParticleConfig { statistics: Statistics::Fermion, ..gaussian("e", x, 1.0) };
            RunConfig {
                trajectories: 8,
                particles: vec![fermion(-2.0), fermion(2.0)],
                grw: Some(GrwParams::new(1.0, 1.0).expect("preset grw constants")),
                ccqm: Some(ccqm(2, 0.5, 0.1)),
                output: OutputConfig { checkpoint: false, ..OutputConfig::default() },
                ..base(recipe, 64, 32.0, 2, 0.02)
            }
        }
        Recipe::DoubleSlit => RunConfig {
            model: ModelKind::Ccqm,
            trajectories: 200,
            t_end: 20.0,
            particles: vec![ParticleConfig {
                initial: InitialState::TwoSource { separation: 16.0, width: 1.0 },
                ..gaussian("e", 0.0, 1.0)
            }],
            ccqm: Some(ccqm(25, 0.5, 0.1)),
            double_slit: Some(DoubleSlitConfig { v_critical: vec![25, 20, 14, 8], window: None, min_visibility: 0.9 }),
            output: OutputConfig { sample_every: 20, checkpoint: false, ..OutputConfig::default() },
            ..base(recipe, 256, 192.0, 4, 0.05)
        },
        Recipe::MergeThenCollapse => RunConfig {
            model: ModelKind::Ccqm,
            t_end: 20.0,
            merge_coefficient: 50.0,
            particles: vec![
                gaussian("a", -1.5, 1.5),
                ParticleConfig { wavefunction: 1, ..gaussian("b", 1.5, 1.5) },
            ],
            hamiltonian: HamiltonianSpec {
                pairs: vec![PairRule {
                    species: None,
                    potential: PairPotential::GaussianWell { depth: 0.5, width: 2.0 },
                    cutoff: None,
                }],
                ..HamiltonianSpec::free()
            },
            ccqm: Some(CcqmParams { split_probability: 0.5, split_coefficient: 1e6, ..ccqm(40, 0.5, 0.2) }),
            ..base(recipe, 64, 64.0, 2, 0.05)
        },
        Recipe::StatisticsPreservation => RunConfig {
            trajectories: 10_000,
            particles: vec![gaussian("e", 0.0, 4.0)],
            grw: Some(GrwParams::new(1.0, 0.5).expect("preset grw constants")),
            ccqm: Some(ccqm(2, 0.5, 0.1)),
            statistics: Some(StatisticsConfig::default()),
            output: OutputConfig { checkpoint: false, ..OutputConfig::default() },
            ..base(recipe, 256, 64.0, 2, 0.05)
        },
        Recipe::Sweep => {
            let inner = preset(Recipe::FreeSpreadCcqm);
            RunConfig {
                recipe,
                trajectories: 4,
                t_end: 40.0,
                sweep: Some(SweepConfig {
                    base: Recipe::FreeSpreadCcqm,
                    v_critical: vec![8, 12],
                    fraction_f: vec![0.5],
                    base_magnitude: vec![0.03, 0.05],
                }),
                ..inner
            }
        }
    }
}

/// A dust grain under the published GRW constants, in centimetres, grams and
/// seconds. At a one-second horizon the expected hit count is about 1e-16.
pub fn paper_scale() -> RunConfig {
    RunConfig {
        preset: Preset::PaperScale,
        model: ModelKind::Grw,
        dt: 1e-3,
        t_end: 1.0,
        particles: vec![ParticleConfig { mass: 1e-12, ..gaussian("grain", 0.0, 1e-4) }],
        hamiltonian: HamiltonianSpec { h_sim: 6.626_070_15e-27, ..HamiltonianSpec::free() },
        grw: Some(GrwParams::paper_scale()),
        ..base(Recipe::Evolve, 128, 2e-3, 4, 0.05)
    }
}
