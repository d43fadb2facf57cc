//! Unitary Schrödinger propagation on the periodic configuration grid.
//!
//! Strang splitting: half kinetic step in the spectral domain, full potential
//! step in position space, half kinetic step. The kinetic factor is exact on the
//! grid, so a potential-free field is propagated without time-step error.

use std::f64::consts::PI;

use ndarray::ArrayD;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{for_each_index, ConfigField, LatticeSpec, ParticleSpec, DEFAULT_H_SIM};
use crate::spectral::{wave_numbers, Spectral};

/// Largest potential phase advance per step used by [`HamiltonianSpec::suggested_dt`].
pub const MAX_POTENTIAL_PHASE: f64 = PI / 8.0;

/// External potential felt by every particle, evaluated on its own axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalPotential {
    #[default]
    Free,
    /// `½ k |x − c|²` (minimum image); `center` defaults to the origin.
    Harmonic {
        stiffness: f64,
        #[serde(default)]
        center: Vec<f64>,
    },
    /// Slab of height `height` across the first axis, `|x₀ − center| < width/2`.
    Barrier { center: f64, width: f64, height: f64 },
    /// Wall across the first axis with two openings along the second axis.
    DoubleSlit {
        wall_position: f64,
        wall_thickness: f64,
        slit_separation: f64,
        slit_width: f64,
        height: f64,
    },
    /// Values over the particle's `M^d` sub-grid, row-major.
    Tabulated { values: Vec<f64> },
}

impl ExternalPotential {
    fn value(&self, lattice: &LatticeSpec, x: &[f64], flat: usize) -> f64 {
        match self {
            ExternalPotential::Free => 0.0,
            ExternalPotential::Harmonic { stiffness, center } => {
                let r2: f64 = x
                    .iter()
                    .enumerate()
                    .map(|(a, &xa)| {
                        let d = lattice.min_image(xa - center.get(a).copied().unwrap_or(0.0));
                        d * d
                    })
                    .sum();
                0.5 * stiffness * r2
            }
            ExternalPotential::Barrier { center, width, height } => {
                if (x[0] - center).abs() < 0.5 * width {
                    *height
                } else {
                    0.0
                }
            }
            ExternalPotential::DoubleSlit { wall_position, wall_thickness, slit_separation, slit_width, height } => {
                if (x[0] - wall_position).abs() >= 0.5 * wall_thickness {
                    return 0.0;
                }
                let y = x.get(1).copied().unwrap_or(0.0);
                let open = (y - 0.5 * slit_separation).abs() < 0.5 * slit_width
                    || (y + 0.5 * slit_separation).abs() < 0.5 * slit_width;
                if open {
                    0.0
                } else {
                    *height
                }
            }
            ExternalPotential::Tabulated { values } => values[flat],
        }
    }

    fn validate(&self, dim: usize, grid_points: usize) -> Result<()> {
        match self {
            ExternalPotential::Free => Ok(()),
            ExternalPotential::Harmonic { stiffness, center } => {
                if !stiffness.is_finite() || (!center.is_empty() && center.len() != dim) {
                    return Err(Error::Config("harmonic potential needs finite stiffness and a center per axis".into()));
                }
                Ok(())
            }
            ExternalPotential::Barrier { center, width, height } => {
                if ![center, width, height].iter().all(|v| v.is_finite()) || *width < 0.0 {
                    return Err(Error::Config("barrier parameters must be finite, width non-negative".into()));
                }
                Ok(())
            }
            ExternalPotential::DoubleSlit { wall_position, wall_thickness, slit_separation, slit_width, height } => {
                if dim < 2 {
                    return Err(Error::Config("double-slit potential needs particles with at least 2 axes".into()));
                }
                let all = [wall_position, wall_thickness, slit_separation, slit_width, height];
                if !all.iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("double-slit parameters must be finite".into()));
                }
                Ok(())
            }
            ExternalPotential::Tabulated { values } => {
                if values.len() != grid_points.pow(dim as u32) {
                    return Err(Error::Config(format!(
                        "tabulated potential has {} values, sub-grid has {}",
                        values.len(),
                        grid_points.pow(dim as u32)
                    )));
                }
                if !values.iter().all(|v| v.is_finite()) {
                    return Err(Error::Config("tabulated potential must be finite".into()));
                }
                Ok(())
            }
        }
    }
}

/// Central pair potential as a function of the minimum-image separation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PairPotential {
    /// `strength / sqrt(r² + softening²)`
    SoftCoulomb { strength: f64, softening: f64 },
    /// `−depth · exp(−r² / (2 width²))`
    GaussianWell { depth: f64, width: f64 },
}

/// Pair interaction, optionally restricted to a species pair and cut off beyond `cutoff`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRule {
    #[serde(default)]
    pub species: Option<(String, String)>,
    pub potential: PairPotential,
    #[serde(default)]
    pub cutoff: Option<f64>,
}

impl PairRule {
    pub fn matches(&self, a: &ParticleSpec, b: &ParticleSpec) -> bool {
        match &self.species {
            None => true,
            Some((x, y)) => (a.species == *x && b.species == *y) || (a.species == *y && b.species == *x),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        if let Some(c) = self.cutoff {
            if r > c {
                return 0.0;
            }
        }
        match self.potential {
            PairPotential::SoftCoulomb { strength, softening } => strength / (r * r + softening * softening).sqrt(),
            PairPotential::GaussianWell { depth, width } => -depth * (-r * r / (2.0 * width * width)).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self.potential {
            PairPotential::SoftCoulomb { strength, softening } => strength.is_finite() && softening > 0.0,
            PairPotential::GaussianWell { depth, width } => depth.is_finite() && width > 0.0,
        };
        if !ok || self.cutoff.is_some_and(|c| !(c > 0.0)) {
            return Err(Error::Config(format!("invalid pair interaction {:?}", self)));
        }
        Ok(())
    }
}

fn default_h_sim() -> f64 {
    DEFAULT_H_SIM
}

/// Hamiltonian: kinetic energy from each particle's mass, a shared external
/// potential and pairwise interactions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HamiltonianSpec {
    #[serde(default = "default_h_sim")]
    pub h_sim: f64,
    #[serde(default)]
    pub external: ExternalPotential,
    #[serde(default)]
    pub pairs: Vec<PairRule>,
}

impl Default for HamiltonianSpec {
    fn default() -> Self {
        HamiltonianSpec { h_sim: DEFAULT_H_SIM, external: ExternalPotential::Free, pairs: Vec::new() }
    }
}

impl HamiltonianSpec {
    pub fn free() -> Self {
        Self::default()
    }

    pub fn hbar(&self) -> f64 {
        self.h_sim / (2.0 * PI)
    }

    pub fn validate(&self, lattice: &LatticeSpec) -> Result<()> {
        if !(self.h_sim > 0.0 && self.h_sim.is_finite()) {
            return Err(Error::Config(format!("h_sim must be positive, got {}", self.h_sim)));
        }
        for p in &lattice.particles {
            self.external.validate(p.spatial_dim, lattice.grid_points)?;
        }
        for r in &self.pairs {
            r.validate()?;
        }
        Ok(())
    }

    /// First pair rule that applies to the two particles.
    pub fn pair_rule(&self, a: &ParticleSpec, b: &ParticleSpec) -> Option<&PairRule> {
        self.pairs.iter().find(|r| r.matches(a, b))
    }

    /// Minimum-image distance between particles `i` and `j` at configuration point `x`.
    pub fn separation(lattice: &LatticeSpec, x: &[f64], i: usize, j: usize) -> f64 {
        let (ri, rj) = (lattice.axis_range(i), lattice.axis_range(j));
        ri.zip(rj)
            .map(|(a, b)| {
                let d = lattice.min_image(x[a] - x[b]);
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// External potential of particle `k` tabulated over its sub-grid.
    pub fn external_table(&self, lattice: &LatticeSpec, k: usize) -> Vec<f64> {
        let dim = lattice.particles[k].spatial_dim;
        let coords = lattice.coordinates();
        let mut out = Vec::with_capacity(lattice.grid_points.pow(dim as u32));
        let mut x = vec![0.0; dim];
        for_each_index(&vec![lattice.grid_points; dim], |flat, idx| {
            for (xa, &i) in x.iter_mut().zip(idx) {
                *xa = coords[i];
            }
            out.push(self.external.value(lattice, &x, flat));
        });
        out
    }

    /// Total potential on the joint grid, row-major.
    pub fn potential_grid(&self, lattice: &LatticeSpec) -> Result<Vec<f64>> {
        self.validate(lattice)?;
        let n = lattice.n_particles();
        let m = lattice.grid_points;
        let tables: Vec<Vec<f64>> = (0..n).map(|k| self.external_table(lattice, k)).collect();
        let rules: Vec<(usize, usize, &PairRule)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| self.pair_rule(&lattice.particles[i], &lattice.particles[j]).map(|r| (i, j, r)))
            .collect();
        let ranges: Vec<_> = (0..n).map(|k| lattice.axis_range(k)).collect();
        let coords = lattice.coordinates();
        let shape = lattice.shape();
        let mut v = vec![0.0; lattice.n_points()];
        let mut x = vec![0.0; shape.len()];
        for_each_index(&shape, |flat, idx| {
            let mut total = 0.0;
            for (k, r) in ranges.iter().enumerate() {
                let sub = idx[r.clone()].iter().fold(0, |acc, &i| acc * m + i);
                total += tables[k][sub];
            }
            if !rules.is_empty() {
                for (xa, &i) in x.iter_mut().zip(idx) {
                    *xa = coords[i];
                }
                for &(i, j, rule) in &rules {
                    total += rule.value(Self::separation(lattice, &x, i, j));
                }
            }
            v[flat] = total;
        });
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Config(format!("potential is not finite on the grid ({bad})")));
        }
        Ok(v)
    }

    /// Time step keeping the potential phase advance per step below π/8.
    pub fn suggested_dt(&self, lattice: &LatticeSpec) -> Result<f64> {
        let vmax = self.potential_grid(lattice)?.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(if vmax > 0.0 { MAX_POTENTIAL_PHASE * self.hbar() / vmax } else { f64::INFINITY })
    }
}

/// Precomputed split-step factors for one lattice, Hamiltonian and time step.
#[derive(Clone, Debug)]
pub struct Propagator {
    lattice: LatticeSpec,
    dt: f64,
    spectral: Spectral,
    kinetic_half: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
}

/// Kinetic energy `ħ² k² / 2m` at every spectral grid point.
fn kinetic_grid(lattice: &LatticeSpec, hbar: f64) -> Vec<f64> {
    let k = wave_numbers(lattice.grid_points, lattice.domain_length);
    let inv_mass: Vec<f64> =
        (0..lattice.total_dim()).map(|a| 1.0 / lattice.particles[lattice.particle_of_axis(a)].mass).collect();
    let mut t = vec![0.0; lattice.n_points()];
    for_each_index(&lattice.shape(), |flat, idx| {
        t[flat] = idx.iter().enumerate().map(|(a, &i)| 0.5 * hbar * hbar * k[i] * k[i] * inv_mass[a]).sum();
    });
    t
}

impl Propagator {
    pub fn new(lattice: &LatticeSpec, h: &HamiltonianSpec, dt: f64) -> Result<Self> {
        if !(dt >= 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be non-negative and finite, got {dt}")));
        }
        let hbar = h.hbar();
        let v = h.potential_grid(lattice)?;
        let kinetic_half =
            kinetic_grid(lattice, hbar).into_iter().map(|t| Complex64::from_polar(1.0, -0.5 * t * dt / hbar)).collect();
        let potential_phase = v.into_iter().map(|v| Complex64::from_polar(1.0, -v * dt / hbar)).collect();
        Ok(Propagator {
            lattice: lattice.clone(),
            dt,
            spectral: Spectral::new(lattice.grid_points),
            kinetic_half,
            potential_phase,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn lattice(&self) -> &LatticeSpec {
        &self.lattice
    }

    fn apply(data: &mut ArrayD<Complex64>, factor: &[Complex64]) {
        let d = data.as_slice_mut().expect("standard layout");
        for (z, f) in d.iter_mut().zip(factor) {
            *z *= f;
        }
    }

    /// Advances `field` by one step in place.
    pub fn step_in_place(&self, field: &mut ConfigField) -> Result<()> {
        if field.lattice != self.lattice {
            return Err(Error::Config("field lattice does not match propagator lattice".into()));
        }
        if self.dt == 0.0 {
            return Ok(());
        }
        let axes = 0..self.lattice.total_dim();
        let psi = &mut field.amplitudes;
        self.spectral.forward(psi, axes.clone());
        Self::apply(psi, &self.kinetic_half);
        self.spectral.inverse(psi, axes.clone());
        Self::apply(psi, &self.potential_phase);
        self.spectral.forward(psi, axes.clone());
        Self::apply(psi, &self.kinetic_half);
        self.spectral.inverse(psi, axes);
        field.time += self.dt;
        if let Some(bad) = field.as_slice().iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NumericBlowup {
                time: field.time,
                detail: format!("non-finite amplitude at flat index {bad} after a step of {}", self.dt),
            });
        }
        Ok(())
    }

    /// Steps until `t_target`; the final step is shortened to land on it exactly.
    pub fn evolve_until(&self, field: &mut ConfigField, h: &HamiltonianSpec, t_target: f64) -> Result<()> {
        let t0 = field.time;
        if t_target < t0 {
            return Err(Error::Config(format!("target time {t_target} precedes field time {t0}")));
        }
        if t_target == t0 {
            return Ok(());
        }
        if self.dt == 0.0 {
            return Err(Error::Config("cannot evolve to a later time with a zero time step".into()));
        }
        let span = t_target - t0;
        let tol = 1e-9 * self.dt;
        let full = ((span + tol) / self.dt).floor() as u64;
        for i in 0..full {
            self.step_in_place(field)?;
            field.time = t0 + (i + 1) as f64 * self.dt;
        }
        let rest = t_target - field.time;
        if rest > tol {
            Propagator::new(&self.lattice, h, rest)?.step_in_place(field)?;
        }
        field.time = t_target;
        Ok(())
    }
}

/// One split-step of length `dt`; `dt = 0` returns the field unchanged.
pub fn step(field: &ConfigField, h: &HamiltonianSpec, dt: f64) -> Result<ConfigField> {
    let mut out = field.clone();
    if dt == 0.0 {
        return Ok(out);
    }
    Propagator::new(&field.lattice, h, dt)?.step_in_place(&mut out)?;
    Ok(out)
}

pub fn evolve_until(field: &ConfigField, h: &HamiltonianSpec, t_target: f64, dt: f64) -> Result<ConfigField> {
    let mut out = field.clone();
    if t_target == field.time {
        return Ok(out);
    }
    Propagator::new(&field.lattice, h, dt)?.evolve_until(&mut out, h, t_target)?;
    Ok(out)
}

/// `⟨H⟩ / ⟨ψ|ψ⟩`.
pub fn energy(field: &ConfigField, h: &HamiltonianSpec) -> Result<f64> {
    let lat = &field.lattice;
    let v = h.potential_grid(lat)?;
    let amps = field.as_slice();
    let norm: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(Error::ZeroSupport("energy of a zero field".into()));
    }
    let pot: f64 = amps.iter().zip(&v).map(|(z, v)| z.norm_sqr() * v).sum::<f64>() / norm;
    let mut phi = field.amplitudes.clone();
    Spectral::new(lat.grid_points).forward(&mut phi, 0..lat.total_dim());
    let t = kinetic_grid(lat, h.hbar());
    let phi = phi.as_slice().expect("standard layout");
    let pnorm: f64 = phi.iter().map(|z| z.norm_sqr()).sum();
    let kin: f64 = phi.iter().zip(&t).map(|(z, t)| z.norm_sqr() * t).sum::<f64>() / pnorm;
    Ok(kin + pot)
}

/// RMS width `sqrt(⟨x²⟩ − ⟨x⟩²)` of a 1D density sampled on the lattice coordinates.
pub fn density_width(lattice: &LatticeSpec, density: &ArrayD<f64>) -> f64 {
    let coords = lattice.coordinates();
    let total: f64 = density.iter().sum();
    let mean: f64 = density.iter().zip(&coords).map(|(g, x)| g * x).sum::<f64>() / total;
    let var: f64 = density.iter().zip(&coords).map(|(g, x)| g * (x - mean) * (x - mean)).sum::<f64>() / total;
    var.sqrt()
}
