//! Configuration-space lattice: grids, reference cells, quantization, occupancy
//! and position-space marginals.
//!
//! An `N`-particle wavefunction lives on a `D = Σ d_k` dimensional periodic grid
//! with `M` points per axis. Axes are grouped per particle in particle order, and
//! the amplitude array is row-major with the last axis fastest. Reference cells
//! are axis-aligned blocks anchored at grid index 0; particle `k` contributes
//! `a_k / Δx` grid points per cell side on each of its axes.

use std::f64::consts::PI;
use std::ops::Range;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{wave_numbers, Spectral};

/// Default simulation Planck constant (`ħ = 1`).
pub const DEFAULT_H_SIM: f64 = 2.0 * PI;

const COMMENSURATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistics {
    Boson,
    Fermion,
    Distinguishable,
}

impl Statistics {
    /// Sign picked up under exchange of two identical particles.
    pub fn exchange_sign(self) -> Option<f64> {
        match self {
            Statistics::Boson => Some(1.0),
            Statistics::Fermion => Some(-1.0),
            Statistics::Distinguishable => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSpec {
    pub species: String,
    pub statistics: Statistics,
    pub mass: f64,
    pub spatial_dim: usize,
}

impl ParticleSpec {
    pub fn new(species: impl Into<String>, statistics: Statistics, mass: f64, spatial_dim: usize) -> Result<Self> {
        let spec = ParticleSpec { species: species.into(), statistics, mass, spatial_dim };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::Config(format!("particle '{}': mass must be positive, got {}", self.species, self.mass)));
        }
        if !(1..=3).contains(&self.spatial_dim) {
            return Err(Error::Config(format!(
                "particle '{}': spatial_dim must be 1, 2 or 3, got {}",
                self.species, self.spatial_dim
            )));
        }
        Ok(())
    }

    /// Identical particles share species, statistics and mass.
    pub fn is_identical_to(&self, other: &ParticleSpec) -> bool {
        self.species == other.species
            && self.statistics == other.statistics
            && self.mass.to_bits() == other.mass.to_bits()
            && self.spatial_dim == other.spatial_dim
    }

    /// Whether this particle takes part in exchange (anti)symmetrization with `other`.
    pub fn exchanges_with(&self, other: &ParticleSpec) -> bool {
        self.statistics != Statistics::Distinguishable && self.is_identical_to(other)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub particles: Vec<ParticleSpec>,
    /// Grid points per axis, a power of two.
    pub grid_points: usize,
    /// Periodic domain length per axis; coordinates span `[-L/2, L/2)`.
    pub domain_length: f64,
    /// Reference-cell side `a_k` per particle.
    pub cell_lengths: Vec<f64>,
    /// Base magnitude `f_0`.
    pub base_magnitude: f64,
    /// Base phase `θ_0`.
    pub base_phase: f64,
}

impl LatticeSpec {
    pub fn new(
        particles: Vec<ParticleSpec>,
        grid_points: usize,
        domain_length: f64,
        cell_lengths: Vec<f64>,
        base_magnitude: f64,
        base_phase: f64,
    ) -> Result<Self> {
        let spec = LatticeSpec { particles, grid_points, domain_length, cell_lengths, base_magnitude, base_phase };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles.is_empty() {
            return Err(Error::Config("lattice needs at least one particle".into()));
        }
        for p in &self.particles {
            p.validate()?;
        }
        if self.grid_points < 2 || !self.grid_points.is_power_of_two() {
            return Err(Error::Config(format!("grid_points must be a power of two >= 2, got {}", self.grid_points)));
        }
        if !(self.domain_length > 0.0 && self.domain_length.is_finite()) {
            return Err(Error::Config(format!("domain_length must be positive, got {}", self.domain_length)));
        }
        if self.cell_lengths.len() != self.particles.len() {
            return Err(Error::Config(format!(
                "{} cell lengths given for {} particles",
                self.cell_lengths.len(),
                self.particles.len()
            )));
        }
        for k in 0..self.particles.len() {
            self.cell_points_checked(k)?;
        }
        if !(self.base_magnitude > 0.0 && self.base_magnitude.is_finite()) {
            return Err(Error::Config(format!("base_magnitude must be positive, got {}", self.base_magnitude)));
        }
        if !(self.base_phase > 0.0 && self.base_phase < 2.0 * PI) {
            return Err(Error::Config(format!("base_phase must lie in (0, 2π), got {}", self.base_phase)));
        }
        let steps = 2.0 * PI / self.base_phase;
        if (steps - steps.round()).abs() > COMMENSURATE_TOL * steps {
            return Err(Error::Config(format!(
                "base_phase {} does not divide 2π into an integer number of steps",
                self.base_phase
            )));
        }
        Ok(())
    }

    fn cell_points_checked(&self, k: usize) -> Result<usize> {
        let a = self.cell_lengths[k];
        let ratio = a / self.dx();
        let n = ratio.round();
        if !(a.is_finite() && n >= 1.0 && (ratio - n).abs() <= COMMENSURATE_TOL * ratio.max(1.0)) {
            return Err(Error::Config(format!(
                "cell length {a} of particle {k} is not a positive integer multiple of the grid spacing {}",
                self.dx()
            )));
        }
        let n = n as usize;
        if self.grid_points % n != 0 {
            return Err(Error::Config(format!(
                "cell of {n} grid points for particle {k} does not tile {} grid points",
                self.grid_points
            )));
        }
        Ok(n)
    }

    pub fn n_particles(&self) -> usize {
        self.particles.len()
    }

    /// Total configuration-space dimension `D`.
    pub fn total_dim(&self) -> usize {
        self.particles.iter().map(|p| p.spatial_dim).sum()
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.grid_points as f64
    }

    pub fn coordinate(&self, index: usize) -> f64 {
        -0.5 * self.domain_length + index as f64 * self.dx()
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.grid_points).map(|i| self.coordinate(i)).collect()
    }

    /// Grid index nearest to coordinate `x`, wrapped into the periodic domain.
    pub fn nearest_index(&self, x: f64) -> usize {
        let m = self.grid_points as i64;
        let i = ((x + 0.5 * self.domain_length) / self.dx()).round() as i64;
        i.rem_euclid(m) as usize
    }

    /// Periodic minimum-image separation.
    pub fn min_image(&self, d: f64) -> f64 {
        let l = self.domain_length;
        d - l * (d / l).round()
    }

    pub fn shape(&self) -> Vec<usize> {
        vec![self.grid_points; self.total_dim()]
    }

    pub fn n_points(&self) -> usize {
        self.grid_points.pow(self.total_dim() as u32)
    }

    /// Volume element `Δx^D` of one grid point.
    pub fn point_volume(&self) -> f64 {
        self.dx().powi(self.total_dim() as i32)
    }

    pub fn check_particle(&self, k: usize) -> Result<()> {
        if k >= self.particles.len() {
            return Err(Error::ParticleIndex { index: k, count: self.particles.len() });
        }
        Ok(())
    }

    /// Axes belonging to particle `k`.
    pub fn axis_range(&self, k: usize) -> Range<usize> {
        let start: usize = self.particles[..k].iter().map(|p| p.spatial_dim).sum();
        start..start + self.particles[k].spatial_dim
    }

    pub fn particle_of_axis(&self, axis: usize) -> usize {
        let mut acc = 0;
        for (k, p) in self.particles.iter().enumerate() {
            acc += p.spatial_dim;
            if axis < acc {
                return k;
            }
        }
        panic!("axis {axis} out of range")
    }

    /// Grid points per cell side for particle `k`.
    pub fn cell_points(&self, k: usize) -> usize {
        (self.cell_lengths[k] / self.dx()).round() as usize
    }

    /// Shape of the cell grid (one entry per axis).
    pub fn cell_shape(&self) -> Vec<usize> {
        (0..self.total_dim())
            .map(|a| self.grid_points / self.cell_points(self.particle_of_axis(a)))
            .collect()
    }

    pub fn n_phase_steps(&self) -> u32 {
        (2.0 * PI / self.base_phase).round() as u32
    }

    /// Groups (size ≥ 2) of mutually identical bosons or fermions.
    pub fn exchange_groups(&self) -> Vec<Vec<usize>> {
        let mut assigned = vec![false; self.particles.len()];
        let mut groups = Vec::new();
        for i in 0..self.particles.len() {
            if assigned[i] || self.particles[i].statistics == Statistics::Distinguishable {
                continue;
            }
            let group: Vec<usize> = (i..self.particles.len())
                .filter(|&j| !assigned[j] && self.particles[i].exchanges_with(&self.particles[j]))
                .collect();
            for &j in &group {
                assigned[j] = true;
            }
            if group.len() > 1 {
                groups.push(group);
            }
        }
        groups
    }

    /// Lattice restricted to a subset of the particles, keeping their order.
    pub fn sub_lattice(&self, particles: &[usize]) -> Result<LatticeSpec> {
        for &k in particles {
            self.check_particle(k)?;
        }
        LatticeSpec::new(
            particles.iter().map(|&k| self.particles[k].clone()).collect(),
            self.grid_points,
            self.domain_length,
            particles.iter().map(|&k| self.cell_lengths[k]).collect(),
            self.base_magnitude,
            self.base_phase,
        )
    }

    /// Joint lattice holding `self`'s particles followed by `other`'s.
    pub fn joined(&self, other: &LatticeSpec) -> Result<LatticeSpec> {
        if self.grid_points != other.grid_points
            || self.domain_length != other.domain_length
            || self.base_magnitude != other.base_magnitude
            || self.base_phase != other.base_phase
        {
            return Err(Error::Config("cannot join lattices with different grids or base units".into()));
        }
        let mut particles = self.particles.clone();
        particles.extend(other.particles.iter().cloned());
        let mut cells = self.cell_lengths.clone();
        cells.extend(other.cell_lengths.iter().copied());
        LatticeSpec::new(particles, self.grid_points, self.domain_length, cells, self.base_magnitude, self.base_phase)
    }
}

/// Calls `f(flat, index)` for every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(usize, &[usize])) {
    let total: usize = shape.iter().product();
    if total == 0 {
        return;
    }
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        f(flat, &idx);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

pub(crate) fn flat_index(shape: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

/// Complex amplitudes of an `N`-particle wavefunction over the configuration grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigField {
    pub lattice: LatticeSpec,
    pub amplitudes: ArrayD<Complex64>,
    pub time: f64,
}

impl ConfigField {
    pub fn new(lattice: LatticeSpec, amplitudes: ArrayD<Complex64>, time: f64) -> Result<Self> {
        lattice.validate()?;
        if amplitudes.shape() != lattice.shape().as_slice() {
            return Err(Error::Config(format!(
                "amplitude shape {:?} does not match lattice grid {:?}",
                amplitudes.shape(),
                lattice.shape()
            )));
        }
        let amplitudes = amplitudes.as_standard_layout().into_owned();
        Ok(ConfigField { lattice, amplitudes, time })
    }

    pub fn zeros(lattice: LatticeSpec) -> Self {
        let amplitudes = ArrayD::zeros(IxDyn(&lattice.shape()));
        ConfigField { lattice, amplitudes, time: 0.0 }
    }

    /// Samples `f` at every configuration-space grid point (coordinates in axis order).
    pub fn from_fn(lattice: LatticeSpec, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let shape = lattice.shape();
        let coords = lattice.coordinates();
        let mut data = vec![Complex64::new(0.0, 0.0); lattice.n_points()];
        let mut x = vec![0.0; shape.len()];
        for_each_index(&shape, |flat, idx| {
            for (xa, &i) in x.iter_mut().zip(idx) {
                *xa = coords[i];
            }
            data[flat] = f(&x);
        });
        let amplitudes = ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape matches lattice");
        ConfigField { lattice, amplitudes, time: 0.0 }
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.amplitudes.as_slice().expect("standard layout")
    }

    pub fn as_slice_mut(&mut self) -> &mut [Complex64] {
        self.amplitudes.as_slice_mut().expect("standard layout")
    }

    /// Discrete `Σ|ψ|² ΔV`.
    pub fn norm_sq(&self) -> f64 {
        self.as_slice().iter().map(|z| z.norm_sqr()).sum::<f64>() * self.lattice.point_volume()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm();
        if !(n > 1e-300) || !n.is_finite() {
            return Err(Error::ZeroSupport(format!("cannot normalize a field of norm {n}")));
        }
        let inv = 1.0 / n;
        self.amplitudes.mapv_inplace(|z| z * inv);
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// `⟨self|other⟩` with the grid volume element.
    pub fn inner(&self, other: &ConfigField) -> Complex64 {
        let s: Complex64 = self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| a.conj() * b).sum();
        s * self.lattice.point_volume()
    }

    /// Discrete L² distance `‖self − other‖`.
    pub fn distance(&self, other: &ConfigField) -> f64 {
        let s: f64 = self.as_slice().iter().zip(other.as_slice()).map(|(a, b)| (a - b).norm_sqr()).sum();
        (s * self.lattice.point_volume()).sqrt()
    }
}

/// Per-cell quantized magnitude and phase.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteField {
    pub lattice: LatticeSpec,
    pub n_f: ArrayD<u64>,
    pub n_theta: ArrayD<u32>,
}

impl DiscreteField {
    pub fn occupancy(&self) -> usize {
        self.n_f.iter().filter(|&&n| n >= 1).count()
    }

    /// Field with amplitude `n_f·f_0·e^{i n_θ θ_0}` on every grid point of each cell.
    pub fn reconstruct(&self) -> ConfigField {
        self.reconstruct_with(0.0)
    }

    /// Field with amplitude `(n_f + ½)·f_0·e^{i (n_θ + ½) θ_0}` on occupied cells and
    /// zero elsewhere; quantizes back to exactly `self`.
    pub fn reconstruct_midpoint(&self) -> ConfigField {
        self.reconstruct_with(0.5)
    }

    fn reconstruct_with(&self, offset: f64) -> ConfigField {
        let lat = &self.lattice;
        let map = CellMap::new(lat);
        let f0 = lat.base_magnitude;
        let th0 = lat.base_phase;
        let nf = self.n_f.as_slice().expect("standard layout");
        let nt = self.n_theta.as_slice().expect("standard layout");
        let data: Vec<Complex64> = map
            .point_cell
            .iter()
            .map(|&c| {
                let (n, t) = (nf[c as usize], nt[c as usize]);
                if n == 0 && offset > 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                Complex64::from_polar((n as f64 + offset) * f0, (t as f64 + offset) * th0)
            })
            .collect();
        let amplitudes = ArrayD::from_shape_vec(IxDyn(&lat.shape()), data).expect("shape matches lattice");
        ConfigField { lattice: lat.clone(), amplitudes, time: 0.0 }
    }
}

/// Grid-point to reference-cell assignment.
#[derive(Clone, Debug)]
pub struct CellMap {
    pub cell_shape: Vec<usize>,
    pub point_cell: Vec<u32>,
    pub points_per_cell: usize,
}

impl CellMap {
    pub fn new(lattice: &LatticeSpec) -> Self {
        let shape = lattice.shape();
        let cell_shape = lattice.cell_shape();
        let per_axis: Vec<usize> =
            (0..shape.len()).map(|a| lattice.cell_points(lattice.particle_of_axis(a))).collect();
        let points_per_cell = per_axis.iter().product();
        let mut point_cell = vec![0u32; lattice.n_points()];
        let mut cidx = vec![0usize; shape.len()];
        for_each_index(&shape, |flat, idx| {
            for a in 0..idx.len() {
                cidx[a] = idx[a] / per_axis[a];
            }
            point_cell[flat] = flat_index(&cell_shape, &cidx) as u32;
        });
        CellMap { cell_shape, point_cell, points_per_cell }
    }

    pub fn n_cells(&self) -> usize {
        self.cell_shape.iter().product()
    }

    /// Arithmetic mean of `|ψ|` over each cell's grid points.
    pub fn mean_magnitudes(&self, amplitudes: &[Complex64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cells()];
        for (z, &c) in amplitudes.iter().zip(&self.point_cell) {
            sums[c as usize] += z.norm();
        }
        let inv = 1.0 / self.points_per_cell as f64;
        sums.iter_mut().for_each(|s| *s *= inv);
        sums
    }

    /// Number of cells whose mean magnitude is strictly above `threshold`.
    pub fn count_above(&self, amplitudes: &[Complex64], threshold: f64) -> usize {
        self.mean_magnitudes(amplitudes).into_iter().filter(|&m| m > threshold).count()
    }
}

/// Magnitude quantum `floor(m / f_0)`, except that `m = f_0` exactly gives 0 so a
/// cell is occupied iff its quantum is nonzero.
pub fn magnitude_quantum(mean: f64, f0: f64) -> u64 {
    if !(mean > f0) {
        return 0;
    }
    (mean / f0).floor() as u64
}

pub fn quantize(field: &ConfigField) -> Result<DiscreteField> {
    let lat = &field.lattice;
    lat.validate()?;
    let map = CellMap::new(lat);
    let amps = field.as_slice();
    let means = map.mean_magnitudes(amps);

    let mut phasors = vec![Complex64::new(0.0, 0.0); map.n_cells()];
    for (z, &c) in amps.iter().zip(&map.point_cell) {
        let r = z.norm();
        if r > 0.0 {
            phasors[c as usize] += z / r;
        }
    }

    let steps = lat.n_phase_steps();
    let n_f: Vec<u64> = means.iter().map(|&m| magnitude_quantum(m, lat.base_magnitude)).collect();
    let n_theta: Vec<u32> = means
        .iter()
        .zip(&phasors)
        .map(|(&m, p)| {
            if m == 0.0 || p.norm() == 0.0 {
                return 0;
            }
            let mut theta = p.arg();
            if theta < 0.0 {
                theta += 2.0 * PI;
            }
            ((theta / lat.base_phase).floor() as u32).min(steps - 1)
        })
        .collect();

    let shape = IxDyn(&map.cell_shape);
    Ok(DiscreteField {
        lattice: lat.clone(),
        n_f: ArrayD::from_shape_vec(shape.clone(), n_f).expect("cell shape"),
        n_theta: ArrayD::from_shape_vec(shape, n_theta).expect("cell shape"),
    })
}

/// Number of reference cells whose mean magnitude strictly exceeds `f_0`.
pub fn relative_volume(field: &ConfigField) -> usize {
    let map = CellMap::new(&field.lattice);
    map.count_above(field.as_slice(), field.lattice.base_magnitude)
}

/// Position-space density of particle `k`: `|ψ|²` summed over all other coordinates.
pub fn marginal_density(field: &ConfigField, k: usize) -> Result<ArrayD<f64>> {
    let lat = &field.lattice;
    lat.check_particle(k)?;
    let range = lat.axis_range(k);
    let sub_shape = vec![lat.grid_points; range.len()];
    let mut g = vec![0.0; lat.grid_points.pow(range.len() as u32)];
    let amps = field.as_slice();
    for_each_index(&lat.shape(), |flat, idx| {
        g[flat_index(&sub_shape, &idx[range.clone()])] += amps[flat].norm_sqr();
    });
    let dv_others = lat.dx().powi((lat.total_dim() - range.len()) as i32);
    g.iter_mut().for_each(|v| *v *= dv_others);
    Ok(ArrayD::from_shape_vec(IxDyn(&sub_shape), g).expect("sub-grid shape"))
}

/// Number of particle-`k` cells on which the marginal of the quantized field is nonzero.
pub fn particle_volume(field: &ConfigField, k: usize) -> Result<usize> {
    let lat = &field.lattice;
    lat.check_particle(k)?;
    let discrete = quantize(field)?;
    let range = lat.axis_range(k);
    let cell_shape = lat.cell_shape();
    let sub_shape: Vec<usize> = cell_shape[range.clone()].to_vec();
    let mut hit = vec![false; sub_shape.iter().product()];
    let nf = discrete.n_f.as_slice().expect("standard layout");
    for_each_index(&cell_shape, |flat, idx| {
        if nf[flat] >= 1 {
            hit[flat_index(&sub_shape, &idx[range.clone()])] = true;
        }
    });
    Ok(hit.into_iter().filter(|&h| h).count())
}

/// `⟨|p_k|⟩`, the expectation of particle `k`'s momentum magnitude, computed spectrally.
pub fn mean_momentum_magnitude(field: &ConfigField, k: usize, h_sim: f64) -> Result<f64> {
    let lat = &field.lattice;
    lat.check_particle(k)?;
    let hbar = h_sim / (2.0 * PI);
    let mut phi = field.amplitudes.clone();
    Spectral::new(lat.grid_points).forward(&mut phi, 0..lat.total_dim());
    let kx = wave_numbers(lat.grid_points, lat.domain_length);
    let range = lat.axis_range(k);
    let phi = phi.as_slice().expect("standard layout");
    let (mut weighted, mut total) = (0.0, 0.0);
    for_each_index(&lat.shape(), |flat, idx| {
        let w = phi[flat].norm_sqr();
        let k2: f64 = idx[range.clone()].iter().map(|&i| kx[i] * kx[i]).sum();
        weighted += w * k2.sqrt();
        total += w;
    });
    if total == 0.0 {
        return Err(Error::ZeroSupport("mean momentum of a zero field".into()));
    }
    Ok(hbar * weighted / total)
}

/// Mean de Broglie wavelength `h / ⟨|p_k|⟩`.
pub fn de_broglie_wavelength(field: &ConfigField, k: usize, h_sim: f64) -> Result<f64> {
    let p = mean_momentum_magnitude(field, k, h_sim)?;
    let lat = &field.lattice;
    let hbar = h_sim / (2.0 * PI);
    // Below a billionth of the smallest grid momentum counts as zero.
    let p_min = hbar * 2.0 * PI / lat.domain_length;
    if p <= 1e-9 * p_min {
        return Err(Error::DegenerateMomentum { particle: k });
    }
    Ok(h_sim / p)
}

/// Cell length `c_scale · h / ⟨|p_k|⟩`, snapped down to a multiple of `Δx` (at least `Δx`).
pub fn de_broglie_cell_length(field: &ConfigField, k: usize, c_scale: f64, h_sim: f64) -> Result<f64> {
    if !(c_scale > 0.0) {
        return Err(Error::Config(format!("c_scale must be positive, got {c_scale}")));
    }
    let raw = c_scale * de_broglie_wavelength(field, k, h_sim)?;
    let dx = field.lattice.dx();
    let steps = (raw / dx * (1.0 + 1e-12)).floor().max(1.0);
    Ok(steps * dx)
}
