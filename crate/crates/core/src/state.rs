//! Initial-state construction and exchange (anti)symmetrization.

use itertools::Itertools;
use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{for_each_index, ConfigField, LatticeSpec};

/// Single-particle amplitude over one particle's `M^d` sub-grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Orbital {
    pub values: ArrayD<Complex64>,
}

impl Orbital {
    pub fn from_fn(lattice: &LatticeSpec, dim: usize, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let shape = vec![lattice.grid_points; dim];
        let coords = lattice.coordinates();
        let mut data = Vec::with_capacity(lattice.grid_points.pow(dim as u32));
        let mut x = vec![0.0; dim];
        for_each_index(&shape, |_, idx| {
            for (xa, &i) in x.iter_mut().zip(idx) {
                *xa = coords[i];
            }
            data.push(f(&x));
        });
        Orbital { values: ArrayD::from_shape_vec(IxDyn(&shape), data).expect("sub-grid shape") }
    }

    /// Normalized Gaussian `exp(-|x-c|²/(4σ²) + i p·x)` with minimum-image distances.
    pub fn gaussian(lattice: &LatticeSpec, center: &[f64], width: f64, momentum: &[f64]) -> Self {
        let dim = center.len();
        let mut o = Orbital::from_fn(lattice, dim, |x| {
            let mut r2 = 0.0;
            let mut phase = 0.0;
            for a in 0..dim {
                let d = lattice.min_image(x[a] - center[a]);
                r2 += d * d;
                phase += momentum.get(a).copied().unwrap_or(0.0) * d;
            }
            Complex64::from_polar((-r2 / (4.0 * width * width)).exp(), phase)
        });
        o.normalize(lattice);
        o
    }

    /// Flat-magnitude packet covering `count` whole cells per axis starting at cell `first`.
    pub fn flat_cells(lattice: &LatticeSpec, particle: usize, first: &[usize], count: &[usize]) -> Self {
        let dim = lattice.particles[particle].spatial_dim;
        let c = lattice.cell_points(particle);
        let shape = vec![lattice.grid_points; dim];
        let mut data = Vec::with_capacity(lattice.grid_points.pow(dim as u32));
        for_each_index(&shape, |_, idx| {
            let inside = (0..dim).all(|a| {
                let cell = idx[a] / c;
                cell >= first[a] && cell < first[a] + count[a]
            });
            data.push(if inside { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) });
        });
        let mut o = Orbital { values: ArrayD::from_shape_vec(IxDyn(&shape), data).expect("sub-grid shape") };
        o.normalize(lattice);
        o
    }

    pub fn normalize(&mut self, lattice: &LatticeSpec) {
        let dv = lattice.dx().powi(self.values.ndim() as i32);
        let n = (self.values.iter().map(|z| z.norm_sqr()).sum::<f64>() * dv).sqrt();
        if n > 0.0 {
            self.values.mapv_inplace(|z| z / n);
        }
    }

    pub fn overlap(&self, other: &Orbital, lattice: &LatticeSpec) -> Complex64 {
        let dv = lattice.dx().powi(self.values.ndim() as i32);
        self.values.iter().zip(other.values.iter()).map(|(a, b)| a.conj() * b).sum::<Complex64>() * dv
    }

    /// Weighted superposition `Σ w_i φ_i`, renormalized.
    pub fn superpose(lattice: &LatticeSpec, terms: &[(Complex64, &Orbital)]) -> Self {
        let mut values = terms[0].1.values.mapv(|z| z * terms[0].0);
        for (w, o) in &terms[1..] {
            values.zip_mut_with(&o.values, |a, b| *a += b * *w);
        }
        let mut o = Orbital { values };
        o.normalize(lattice);
        o
    }
}

/// Tensor product `φ_1 ⊗ … ⊗ φ_N` on the lattice (no symmetrization).
pub fn product_state(lattice: &LatticeSpec, orbitals: &[Orbital]) -> Result<ConfigField> {
    if orbitals.len() != lattice.n_particles() {
        return Err(Error::Config(format!(
            "{} orbitals given for {} particles",
            orbitals.len(),
            lattice.n_particles()
        )));
    }
    for (k, o) in orbitals.iter().enumerate() {
        if o.values.ndim() != lattice.particles[k].spatial_dim
            || o.values.shape().iter().any(|&n| n != lattice.grid_points)
        {
            return Err(Error::Config(format!("orbital {k} does not match particle {k}'s sub-grid")));
        }
    }
    let mut amplitudes = orbitals[0].values.clone();
    for o in &orbitals[1..] {
        amplitudes = outer(&amplitudes, &o.values);
    }
    ConfigField::new(lattice.clone(), amplitudes, 0.0)
}

pub(crate) fn outer(a: &ArrayD<Complex64>, b: &ArrayD<Complex64>) -> ArrayD<Complex64> {
    let mut shape = a.shape().to_vec();
    shape.extend_from_slice(b.shape());
    let bs = b.as_standard_layout();
    let bs = bs.as_slice().expect("standard layout");
    let mut data = Vec::with_capacity(a.len() * b.len());
    for x in a.as_standard_layout().iter() {
        data.extend(bs.iter().map(|y| x * y));
    }
    ArrayD::from_shape_vec(IxDyn(&shape), data).expect("outer shape")
}

/// A permutation of particles together with its exchange sign.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedPermutation {
    /// `perm[k]` is the particle whose coordinates fill slot `k`.
    pub perm: Vec<usize>,
    pub sign: f64,
}

fn parity(perm: &[usize]) -> usize {
    let mut seen = vec![false; perm.len()];
    let mut transpositions = 0;
    for start in 0..perm.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut j = start;
        while !seen[j] {
            seen[j] = true;
            j = perm[j];
            len += 1;
        }
        transpositions += len - 1;
    }
    transpositions % 2
}

/// All permutations that only exchange identical particles, with their signs.
pub fn exchange_permutations(lattice: &LatticeSpec) -> Vec<SignedPermutation> {
    let n = lattice.n_particles();
    let mut out = vec![SignedPermutation { perm: (0..n).collect(), sign: 1.0 }];
    for group in lattice.exchange_groups() {
        let sign_unit = lattice.particles[group[0]].statistics.exchange_sign().unwrap_or(1.0);
        let mut next = Vec::new();
        for base in &out {
            for arrangement in group.iter().copied().permutations(group.len()) {
                let mut perm = base.perm.clone();
                for (slot, &src) in group.iter().zip(&arrangement) {
                    perm[*slot] = base.perm[src];
                }
                let local: Vec<usize> =
                    arrangement.iter().map(|s| group.iter().position(|g| g == s).expect("member")).collect();
                let sign = if parity(&local) == 1 { base.sign * sign_unit } else { base.sign };
                next.push(SignedPermutation { perm, sign });
            }
        }
        out = next;
    }
    out
}

/// `(P ψ)(x_1, …, x_N) = ψ(x_{perm[0]}, …, x_{perm[N-1]})`; permuted particles must share a dimension.
pub fn permute_particles(field: &ConfigField, perm: &[usize]) -> Result<ConfigField> {
    let lat = &field.lattice;
    if perm.len() != lat.n_particles() {
        return Err(Error::Config("permutation length does not match particle count".into()));
    }
    for (k, &p) in perm.iter().enumerate() {
        lat.check_particle(p)?;
        if lat.particles[k].spatial_dim != lat.particles[p].spatial_dim {
            return Err(Error::Config(format!("cannot exchange particles {k} and {p} of different dimension")));
        }
    }
    // Old block m feeds new block perm[m]; ndarray wants, per new axis, the old axis.
    let mut inverse = vec![0usize; perm.len()];
    for (k, &p) in perm.iter().enumerate() {
        inverse[p] = k;
    }
    let axes: Vec<usize> = inverse.iter().flat_map(|&m| lat.axis_range(m)).collect();
    let amplitudes = field.amplitudes.clone().permuted_axes(IxDyn(&axes)).as_standard_layout().into_owned();
    Ok(ConfigField { lattice: lat.clone(), amplitudes, time: field.time })
}

/// Exchange projector `S = (1/n!) Σ_π sign(π) P_π` over the lattice's identical-particle groups.
pub fn symmetrize(field: &ConfigField) -> Result<ConfigField> {
    let perms = exchange_permutations(&field.lattice);
    if perms.len() == 1 {
        return Ok(field.clone());
    }
    let mut acc = ArrayD::<Complex64>::zeros(field.amplitudes.raw_dim());
    for p in &perms {
        let permuted = permute_particles(field, &p.perm)?;
        acc.zip_mut_with(&permuted.amplitudes, |a, b| *a += b * p.sign);
    }
    let scale = 1.0 / perms.len() as f64;
    acc.mapv_inplace(|z| z * scale);
    Ok(ConfigField { lattice: field.lattice.clone(), amplitudes: acc, time: field.time })
}

/// `‖ψ − s·P_ij ψ‖` where `s` is `+1` for bosons and `-1` for fermions.
pub fn exchange_residual(field: &ConfigField, i: usize, j: usize) -> Result<f64> {
    let lat = &field.lattice;
    lat.check_particle(i)?;
    lat.check_particle(j)?;
    let sign = if lat.particles[i].exchanges_with(&lat.particles[j]) {
        lat.particles[i].statistics.exchange_sign().unwrap_or(1.0)
    } else {
        return Err(Error::Config(format!("particles {i} and {j} are not identical")));
    };
    let mut perm: Vec<usize> = (0..lat.n_particles()).collect();
    perm.swap(i, j);
    let swapped = permute_particles(field, &perm)?;
    let s: f64 = field
        .as_slice()
        .iter()
        .zip(swapped.as_slice())
        .map(|(a, b)| (a - b * sign).norm_sqr())
        .sum();
    Ok((s * lat.point_volume()).sqrt())
}
