//! GRW spontaneous localization: Poisson hit times, single-particle Gaussian
//! jump factor, hit-center distribution and renormalization.

use std::f64::consts::PI;

use ndarray::{ArrayD, IxDyn};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{for_each_index, marginal_density, relative_volume, ConfigField, LatticeSpec};
use crate::event::{CollapseEvent, EventModel};
use crate::rng::sample_categorical;

/// Seconds in a Julian year.
pub const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// Published GRW hit rate per particle.
pub const GRW_LAMBDA_PER_SECOND: f64 = 1e-16;
/// Localization radius `1/√α` in centimetres.
pub const GRW_LOCALIZATION_RADIUS_CM: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrwParams {
    /// Per-particle hit frequency `λ`.
    pub lambda_rate: f64,
    /// Inverse squared localization radius `α`.
    pub alpha: f64,
}

impl GrwParams {
    pub fn new(lambda_rate: f64, alpha: f64) -> Result<Self> {
        let p = GrwParams { lambda_rate, alpha };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_rate > 0.0 && self.lambda_rate.is_finite()) {
            return Err(Error::Config(format!("lambda_rate must be positive, got {}", self.lambda_rate)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Parameters of the original proposal in CGS-second units.
    pub fn paper_scale() -> Self {
        GrwParams {
            lambda_rate: GRW_LAMBDA_PER_SECOND,
            alpha: 1.0 / (GRW_LOCALIZATION_RADIUS_CM * GRW_LOCALIZATION_RADIUS_CM),
        }
    }

    pub fn localization_radius(&self) -> f64 {
        1.0 / self.alpha.sqrt()
    }
}

/// Mean time between hits anywhere in a system of `n_particles` particles.
pub fn mean_wait(n_particles: f64, lambda_rate: f64) -> f64 {
    1.0 / (n_particles * lambda_rate)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub time: f64,
    pub particle: usize,
}

/// Hits of `n_particles` independent rate-`λ` Poisson processes on `(0, t_horizon]`,
/// sorted by time.
///
/// Sampled as the superposed process of rate `Nλ` with a uniformly chosen
/// particle per hit, which has the same law as merging the per-particle streams.
pub fn sample_hit_schedule<R: Rng + ?Sized>(
    n_particles: usize,
    lambda_rate: f64,
    t_horizon: f64,
    rng: &mut R,
) -> Result<Vec<Hit>> {
    if !(t_horizon > 0.0) {
        return Err(Error::Config(format!("hit horizon must be positive, got {t_horizon}")));
    }
    if !(lambda_rate > 0.0) {
        return Err(Error::Config(format!("lambda_rate must be positive, got {lambda_rate}")));
    }
    let mut hits = Vec::new();
    if n_particles == 0 {
        return Ok(hits);
    }
    let rate = n_particles as f64 * lambda_rate;
    let mut t = 0.0;
    loop {
        t += next_wait(rate, rng);
        if t > t_horizon {
            break;
        }
        hits.push(Hit { time: t, particle: rng.random_range(0..n_particles) });
    }
    Ok(hits)
}

/// Exponential waiting time with the given rate.
pub fn next_wait<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    -u.ln() / rate
}

/// Jump factor `(α/π)^{d/4} exp(−α r²/2)` for squared distance `r2` in `d` dimensions.
pub fn jump_gaussian(alpha: f64, r2: f64, dim: usize) -> f64 {
    (alpha / PI).powf(dim as f64 / 4.0) * (-0.5 * alpha * r2).exp()
}

/// `K[c][x] = exp(−α·minimg(x − c)²)` on one axis, row-major `M × M`.
pub(crate) fn squared_kernel(lattice: &LatticeSpec, alpha: f64) -> Vec<f64> {
    let m = lattice.grid_points;
    let coords = lattice.coordinates();
    let mut k = vec![0.0; m * m];
    for c in 0..m {
        for x in 0..m {
            let d = lattice.min_image(coords[x] - coords[c]);
            k[c * m + x] = (-alpha * d * d).exp();
        }
    }
    k
}

/// Applies `out[.., c, ..] = Σ_x K[c][x] in[.., x, ..]` along `axis` of a cube of side `m`.
pub(crate) fn convolve_axis(data: &[f64], dim: usize, m: usize, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let inner = m.pow((dim - axis - 1) as u32);
    let outer = m.pow(axis as u32);
    let mut out = vec![0.0; data.len()];
    for o in 0..outer {
        for c in 0..m {
            let krow = &kernel[c * m..(c + 1) * m];
            let dst = (o * m + c) * inner;
            for (x, &kv) in krow.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                let src = (o * m + x) * inner;
                for i in 0..inner {
                    out[dst + i] += kv * data[src + i];
                }
            }
        }
    }
    out
}

/// Hit-center density `P(c) = ‖j(c − x_k) ψ‖²` over particle `k`'s sub-grid.
pub fn grw_hit_density(field: &ConfigField, particle: usize, alpha: f64) -> Result<ArrayD<f64>> {
    let lat = &field.lattice;
    lat.check_particle(particle)?;
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
    }
    let dim = lat.particles[particle].spatial_dim;
    let m = lat.grid_points;
    let g = marginal_density(field, particle)?;
    let kernel = squared_kernel(lat, alpha);
    let mut p = g.into_raw_vec_and_offset().0;
    for axis in 0..dim {
        p = convolve_axis(&p, dim, m, axis, &kernel);
    }
    let scale = (alpha / PI).powf(dim as f64 / 2.0) * lat.dx().powi(dim as i32);
    p.iter_mut().for_each(|v| *v *= scale);
    Ok(ArrayD::from_shape_vec(IxDyn(&vec![m; dim]), p).expect("sub-grid shape"))
}

/// Draws a hit center for particle `k` from [`grw_hit_density`] (grid points, inverse CDF).
pub fn sample_grw_center<R: Rng + ?Sized>(
    field: &ConfigField,
    particle: usize,
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let p = grw_hit_density(field, particle, alpha)?;
    let weights = p.as_slice().expect("standard layout");
    let flat = sample_categorical(weights, rng).ok_or_else(|| Error::ZeroSupport("hit density vanishes".into()))?;
    Ok(sub_grid_point(&field.lattice, p.ndim(), flat))
}

pub(crate) fn sub_grid_point(lattice: &LatticeSpec, dim: usize, flat: usize) -> Vec<f64> {
    let m = lattice.grid_points;
    let mut idx = vec![0usize; dim];
    let mut rest = flat;
    for a in (0..dim).rev() {
        idx[a] = rest % m;
        rest /= m;
    }
    idx.into_iter().map(|i| lattice.coordinate(i)).collect()
}

/// Multiplies by `j(center − x_k)` on particle `k`'s axes and renormalizes.
pub fn apply_grw_hit(field: &ConfigField, particle: usize, center: &[f64], alpha: f64) -> Result<ConfigField> {
    let lat = &field.lattice;
    lat.check_particle(particle)?;
    let range = lat.axis_range(particle);
    if center.len() != range.len() {
        return Err(Error::Config(format!(
            "hit center has {} coordinates, particle {particle} has {}",
            center.len(),
            range.len()
        )));
    }
    let coords = lat.coordinates();
    // Per-axis Gaussian tables; the normalization prefactor cancels on renormalizing.
    let tables: Vec<Vec<f64>> = center
        .iter()
        .map(|&c| {
            coords
                .iter()
                .map(|&x| {
                    let d = lat.min_image(x - c);
                    (-0.5 * alpha * d * d).exp()
                })
                .collect()
        })
        .collect();
    let mut out = field.clone();
    let data = out.as_slice_mut();
    for_each_index(&lat.shape(), |flat, idx| {
        let f: f64 = range.clone().zip(&tables).map(|(a, t)| t[idx[a]]).product();
        data[flat] *= f;
    });
    let norm = out.norm();
    if !(norm > 1e-300) {
        return Err(Error::ZeroSupport(format!(
            "post-hit norm {norm:e}: center {center:?} lies where particle {particle} has no amplitude"
        )));
    }
    let inv = 1.0 / norm;
    out.amplitudes.mapv_inplace(|z: Complex64| z * inv);
    Ok(out)
}

/// One complete GRW hit on `particle`: sample the center, apply, and record the event.
pub fn grw_hit<R: Rng + ?Sized>(
    field: &ConfigField,
    particle: usize,
    params: &GrwParams,
    rng: &mut R,
) -> Result<(ConfigField, CollapseEvent)> {
    let v_before = relative_volume(field);
    let center = sample_grw_center(field, particle, params.alpha, rng)?;
    let out = apply_grw_hit(field, particle, &center, params.alpha)?;
    let event = CollapseEvent {
        time: field.time,
        model: EventModel::Grw,
        particle_index: Some(particle),
        center,
        width_param: params.alpha,
        v_before,
        v_after: relative_volume(&out),
        seed: 0,
        wavefunction: None,
    };
    Ok((out, event))
}
