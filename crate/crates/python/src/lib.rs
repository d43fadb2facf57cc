//! Python bindings: lattices, fields, the two collapse models, merging and the
//! recipe runner. Fields are immutable from Python; every operation returns a new one.

use std::path::PathBuf;

use ccqm_core::ccqm::apply_ccqm_collapse;
use ccqm_core::evolution::evolve_until;
use ccqm_core::lattice::{marginal_density, relative_volume};
use ccqm_core::state::{exchange_residual, product_state, symmetrize, Orbital};
use ccqm_core::{
    stream, CcqmParams, CollapseEvent, ConfigField, ExternalPotential, GrwParams, HamiltonianSpec, LatticeSpec,
    ParticleSpec, Statistics,
};
use ccqm_harness::config::Recipe;
use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn core_err(e: ccqm_core::Error) -> PyErr {
    match e {
        ccqm_core::Error::Config(_) | ccqm_core::Error::ParticleIndex { .. } => PyValueError::new_err(e.to_string()),
        e if e.is_numeric() => PyArithmeticError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn statistics(name: &str) -> PyResult<Statistics> {
    match name {
        "boson" => Ok(Statistics::Boson),
        "fermion" => Ok(Statistics::Fermion),
        "distinguishable" => Ok(Statistics::Distinguishable),
        other => Err(PyValueError::new_err(format!("statistics must be boson, fermion or distinguishable, not {other:?}"))),
    }
}

fn event_dict(py: Python<'_>, event: &CollapseEvent) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (event.to_json_line(),))?.unbind())
}

/// Configuration-space grid shared by every particle of a wavefunction.
#[pyclass(name = "Lattice", module = "ccqm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyLattice {
    inner: LatticeSpec,
}

#[pymethods]
impl PyLattice {
    /// `particles` holds `(species, statistics, mass)` triples.
    #[new]
    #[pyo3(signature = (particles, grid_points, domain_length, cell_points, base_magnitude, base_phase = std::f64::consts::PI / 8.0, spatial_dim = 1))]
    fn new(
        particles: Vec<(String, String, f64)>,
        grid_points: usize,
        domain_length: f64,
        cell_points: usize,
        base_magnitude: f64,
        base_phase: f64,
        spatial_dim: usize,
    ) -> PyResult<Self> {
        let specs = particles
            .into_iter()
            .map(|(species, stats, mass)| ParticleSpec::new(species, statistics(&stats)?, mass, spatial_dim).map_err(core_err))
            .collect::<PyResult<Vec<_>>>()?;
        let cell = cell_points as f64 * domain_length / grid_points as f64;
        let n = specs.len();
        let inner =
            LatticeSpec::new(specs, grid_points, domain_length, vec![cell; n], base_magnitude, base_phase).map_err(core_err)?;
        Ok(PyLattice { inner })
    }

    #[getter]
    fn n_particles(&self) -> usize {
        self.inner.n_particles()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.inner.dx()
    }

    #[getter]
    fn base_magnitude(&self) -> f64 {
        self.inner.base_magnitude
    }

    fn coordinates(&self) -> Vec<f64> {
        self.inner.coordinates()
    }

    fn __repr__(&self) -> String {
        format!(
            "Lattice(n_particles={}, grid_points={}, domain_length={}, base_magnitude={})",
            self.inner.n_particles(),
            self.inner.grid_points,
            self.inner.domain_length,
            self.inner.base_magnitude
        )
    }
}

/// A normalized N-particle wavefunction on a [`PyLattice`].
#[pyclass(name = "Field", module = "ccqm", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyField {
    inner: ConfigField,
}

#[pymethods]
impl PyField {
    /// Product of one Gaussian per particle; `centers[k]` has one entry per spatial axis.
    #[staticmethod]
    #[pyo3(signature = (lattice, centers, widths, momenta = None))]
    fn gaussian(lattice: &PyLattice, centers: Vec<Vec<f64>>, widths: Vec<f64>, momenta: Option<Vec<Vec<f64>>>) -> PyResult<Self> {
        let lat = &lattice.inner;
        if centers.len() != lat.n_particles() || widths.len() != lat.n_particles() {
            return Err(PyValueError::new_err("need one center and one width per particle"));
        }
        let momenta = momenta.unwrap_or_else(|| vec![Vec::new(); centers.len()]);
        let orbitals: Vec<Orbital> =
            centers.iter().zip(&widths).zip(&momenta).map(|((c, &w), p)| Orbital::gaussian(lat, c, w, p)).collect();
        let inner = product_state(lat, &orbitals).map_err(core_err)?;
        Ok(PyField { inner })
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    #[getter]
    fn lattice(&self) -> PyLattice {
        PyLattice { inner: self.inner.lattice.clone() }
    }

    fn norm(&self) -> f64 {
        self.inner.norm()
    }

    /// Number of occupied configuration-space cells.
    fn relative_volume(&self) -> usize {
        relative_volume(&self.inner)
    }

    /// Position density of particle `k`, flattened in row-major order.
    fn marginal(&self, k: usize) -> PyResult<Vec<f64>> {
        Ok(marginal_density(&self.inner, k).map_err(core_err)?.iter().copied().collect())
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.as_slice().to_vec()
    }

    /// Free (or harmonic, with `stiffness`) evolution to `t_target` in steps of `dt`.
    #[pyo3(signature = (t_target, dt, stiffness = None, h_sim = None))]
    fn evolve(&self, py: Python<'_>, t_target: f64, dt: f64, stiffness: Option<f64>, h_sim: Option<f64>) -> PyResult<Self> {
        let mut h = HamiltonianSpec::free();
        if let Some(k) = stiffness {
            h.external = ExternalPotential::Harmonic { stiffness: k, center: Vec::new() };
        }
        if let Some(hs) = h_sim {
            h.h_sim = hs;
        }
        let inner = py.detach(|| evolve_until(&self.inner, &h, t_target, dt)).map_err(core_err)?;
        Ok(PyField { inner })
    }

    /// Projection onto the exchange symmetry of identical particles, renormalized.
    fn symmetrized(&self) -> PyResult<Self> {
        Ok(PyField { inner: symmetrize(&self.inner).map_err(core_err)? })
    }

    fn exchange_residual(&self, i: usize, j: usize) -> PyResult<f64> {
        exchange_residual(&self.inner, i, j).map_err(core_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Field(n_particles={}, time={}, relative_volume={})",
            self.inner.lattice.n_particles(),
            self.inner.time,
            relative_volume(&self.inner)
        )
    }
}

/// One GRW hit on `particle`; returns the post-hit field and the event as a dict.
#[pyfunction]
#[pyo3(signature = (field, particle, alpha, seed, stream_index = 0))]
fn grw_hit(py: Python<'_>, field: &PyField, particle: usize, alpha: f64, seed: u64, stream_index: u64) -> PyResult<(PyField, Py<PyAny>)> {
    let params = GrwParams::new(1.0, alpha).map_err(core_err)?;
    let mut rng = stream(seed, stream_index);
    let (inner, mut event) = ccqm_core::grw::grw_hit(&field.inner, particle, &params, &mut rng).map_err(core_err)?;
    event.seed = seed;
    Ok((PyField { inner }, event_dict(py, &event)?))
}

/// One critical-volume jump; the field must already hold at least `v_critical` cells.
#[pyfunction]
#[pyo3(signature = (field, v_critical, fraction_f, seed, stream_index = 0, provisional_epsilon = None))]
fn ccqm_collapse(
    py: Python<'_>,
    field: &PyField,
    v_critical: usize,
    fraction_f: f64,
    seed: u64,
    stream_index: u64,
    provisional_epsilon: Option<f64>,
) -> PyResult<(PyField, Py<PyAny>)> {
    let params = CcqmParams::new(v_critical, fraction_f, 1.0).map_err(core_err)?;
    let mut rng = stream(seed, stream_index);
    let out = py
        .detach(|| apply_ccqm_collapse(&field.inner, &params, provisional_epsilon, &mut rng))
        .map_err(core_err)?;
    let mut event = out.event;
    event.seed = seed;
    Ok((PyField { inner: out.field }, event_dict(py, &event)?))
}

/// Joint wavefunction of two fields, symmetrized over identical particles.
#[pyfunction]
fn merge(a: &PyField, b: &PyField) -> PyResult<PyField> {
    Ok(PyField { inner: ccqm_core::registry::merge(&a.inner, &b.inner).map_err(core_err)? })
}

/// Mean waiting time `1/(Nλ)` between hits of `n_particles` at rate `lambda_rate`.
#[pyfunction]
fn mean_wait(n_particles: f64, lambda_rate: f64) -> f64 {
    ccqm_core::grw::mean_wait(n_particles, lambda_rate)
}

fn recipe(name: &str) -> PyResult<Recipe> {
    Recipe::ALL.iter().copied().find(|r| r.name() == name).ok_or_else(|| {
        let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.name()).collect();
        PyValueError::new_err(format!("unknown recipe {name:?}; expected one of {}", names.join(", ")))
    })
}

/// Runs a built-in recipe into `out` and returns its summary as a dict.
#[pyfunction]
#[pyo3(signature = (name, out, seed = None, trajectories = None))]
fn run_recipe(py: Python<'_>, name: &str, out: PathBuf, seed: Option<u64>, trajectories: Option<usize>) -> PyResult<Py<PyAny>> {
    let mut cfg = ccqm_harness::presets::preset(recipe(name)?);
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = trajectories {
        cfg.trajectories = t;
    }
    cfg.validate().map_err(|e| PyValueError::new_err(e.to_string()))?;
    let summary = py.detach(|| ccqm_harness::run(&cfg, &out)).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    let text = serde_json::to_string(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Names of the built-in recipes.
#[pyfunction]
fn recipes() -> Vec<&'static str> {
    Recipe::ALL.iter().map(|r| r.name()).collect()
}

#[pymodule]
fn ccqm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PyField>()?;
    m.add_function(wrap_pyfunction!(grw_hit, m)?)?;
    m.add_function(wrap_pyfunction!(ccqm_collapse, m)?)?;
    m.add_function(wrap_pyfunction!(merge, m)?)?;
    m.add_function(wrap_pyfunction!(mean_wait, m)?)?;
    m.add_function(wrap_pyfunction!(run_recipe, m)?)?;
    m.add_function(wrap_pyfunction!(recipes, m)?)?;
    m.add("GRW_LAMBDA_PER_SECOND", ccqm_core::grw::GRW_LAMBDA_PER_SECOND)?;
    Ok(())
}
