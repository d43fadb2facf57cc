//! Run configuration: a versioned TOML document with unknown keys rejected.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use ccqm_core::state::{product_state, symmetrize, Orbital};
use ccqm_core::{CcqmParams, ConfigField, GrwParams, HamiltonianSpec, LatticeSpec, ParticleSpec, Statistics};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Generic registry run of the configured model.
    Evolve,
    FreeSpreadCcqm,
    ExpGrowth,
    GrwRates,
    SymmetryCompare,
    DoubleSlit,
    MergeThenCollapse,
    StatisticsPreservation,
    Sweep,
}

impl Recipe {
    pub fn name(self) -> &'static str {
        match self {
            Recipe::Evolve => "evolve",
            Recipe::FreeSpreadCcqm => "free-spread-ccqm",
            Recipe::ExpGrowth => "exp-growth",
            Recipe::GrwRates => "grw-rates",
            Recipe::SymmetryCompare => "symmetry-compare",
            Recipe::DoubleSlit => "double-slit",
            Recipe::MergeThenCollapse => "merge-then-collapse",
            Recipe::StatisticsPreservation => "statistics-preservation",
            Recipe::Sweep => "sweep",
        }
    }

    pub const ALL: [Recipe; 9] = [
        Recipe::Evolve,
        Recipe::FreeSpreadCcqm,
        Recipe::ExpGrowth,
        Recipe::GrwRates,
        Recipe::SymmetryCompare,
        Recipe::DoubleSlit,
        Recipe::MergeThenCollapse,
        Recipe::StatisticsPreservation,
        Recipe::Sweep,
    ];
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Unitary,
    Grw,
    Ccqm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Scaled constants chosen so events happen within desk-scale horizons.
    #[default]
    Desk,
    /// Published GRW constants in seconds and centimetres; event-free at desk horizons.
    PaperScale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub grid_points: usize,
    pub domain_length: f64,
    /// Grid points per reference cell side, unless a particle overrides it.
    pub cell_points: usize,
    /// Absolute `f_0`. Exactly one of this and `base_magnitude_relative` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_magnitude: Option<f64>,
    /// `f_0` as a fraction of the peak `|ψ|` of the full initial product state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_magnitude_relative: Option<f64>,
    #[serde(default = "default_base_phase")]
    pub base_phase: f64,
}

fn default_base_phase() -> f64 {
    PI / 8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Gaussian {
        center: Vec<f64>,
        width: f64,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        momentum: Vec<f64>,
    },
    /// Equal-weight superposition of Gaussians at `±separation/2` on the first axis.
    TwoSource { separation: f64, width: f64 },
    /// Flat magnitude over `count` whole cells per axis starting at cell `first`.
    FlatCells { first: Vec<usize>, count: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleConfig {
    pub species: String,
    #[serde(default = "default_statistics")]
    pub statistics: Statistics,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "one_usize")]
    pub spatial_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cell_points: Option<usize>,
    /// Particles sharing an index start in one joint wavefunction.
    #[serde(default)]
    pub wavefunction: usize,
    pub initial: InitialState,
}

fn default_statistics() -> Statistics {
    Statistics::Distinguishable
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_events")]
    pub events: String,
    #[serde(default = "default_timeseries")]
    pub timeseries: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    /// Ticks between time-series rows.
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    /// Write a registry checkpoint per trajectory for `replay`.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn default_events() -> String {
    "events.jsonl".into()
}

fn default_timeseries() -> String {
    "timeseries.csv".into()
}

fn default_summary() -> String {
    "summary.json".into()
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            events: default_events(),
            timeseries: default_timeseries(),
            summary: default_summary(),
            sample_every: 1,
            checkpoint: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Recipe run at every point.
    #[serde(default = "default_sweep_base")]
    pub base: Recipe,
    pub v_critical: Vec<usize>,
    pub fraction_f: Vec<f64>,
    /// Replaces whichever `f_0` form the lattice table uses.
    pub base_magnitude: Vec<f64>,
}

fn default_sweep_base() -> Recipe {
    Recipe::FreeSpreadCcqm
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoubleSlitConfig {
    /// Strictly decreasing critical volumes.
    pub v_critical: Vec<usize>,
    /// Half-width of the visibility window around the screen center; one fringe
    /// spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_min_visibility")]
    pub min_visibility: f64,
}

fn default_min_visibility() -> f64 {
    0.9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatisticsConfig {
    /// Bins of equal pre-collapse probability, at grid-point resolution.
    #[serde(default = "default_bins")]
    pub bins: usize,
    /// Per-bin tolerance in Monte-Carlo standard errors.
    #[serde(default = "default_band")]
    pub band: f64,
}

fn default_bins() -> usize {
    32
}

fn default_band() -> f64 {
    3.0
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        StatisticsConfig { bins: default_bins(), band: default_band() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub recipe: Recipe,
    #[serde(default)]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one_usize")]
    pub trajectories: usize,
    #[serde(default)]
    pub model: ModelKind,
    pub dt: f64,
    pub t_end: f64,
    /// Stop a trajectory once this many events are logged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_events: Option<usize>,
    /// End a trajectory at its last state whose boundary band holds at most
    /// the boundary tolerance, before wrap-around contaminates it.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub stop_at_boundary: bool,
    #[serde(default)]
    pub merge_coefficient: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_joint_points: Option<usize>,
    pub lattice: LatticeConfig,
    pub particles: Vec<ParticleConfig>,
    #[serde(default = "HamiltonianSpec::free")]
    pub hamiltonian: HamiltonianSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grw: Option<GrwParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ccqm: Option<CcqmParams>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub double_slit: Option<DoubleSlitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistics: Option<StatisticsConfig>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

/// Every problem found in a config, reported together.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub diagnostics: Vec<Diagnostic>,
}

impl ConfigError {
    fn single(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError { diagnostics: vec![Diagnostic { field: field.into(), message: message.into() }] }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.diagnostics.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", d.field, d.message)?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigError {}

struct Collector(Vec<Diagnostic>);

impl Collector {
    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.0.push(Diagnostic { field: field.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, field: &str, message: impl FnOnce() -> String) {
        if !ok {
            self.push(field, message());
        }
    }
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::single("config", e.to_string().trim_end()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::single("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|mut e| {
            for d in &mut e.diagnostics {
                d.field = format!("{}: {}", path.display(), d.field);
            }
            e
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut c = Collector(Vec::new());
        c.check(self.schema_version == SCHEMA_VERSION, "schema_version", || {
            format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.schema_version)
        });
        c.check(self.trajectories >= 1, "trajectories", || "must be at least 1".into());
        c.check(positive(self.dt), "dt", || format!("must be positive, got {}", self.dt));
        c.check(self.t_end >= 0.0 && self.t_end.is_finite(), "t_end", || {
            format!("must be non-negative, got {}", self.t_end)
        });
        c.check(self.merge_coefficient >= 0.0 && self.merge_coefficient.is_finite(), "merge_coefficient", || {
            format!("must be non-negative, got {}", self.merge_coefficient)
        });
        c.check(self.output.sample_every >= 1, "output.sample_every", || "must be at least 1".into());

        let lat = &self.lattice;
        c.check(
            lat.grid_points >= 2 && lat.grid_points.is_power_of_two(),
            "lattice.grid_points",
            || format!("must be a power of two >= 2, got {}", lat.grid_points),
        );
        c.check(positive(lat.domain_length), "lattice.domain_length", || {
            format!("must be positive, got {}", lat.domain_length)
        });
        match (lat.base_magnitude, lat.base_magnitude_relative) {
            (Some(f0), None) => c.check(positive(f0), "lattice.base_magnitude", || format!("must be positive, got {f0}")),
            (None, Some(r)) => c.check(positive(r), "lattice.base_magnitude_relative", || format!("must be positive, got {r}")),
            _ => c.push("lattice", "set exactly one of base_magnitude and base_magnitude_relative"),
        }
        c.check(positive(lat.base_phase) && lat.base_phase <= 2.0 * PI, "lattice.base_phase", || {
            format!("must lie in (0, 2π], got {}", lat.base_phase)
        });

        if self.particles.is_empty() {
            c.push("particles", "at least one particle is required");
        }
        for (k, p) in self.particles.iter().enumerate() {
            let field = |name: &str| format!("particles[{k}].{name}");
            c.check(positive(p.mass), &field("mass"), || format!("must be positive, got {}", p.mass));
            c.check(p.spatial_dim >= 1, &field("spatial_dim"), || "must be at least 1".into());
            let cp = p.cell_points.unwrap_or(lat.cell_points);
            c.check(cp >= 1 && lat.grid_points % cp.max(1) == 0, &field("cell_points"), || {
                format!("{cp} grid points per cell does not tile {} points", lat.grid_points)
            });
            match &p.initial {
                InitialState::Gaussian { center, width, momentum } => {
                    c.check(center.len() == p.spatial_dim, &field("initial.center"), || {
                        format!("has {} entries for a {}-dimensional particle", center.len(), p.spatial_dim)
                    });
                    c.check(momentum.is_empty() || momentum.len() == p.spatial_dim, &field("initial.momentum"), || {
                        format!("has {} entries for a {}-dimensional particle", momentum.len(), p.spatial_dim)
                    });
                    c.check(positive(*width), &field("initial.width"), || format!("must be positive, got {width}"));
                }
                InitialState::TwoSource { separation, width } => {
                    c.check(positive(*separation), &field("initial.separation"), || {
                        format!("must be positive, got {separation}")
                    });
                    c.check(positive(*width), &field("initial.width"), || format!("must be positive, got {width}"));
                }
                InitialState::FlatCells { first, count } => {
                    let cells = lat.grid_points / cp.max(1);
                    c.check(first.len() == p.spatial_dim && count.len() == p.spatial_dim, &field("initial"), || {
                        "first and count need one entry per spatial dimension".into()
                    });
                    c.check(
                        first.iter().zip(count).all(|(&f, &n)| n >= 1 && f + n <= cells),
                        &field("initial"),
                        || format!("cell block must be non-empty and fit in {cells} cells per axis"),
                    );
                }
            }
        }
        let groups: BTreeSet<usize> = self.particles.iter().map(|p| p.wavefunction).collect();
        c.check(groups.iter().copied().eq(0..groups.len()), "particles.wavefunction", || {
            "wavefunction indices must be contiguous from 0".into()
        });

        match self.model {
            ModelKind::Grw => c.check(self.grw.is_some(), "grw", || "model = \"grw\" needs a [grw] table".into()),
            ModelKind::Ccqm => c.check(self.ccqm.is_some(), "ccqm", || "model = \"ccqm\" needs a [ccqm] table".into()),
            ModelKind::Unitary => {}
        }
        if let Some(g) = &self.grw {
            if let Err(e) = g.validate() {
                c.push("grw", e.to_string());
            }
        }
        if let Some(p) = &self.ccqm {
            if let Err(e) = p.validate() {
                c.push("ccqm", e.to_string());
            }
        }

        match self.recipe {
            Recipe::GrwRates => c.check(self.grw.is_some(), "grw", || "recipe grw-rates needs a [grw] table".into()),
            Recipe::FreeSpreadCcqm | Recipe::MergeThenCollapse => {
                c.check(self.model == ModelKind::Ccqm, "model", || format!("recipe {} needs model = \"ccqm\"", self.recipe.name()))
            }
            Recipe::SymmetryCompare => {
                c.check(self.grw.is_some() && self.ccqm.is_some(), "recipe", || {
                    "symmetry-compare needs [grw] and [ccqm] tables".into()
                });
                let ok = self.particles.len() == 2
                    && self.particles.iter().all(|p| p.wavefunction == 0 && p.statistics != Statistics::Distinguishable)
                    && self.particles[0].species == self.particles[1].species
                    && self.particles[0].statistics == self.particles[1].statistics;
                c.check(ok, "particles", || "symmetry-compare needs two identical particles in one wavefunction".into());
            }
            Recipe::StatisticsPreservation => {
                c.check(self.grw.is_some() && self.ccqm.is_some(), "recipe", || {
                    "statistics-preservation needs [grw] and [ccqm] tables".into()
                });
                c.check(self.particles.len() == 1 && self.particles[0].spatial_dim == 1, "particles", || {
                    "statistics-preservation uses a single one-dimensional particle".into()
                });
                if let Some(s) = &self.statistics {
                    c.check(s.bins >= 2 && 2 * s.bins <= self.lattice.grid_points, "statistics.bins", || {
                        format!("{} bins need at least {} grid points", s.bins, 2 * s.bins)
                    });
                    c.check(positive(s.band), "statistics.band", || "must be positive".into());
                }
            }
            Recipe::DoubleSlit => {
                c.check(self.ccqm.is_some(), "ccqm", || "double-slit needs a [ccqm] table".into());
                c.check(
                    self.particles.len() == 1
                        && self.particles[0].spatial_dim == 1
                        && matches!(self.particles[0].initial, InitialState::TwoSource { .. }),
                    "particles",
                    || "double-slit uses one one-dimensional particle with a two_source initial state".into(),
                );
                match &self.double_slit {
                    None => c.push("double_slit", "recipe double-slit needs a [double_slit] table"),
                    Some(d) => {
                        c.check(
                            d.v_critical.len() >= 2 && d.v_critical.windows(2).all(|w| w[0] > w[1]),
                            "double_slit.v_critical",
                            || "needs at least two strictly decreasing values".into(),
                        );
                        c.check(d.v_critical.iter().all(|&v| v >= 2), "double_slit.v_critical", || {
                            "values must be at least 2".into()
                        });
                        if let Some(w) = d.window {
                            c.check(positive(w), "double_slit.window", || format!("must be positive, got {w}"));
                        }
                    }
                }
            }
            Recipe::ExpGrowth => c.check(
                self.particles.iter().all(|p| matches!(p.initial, InitialState::FlatCells { .. })),
                "particles",
                || "exp-growth needs flat_cells initial states".into(),
            ),
            Recipe::Sweep => match &self.sweep {
                None => c.push("sweep", "recipe sweep needs a [sweep] table"),
                Some(s) => {
                    c.check(s.base != Recipe::Sweep, "sweep.base", || "a sweep cannot nest another sweep".into());
                    c.check(
                        !s.v_critical.is_empty() && !s.fraction_f.is_empty() && !s.base_magnitude.is_empty(),
                        "sweep",
                        || "every sweep axis needs at least one value".into(),
                    );
                    c.check(self.ccqm.is_some(), "ccqm", || "sweeps vary [ccqm] constants and need the table".into());
                    c.check(s.base_magnitude.iter().all(|&f| positive(f)), "sweep.base_magnitude", || {
                        "values must be positive".into()
                    });
                }
            },
            Recipe::Evolve => {}
        }

        if c.0.is_empty() {
            match self.initial_fields() {
                Ok(fields) => {
                    for f in &fields {
                        if let Err(e) = self.hamiltonian.validate(&f.lattice) {
                            c.push("hamiltonian", e.to_string());
                            break;
                        }
                    }
                }
                Err(e) => c.push("particles", e.to_string()),
            }
        }
        if c.0.is_empty() {
            Ok(())
        } else {
            Err(ConfigError { diagnostics: c.0 })
        }
    }

    pub fn particle_spec(&self, k: usize) -> ccqm_core::Result<ParticleSpec> {
        let p = &self.particles[k];
        ParticleSpec::new(p.species.clone(), p.statistics, p.mass, p.spatial_dim)
    }

    fn lattice_for(&self, members: &[usize], f0: f64) -> ccqm_core::Result<LatticeSpec> {
        let dx = self.lattice.domain_length / self.lattice.grid_points as f64;
        let particles = members.iter().map(|&k| self.particle_spec(k)).collect::<ccqm_core::Result<Vec<_>>>()?;
        let cells = members
            .iter()
            .map(|&k| self.particles[k].cell_points.unwrap_or(self.lattice.cell_points) as f64 * dx)
            .collect();
        LatticeSpec::new(particles, self.lattice.grid_points, self.lattice.domain_length, cells, f0, self.lattice.base_phase)
    }

    fn orbital(&self, lat: &LatticeSpec, slot: usize, k: usize) -> Orbital {
        match &self.particles[k].initial {
            InitialState::Gaussian { center, width, momentum } => Orbital::gaussian(lat, center, *width, momentum),
            InitialState::TwoSource { separation, width } => {
                let dim = self.particles[k].spatial_dim;
                let mut left = vec![0.0; dim];
                let mut right = vec![0.0; dim];
                left[0] = -0.5 * separation;
                right[0] = 0.5 * separation;
                let a = Orbital::gaussian(lat, &left, *width, &[]);
                let b = Orbital::gaussian(lat, &right, *width, &[]);
                let one = Complex64::new(1.0, 0.0);
                Orbital::superpose(lat, &[(one, &a), (one, &b)])
            }
            InitialState::FlatCells { first, count } => Orbital::flat_cells(lat, slot, first, count),
        }
    }

    /// Initial wavefunctions in `wavefunction` order, (anti)symmetrized and normalized.
    pub fn initial_fields(&self) -> ccqm_core::Result<Vec<ConfigField>> {
        let n_groups = self.particles.iter().map(|p| p.wavefunction + 1).max().unwrap_or(0);
        let provisional = self.lattice.base_magnitude.unwrap_or(1.0);
        let mut fields = Vec::with_capacity(n_groups);
        for g in 0..n_groups {
            let members: Vec<usize> = (0..self.particles.len()).filter(|&k| self.particles[k].wavefunction == g).collect();
            let lat = self.lattice_for(&members, provisional)?;
            let orbitals: Vec<Orbital> = members.iter().enumerate().map(|(slot, &k)| self.orbital(&lat, slot, k)).collect();
            let mut f = product_state(&lat, &orbitals)?;
            if !lat.exchange_groups().is_empty() {
                f = symmetrize(&f)?;
            }
            fields.push(f.normalized()?);
        }
        if let Some(r) = self.lattice.base_magnitude_relative {
            let peak: f64 = fields
                .iter()
                .map(|f| f.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max))
                .product();
            for f in &mut fields {
                f.lattice.base_magnitude = r * peak;
            }
        }
        Ok(fields)
    }

    /// `f_0` of the initial state after resolving the relative form.
    pub fn resolved_base_magnitude(&self) -> ccqm_core::Result<f64> {
        Ok(self.initial_fields()?[0].lattice.base_magnitude)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::preset;

    #[test]
    fn presets_validate_and_round_trip() {
        for r in Recipe::ALL {
            let cfg = preset(r);
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", r.name()));
            let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = preset(Recipe::Evolve).to_toml();
        text.push_str("\n[ccqm_extra]\nx = 1\n");
        let err = RunConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("ccqm_extra"), "{err}");
    }

    #[test]
    fn diagnostics_name_fields() {
        let mut cfg = preset(Recipe::FreeSpreadCcqm);
        cfg.dt = -1.0;
        cfg.lattice.grid_points = 100;
        let err = cfg.validate().unwrap_err();
        let fields: Vec<&str> = err.diagnostics.iter().map(|d| d.field.as_str()).collect();
        assert!(fields.contains(&"dt"), "{fields:?}");
        assert!(fields.contains(&"lattice.grid_points"), "{fields:?}");
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = RunConfig::from_toml_str("schema_version = 1\nrecipe = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn relative_base_magnitude_scales_with_peak() {
        let cfg = preset(Recipe::FreeSpreadCcqm);
        let f = &cfg.initial_fields().unwrap()[0];
        let peak = f.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
        let r = cfg.lattice.base_magnitude_relative.unwrap();
        assert!((f.lattice.base_magnitude - r * peak).abs() < 1e-15);
    }

    #[test]
    fn identical_particles_start_antisymmetric() {
        let cfg = preset(Recipe::SymmetryCompare);
        let f = &cfg.initial_fields().unwrap()[0];
        assert!(ccqm_core::state::exchange_residual(f, 0, 1).unwrap() < 1e-12);
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }
}
