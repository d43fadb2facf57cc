//! Configuration-space wavefunctions on a periodic lattice with unitary
//! split-step evolution, GRW hits and critical-volume (CCQM) collapse.

pub mod ccqm;
pub mod error;
pub mod event;
pub mod evolution;
pub mod grw;
pub mod lattice;
pub mod registry;
pub mod rng;
pub mod snapshot;
pub mod spectral;
pub mod state;

pub use ccqm::CcqmParams;
pub use error::{Error, Result};
pub use event::{CollapseEvent, EventModel};
pub use evolution::{ExternalPotential, HamiltonianSpec, PairPotential, PairRule, Propagator};
pub use grw::GrwParams;
pub use lattice::{ConfigField, DiscreteField, LatticeSpec, ParticleSpec, Statistics};
pub use registry::{CollapseModel, Registry};
pub use rng::{stream, SimRng};
pub use state::Orbital;
