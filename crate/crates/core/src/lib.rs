//! Transmission-line-matrix propagators.
//!
//! Cells are described by scattering blocks `K, L, M, N` acting on incident
//! link waves and an internal stub state. Cells are joined into a [`mesh::Mesh`]
//! and marched in time ([`solvers::run_time_domain`]) or solved at a single
//! frequency ([`solvers::run_freq_domain`]). [`deflection`] adds a model
//! equation on top of a base propagator, which is how [`maxwell`] cells and the
//! particle coupling in [`plasma`] are built.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod deflection;
pub mod error;
pub mod linalg;
pub mod maxwell;
pub mod mesh;
pub mod output;
pub mod plasma;
pub mod scattering;
pub mod solvers;

pub use config::{parse_config, SimulationConfig};
pub use deflection::{DeflectedSystem, ModelForm, Perturbation};
pub use error::{Result, TlmError};
pub use maxwell::{HexGeometry, Materials, MaxwellCell};
pub use mesh::{Excitation, Mesh, Signal};
pub use plasma::{CoupledCell, ParticleParams, ParticleState};
pub use scattering::{LinkSplit, ProjectionFamily, SBlocks};
pub use solvers::{run_freq_domain, run_time_domain, FreqRunConfig, TimeRunConfig};
