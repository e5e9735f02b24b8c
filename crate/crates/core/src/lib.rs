//! Solitons, Fourier pseudospectral evolution, spectral certification and
//! multi-soliton construction for the good Boussinesq system
//! `∂t u1 = ∂x u2`, `∂t u2 = ∂x(u1 − ∂xx u1 − |u1|^{2p} u1)`.

pub mod builder;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod evolution;
pub mod functionals;
pub mod grid;
pub mod modulation;
pub mod report;
pub mod soliton;
pub mod spectrum;

pub use builder::{BuildConfig, ConstructionRun, ForcingModel, ShootConfig, ShootingReport};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use evolution::{Direction, EvolveConfig, Integrator, Trajectory};
pub use functionals::{CutoffSystem, FunctionalReport};
pub use grid::{h_norm, FieldState, Grid};
pub use modulation::{ModulationDecomposition, ModulationMode};
pub use soliton::{Regime, SolitonFamily, SolitonParams};
pub use spectrum::{OperatorAssembly, PegoWeinsteinModes, SpectrumReport};
