//! Simulation and filtering for a regime-switching, fast mean-reverting
//! Ornstein-Uhlenbeck hidden Markov model.
//!
//! A finite-state chain Θ switches the level that X relaxes to on time scale
//! ε, and the observations integrate h(X) plus Brownian noise. The crate
//! provides an exact fine-grid simulator, the bootstrap and Rao-Blackwellized
//! particle filters, the averaged filters that only use Q̄ and h̄, a grid
//! oracle for small instances, and the sweep experiments that compare them.

pub mod error;
pub mod experiments;
pub mod filters;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod svol;

pub use error::{Error, Result};
pub use filters::{
    run_filter, AveragedMatrixFilter, AveragedParticleFilter, GridConfig, ParticleConfig,
    ParticleFilter, Posterior, RbFilter, RegimeFilter,
};
pub use linalg::{chain_transition_matrix, Matrix};
pub use model::{
    AveragedModel, InitialLaw, IntensityMatrix, ModelParams, ObservationFunction, StateSpace,
};
pub use rng::RngStream;
pub use simulator::{HiddenPath, ObservationSeries};
pub use svol::SvolParams;
