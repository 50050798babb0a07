//! Spectral-density design of porous evaporator wicks.
//!
//! The crate covers the whole loop: building designed spectral densities,
//! reconstructing periodic binary microstructures from them, judging their
//! connectivity, simulating permeability and conductivity, composing the
//! design objectives, fitting latent-map Gaussian-process emulators and
//! searching the emulated objective space with NSGA-II.

pub mod error;
pub mod grid;
pub mod heat;
pub mod lbm;
pub mod morph;
pub mod objectives;
pub mod optimize;
pub mod pipeline;
pub mod recon;
pub mod sdfgen;
pub mod surrogate;

pub use error::{Error, Result};

/// Crate version written into manifests and model files.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
