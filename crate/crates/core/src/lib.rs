//! Hand-blockage beamforming simulation for small millimeter-wave arrays.
//!
//! The crate models per-antenna complex far-field maps over a spherical grid,
//! distorts them with parameterized hand-blockage fields, and evaluates four
//! beamforming schemes against each other:
//!
//! - the maximum ratio combining (MRC) oracle,
//! - a static directional steering codebook,
//! - a phase-only enhanced codebook (all quantized relative-phase combinations),
//! - a phase + amplitude enhanced codebook driven by single-element training.
//!
//! Blockage metrics (regions of interest, loss distributions, coverage tables,
//! phase mixing) live in [`metrics`]; the single-cluster SNR model and the
//! lower bound on the amplitude-control improvement live in [`link`].
//! [`experiment`] wires everything into a seeded, deterministic pipeline.

pub mod codebook;
pub mod distortion;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod io;
pub mod link;
pub mod metrics;
pub mod units;

pub use error::{Error, Result};
pub use num_complex::Complex64;
