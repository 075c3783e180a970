//! Numerical laboratory for a semiclassical coupled Klein–Gordon system whose
//! leading WKB solutions are destabilized by third-harmonic resonances.
//!
//! Modules follow the pipeline: [`model`] (dispersion, phase, projectors),
//! [`interaction`] (resonances, transparency, growth indices), [`wkb`]
//! (profiles and transport), [`symflow`] (the localized symbolic flow),
//! [`solver`] (the stiff pseudospectral integrator) and [`harness`]
//! (instability experiments).

pub mod config;
pub mod error;
pub mod grid;
pub mod harness;
pub mod interaction;
pub mod linalg;
pub mod model;
pub mod report;
pub mod solver;
pub mod symflow;
pub mod wkb;

pub use error::{Error, Result};
pub use model::{Branch, Family, ModeSpec, Model, ModelParams, Phase, Projector};
