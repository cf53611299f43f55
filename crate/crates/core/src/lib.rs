//! Non-local multi-continua upscaling of single-phase flow in 2D fractured media.
//!
//! The pipeline is: build a structured fine mesh with fractures snapped to its
//! edges ([`geometry`]), assemble the discrete-fracture FEM operators
//! ([`fem`]), construct constrained energy-minimizing basis functions on
//! oversampled regions ([`basis`], [`spectral`]), and assemble and solve the
//! non-local coarse system of per-continuum average pressures ([`upscale`]).
//! [`experiments`] drives whole studies from a JSON scene description.

pub mod basis;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod spectral;
pub mod upscale;

pub use error::{NlmcError, Result};
