//! Dual-porosity two-phase flow toolkit.
//!
//! The library covers the full pipeline for immiscible incompressible
//! two-phase flow through a periodically fractured medium:
//!
//! - [`petro`]: constitutive curves, the global-pressure transforms, and the
//!   fracture/matrix capillary coupling maps;
//! - [`homogenize`]: the periodic cell problem on the fracture part of the
//!   unit cell and the effective permeability/porosity it defines;
//! - [`macroscale`]: the upscaled two-phase system in the three contrast
//!   regimes (instantaneous matrix coupling, matrix memory sources, and
//!   perforated/no-coupling behavior);
//! - [`block`]: the matrix-block imbibition problem driving the memory
//!   source term;
//! - [`micro`]: the resolved fine-scale reference problem with saturation
//!   jumps across the fracture/matrix interface, used to validate the
//!   upscaled models against grid sequences;
//! - [`runner`]: scenario configuration, validation, CLI dispatch, and
//!   deterministic output writing.
//!
//! Every capability has a runnable demonstration under `examples/`; the thin
//! `dualporo` binary exposes the same actions on the command line.

pub mod block;
pub mod config;
pub mod error;
pub mod fv;
pub mod homogenize;
pub mod macroscale;
pub mod micro;
pub mod numerics;
pub mod petro;
pub mod report;
pub mod runner;

pub use error::{Error, Result};
