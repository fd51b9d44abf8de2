//! Desk-scale electromagnetic-transients engine for energization studies of
//! transformers connected to cables and overhead lines.
//!
//! - [`circuit`]: netlist of nodes, elements and probes
//! - [`solver`]: fixed-step trapezoidal solver with Bergeron lines
//! - [`transformer`]: nameplate data to per-phase transient model
//! - [`analysis`]: peak/p.u. metrics, dominant frequency, closed-form references
//! - [`scenarios`]: scenario documents and the cable-fed / line-connected builders

pub mod analysis;
pub mod circuit;
pub mod error;
pub mod scenarios;
pub mod solver;
pub mod transformer;

pub use circuit::{Circuit, Element, ElementId, NodeRef, ProbeTarget};
pub use error::{Error, Result};
pub use solver::{run, WaveformSet};
