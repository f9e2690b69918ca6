//! Attack detectability, identifiability, and stealthy-attack synthesis for
//! linear cyber-physical systems with multi-rate and delayed sensing.
//!
//! The toolkit lifts a per-step plant with a frame-periodic sensor schedule
//! into a time-invariant frame model, decides via geometric control theory
//! whether a given attack mode can stay stealthy while doing damage,
//! synthesizes certified stealthy attacks when the answer is yes, and —
//! when the answer is no — computes residual thresholds and runs
//! residual-bank mode identification.

pub mod detect;
pub mod error;
pub mod identify;
pub mod io;
pub mod linalg;
pub mod model;
pub mod subspace;
pub mod synth;
pub mod uas;

pub use error::{Error, Result};
