//! Behavioral security simulator for spin-based computing-in-memory.
//!
//! The crate models an STT-MRAM array whose sense amplifiers evaluate
//! Boolean functions of two activated rows, together with the tooling to
//! study it as a security target: per-operation cost traces, a small ISA
//! with in-memory instructions, thermal fault injection, side-channel
//! classification and adaptive sense references.

pub mod array;
pub mod attack;
pub mod config;
pub mod cost;
pub mod device;
pub mod error;
pub mod experiments;
pub mod isa;
pub mod mitigation;
pub mod sca;
pub mod stats;

pub use error::{Error, Result};
