//! Desk-scale simulation of source-channel separation for networks of
//! independent point-to-point channels.
//!
//! The crate is split bottom-up:
//!
//! - [`info`]: distributions, types, entropies, typicality
//! - [`channels`]: DMCs, Gaussian links, quantizers, seeded streams
//! - [`coding_theorems`]: Blahut-Arimoto capacity and rate-distortion
//! - [`codecs`]: random channel codes, emulation codes, binning codes
//! - [`netsim`]: networks, the execution engine, stacking and unraveling
//! - [`experiments`]: end-to-end pipelines, manifests and the CLI

pub mod channels;
pub mod codecs;
pub mod coding_theorems;
mod error;
pub mod experiments;
pub mod info;
pub mod netsim;

pub use error::{Error, Result};
