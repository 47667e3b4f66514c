//! Affine frequency division multiplexing (AFDM) with security-oriented
//! chirp phase functions.
//!
//! The crate covers the whole link: Gray-labelled QAM mapping, the chirp
//! phase law and its derivatives, the IDAFT/DAFT modem with chirp-periodic
//! prefix, a doubly dispersive channel, MMSE reception, and the tooling used
//! to study an eavesdropper who brute-forces the secret chirp parameter.
//!
//! Monte Carlo campaigns live in [`experiments`]; [`config`] loads the TOML
//! experiment files consumed by the `afdm` command-line tool.

pub mod channel;
pub mod config;
pub mod constellation;
pub mod error;
pub mod experiments;
pub mod modem;
pub mod phasefn;
pub mod receiver;
pub mod campaign;
pub mod rng;
pub mod security;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
