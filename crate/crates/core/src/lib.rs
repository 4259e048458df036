//! Linear transceiver design for the downlink multiuser MIMO broadcast
//! channel: a block-diagonalization baseline with weighted water-filling and a
//! constrained particle swarm that maximizes weighted sum-rate under a total
//! transmit-power budget.
//!
//! The crate is organized bottom-up:
//!
//! - [`numerics`]: small dense complex kernels (SVD, HPD solve, log-det)
//! - [`system`]: scenario configuration and precoder/decoder containers
//! - [`channel`]: Rayleigh channel draws and counter-based random streams
//! - [`link`]: Wiener decoders, per-user rate, weighted sum-rate
//! - [`bd`]: block diagonalization and water-filling
//! - [`pso`]: the projected particle swarm
//! - [`harness`]: convergence and SNR-sweep experiments with CSV output

pub mod bd;
pub mod channel;
pub mod error;
pub mod harness;
pub mod link;
pub mod numerics;
pub mod pso;
pub mod system;

pub use error::{Error, Result};
