//! Distributed principal subspace analysis (PSA) over server-less networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense kernels (Householder QR, Cholesky, Jacobi eigensolver,
//!   subspace distances).
//! * [`datagen`]: synthetic spectra, Gaussian sampling, partitioning and
//!   CSV/binary ingestion.
//! * [`netgraph`]: topologies, Metropolis weights, SLEM and mixing time.
//! * [`consensus`]: bulk-synchronous matrix averaging with scaled-sum recovery.
//! * [`algorithms`]: centralized OI, S-DOT, SA-DOT, F-DOT, sequential power
//!   methods and the drift diagnostics.
//! * [`simharness`]: message accounting, simulated clock, stragglers and the
//!   TCP transport.
//! * [`config`] and [`acceptance`]: experiment configuration and the built-in
//!   acceptance suite run by `dpsa verify`.
//!
//! Per-node work inside a round is data parallel. With the default `parallel`
//! feature it runs on rayon; without it every [`Execution`] falls back to a
//! sequential loop. Both paths produce bit-identical results.

pub mod acceptance;
pub mod algorithms;
pub mod config;
pub mod consensus;
pub mod datagen;
mod error;
pub mod exec;
pub mod linalg;
pub mod netgraph;
pub mod simharness;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Execution;
pub use linalg::{DenseMatrix, OrthonormalBasis};
