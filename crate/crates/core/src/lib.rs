//! Simulation of a PUF-authenticated entanglement-based QKD protocol.
//!
//! The crate models the complete pipeline: a biased weak PUF wrapped in a
//! moded hybrid-entangled device, the batched challenge/response
//! authentication subroutine, the lossy/noisy quantum channel, Wegman-Carter
//! authentication of every classical message, Toeplitz randomness extraction
//! and privacy amplification, and the finite-key security arithmetic that
//! sizes all of it. Everything is driven by seeded deterministic randomness:
//! replaying a run with the same seed reproduces every message, key and
//! abort decision bit for bit.
//!
//! Modules follow the protocol layers:
//!
//! - [`bits`], [`ledger`], [`rng`]: bit strings, key-consumption accounting,
//!   deterministic per-party random streams.
//! - [`puf`], [`hepuf`]: the simulated weak PUF and the three-mode entangled
//!   device built around it.
//! - [`channel`], [`framing`]: channel statistics, classical messages, the
//!   wire format and the adversary hooks.
//! - [`gf2`], [`auth`], [`extractor`]: GF(2) machinery, LFSR-Toeplitz
//!   Wegman-Carter authentication, Toeplitz extraction.
//! - [`security`], [`finite_key`]: cheat bounds, epsilon budgets,
//!   authentication cost accounting and the finite-key optimizer.
//! - [`protocol`], [`attacks`]: the two-party session itself and the
//!   adversarial test harness.

pub mod attacks;
pub mod auth;
pub mod bits;
pub mod channel;
pub mod extractor;
pub mod finite_key;
pub mod framing;
pub mod gf2;
pub mod hepuf;
pub mod ledger;
pub mod protocol;
pub mod puf;
pub mod rng;
pub mod security;

pub use bits::BitSequence;
pub use ledger::{KeyLedger, Region};
pub use rng::{RngHandle, Stream};
