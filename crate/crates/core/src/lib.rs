//! POMDP-based handoff management for user-centric cell-free massive MIMO.
//!
//! The crate is organised bottom-up: [`geometry`] and [`channel`] produce
//! large-scale fading traces and channel-state statistics, [`rate`] turns
//! serving sets into spectral efficiency, [`pomdp`] builds and solves the
//! finite-horizon decision model, [`engine`] runs the handoff schemes along a
//! trip, and [`sim`] orchestrates seeded experiments and exports metrics.

pub mod channel;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod pomdp;
pub mod rate;
pub mod sim;
pub mod validate;

pub use error::{Error, Result};
