//! Variance-based early-warning signs under time-correlated noise.
//!
//! * [`noise`]: white, coloured (OU), fractional Brownian and Rosenblatt paths.
//! * [`models`]: fold/transcritical/pitchfork normal forms and the Stommel-Cessi box model.
//! * [`theory`]: stationary variances, scaling exponents and Lyapunov-equation oracles.
//! * [`simulate`]: Euler-Maruyama ensembles with per-path random streams.
//! * [`analysis`]: log-log scaling fits and comparison with the exponent table.
//! * [`config`], [`repro`]: experiment files and the four Stommel-Cessi cases.

// `!(x > 0.0)` checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod config;
pub mod csv;
pub mod error;
pub mod models;
pub mod noise;
pub mod repro;
pub mod simulate;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
