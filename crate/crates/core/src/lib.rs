//! Desk-scale simulation of NR transport scenarios.
//!
//! Four studies share one set of building blocks:
//!
//! - [`positioning`]: IMU + NR downlink fusion on a highway,
//! - [`hst_link`]: multi-TRP downlink throughput for a high-speed train,
//! - [`scheduler`]: path-gain-aware deferral scheduling in macro cells,
//! - [`qos`]: throughput prediction error over several horizons.
//!
//! Geometry comes from [`scenario`], propagation from [`channel`]. All
//! randomness is drawn from keyed streams in [`rng`], so results depend only
//! on the master seed and never on evaluation order or thread count.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod hst_link;
pub mod positioning;
pub mod qos;
pub mod rng;
pub mod scenario;
pub mod scheduler;
pub mod stats;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub(crate) fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub(crate) fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub(crate) fn kmh_to_ms(kmh: f64) -> f64 {
    kmh / 3.6
}
