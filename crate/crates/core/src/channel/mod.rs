//! Propagation between sites and vehicles.
//!
//! [`los`] gives exact line-of-sight geometry, [`beams`] the DFT beam grid of
//! a planar array, [`taps`] tapped-delay-line realizations with per-tap
//! Doppler, [`response`] the OFDM frequency response of one or more
//! transmitters, and [`pathloss`] large-scale gains with SNR anchoring.

pub mod beams;
pub mod los;
pub mod pathloss;
pub mod response;
pub mod taps;

pub use beams::{grid_step, make_beam_grid, Beam, BeamGrid};
pub use los::{los_observation, Angles, LosObservation};
pub use pathloss::{macro_pathgain, MacroPathLoss, RailLinkBudget, ShadowTable, SnrAnchor};
pub use response::{combined_freq_response, FreqResponse};
pub use taps::{hst_taps, ChannelTaps, Tap, TapContext, TapProfile, TapSpec};
