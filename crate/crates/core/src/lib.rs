//! Frequency-domain OFDM link model and classical receivers.
//!
//! The simulator works directly on the post-FFT resource grid
//! `y[i][j] = H[i][j] * x[i][j] + n[i][j]` where `i` indexes OFDM symbols,
//! `j` subcarriers and every RE carries one value per receive antenna.

pub mod channel;
pub mod classical;
pub mod constellation;
pub mod error;
pub mod grid;
pub mod llr;
pub mod pilots;
pub mod rng;
pub mod tti;

pub use channel::{
    add_interference, add_noise, apply_channel, bessel_j0, draw_ar_channel, draw_channel,
    draw_phase_channel, flat_channel, noise_variance, ChannelMode, ChannelParams, ChannelRealization, Interferer, NoiseParams, TapProfile,
};
pub use classical::{
    estimate_noise_power, genie_receive, interpolate_estimate, iterative_estimate, iterative_receive,
    lmmse_equalize, ls_lmmse_receive, maxlog_demap, practical_estimate, raw_ls_estimate,
    ChannelEstimate, EqualizedGrid, LlrScaling, RawEstimate, NOISE_FLOOR,
};
pub use constellation::{Constellation, Modulation};
pub use error::{Error, Result};
pub use grid::{build_probe_grid, build_tx_grid, random_payload, BitGrid, ResourceGrid};
pub use llr::{BitErrorCount, LlrGrid};
pub use pilots::{standard_pilot_config, standard_pilot_configs, PilotConfig};
pub use tti::{TtiSpec, B_MAX};

pub use num_complex::Complex64;
