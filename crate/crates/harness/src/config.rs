//! Run configuration, read from TOML.
//!
//! ```toml
//! name = "default"
//! seed = 1
//! modulation = "qpsk"
//! pilots = ["one-pilot"]
//! architecture = "11-S4"
//!
//! [tti]
//! symbols = 14
//! subcarriers = 72
//! rx_antennas = 2
//!
//! [channel]
//! mode = "ar_jakes"
//! doppler_hz = [0.0, 500.0]
//! profile = "uniform"
//! validation_profile = "exponential"
//!
//! [noise]
//! snr_db = [0.0, 24.0]
//! # sir_db = [0.0, 20.0]
//!
//! [training]
//! total_iters = 5000
//! batch_size = 8
//!
//! [eval]
//! ttis = 512
//! snr_db = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0]
//! ```
//!
//! Every field has a default; see the structs below.

use crate::error::{invalid, Error, Result};
use deeprx_core::{ChannelMode, ChannelParams, Constellation, LlrScaling, Modulation, TapProfile, TtiSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::str::FromStr;

/// Closed interval `[lo, hi]`; a value is drawn uniformly from it.
pub type Range = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Scenario id written to every CSV row.
    pub name: String,
    pub seed: u64,
    pub modulation: String,
    /// Pilot layouts; each TTI picks one uniformly.
    pub pilots: Vec<String>,
    pub architecture: String,
    /// `magnitude`, `magnitude_squared` or `none`.
    pub llr_scaling: String,
    pub iterative_iters: usize,
    pub tti: TtiConfig,
    pub channel: ChannelConfig,
    pub noise: NoiseConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtiConfig {
    pub symbols: usize,
    pub subcarriers: usize,
    pub rx_antennas: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    /// `ar_jakes`, `ar_fixed`, `phase_only` or `flat`.
    pub mode: String,
    pub doppler_hz: Range,
    pub symbol_duration_s: f64,
    pub n_taps: usize,
    /// Tap family for training data: `uniform` or `exponential`.
    pub profile: String,
    /// Tap family for validation data.
    pub validation_profile: String,
    /// Decay constant of the exponential profile, in taps.
    pub decay_taps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub snr_db: Range,
    /// Interference is disabled when absent.
    pub sir_db: Option<Range>,
    pub time_offset_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_iters: usize,
    pub total_iters: usize,
    pub batch_size: usize,
    /// Size of the training set; 0 draws fresh TTIs for every batch.
    pub train_ttis: u64,
    pub validation_ttis: u64,
    pub validate_every: usize,
    pub log_every: usize,
    pub checkpoint_every: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// TTIs per evaluated point.
    pub ttis: u64,
    /// TTIs per work item and inference batch.
    pub chunk: u64,
    /// Width of the SNR bins when SNR is drawn from a range.
    pub snr_bin_db: f64,
    pub snr_db: Vec<f64>,
    pub doppler_hz: Vec<f64>,
    pub pilots: Vec<String>,
    /// SNR used by doppler and pilot sweeps and by probes.
    pub fixed_snr_db: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 1,
            modulation: "qpsk".into(),
            pilots: vec!["one-pilot".into()],
            architecture: "11-S4".into(),
            llr_scaling: "magnitude".into(),
            iterative_iters: 40,
            tti: TtiConfig::default(),
            channel: ChannelConfig::default(),
            noise: NoiseConfig::default(),
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl Default for TtiConfig {
    fn default() -> Self {
        Self { symbols: 14, subcarriers: 72, rx_antennas: 2 }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            mode: "ar_jakes".into(),
            doppler_hz: [0.0, 500.0],
            symbol_duration_s: 71.4e-6,
            n_taps: 7,
            profile: "uniform".into(),
            validation_profile: "exponential".into(),
            decay_taps: 2.0,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { snr_db: [0.0, 24.0], sir_db: None, time_offset_samples: 0 }
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            base_lr: 1e-2,
            weight_decay: 1e-4,
            warmup_iters: 800,
            total_iters: 5000,
            batch_size: 8,
            train_ttis: 0,
            validation_ttis: 64,
            validate_every: 500,
            log_every: 50,
            checkpoint_every: 500,
        }
    }
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ttis: 512,
            chunk: 8,
            snr_bin_db: 2.0,
            snr_db: (0..8).map(|k| 2.0 * k as f64).collect(),
            doppler_hz: (0..6).map(|k| 100.0 * k as f64).collect(),
            pilots: vec!["one-pilot".into(), "two-pilot".into()],
            fixed_snr_db: 14.0,
        }
    }
}

fn check_range(name: &str, r: Range) -> Result<()> {
    if !(r[0] <= r[1]) {
        return invalid(format!("{name} range [{}, {}] is empty", r[0], r[1]));
    }
    Ok(())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.tti_spec()?;
        self.constellation()?;
        self.scaling()?;
        self.channel_mode()?;
        self.tap_profile(&self.channel.profile)?;
        self.tap_profile(&self.channel.validation_profile)?;
        if self.pilots.is_empty() {
            return invalid("pilots list is empty");
        }
        check_range("snr_db", self.noise.snr_db)?;
        check_range("doppler_hz", self.channel.doppler_hz)?;
        if self.channel.doppler_hz[0] < 0.0 {
            return invalid("doppler must be non-negative");
        }
        if let Some(r) = self.noise.sir_db {
            check_range("sir_db", r)?;
        }
        let t = &self.training;
        if t.batch_size == 0 || t.total_iters == 0 {
            return invalid("batch_size and total_iters must be positive");
        }
        if t.warmup_iters > t.total_iters {
            return invalid("warmup_iters exceeds total_iters");
        }
        if self.eval.ttis == 0 || self.eval.chunk == 0 {
            return invalid("eval.ttis and eval.chunk must be positive");
        }
        if !(self.eval.snr_bin_db > 0.0) {
            return invalid("eval.snr_bin_db must be positive");
        }
        Ok(())
    }

    pub fn tti_spec(&self) -> Result<TtiSpec> {
        Ok(TtiSpec::new(self.tti.symbols, self.tti.subcarriers, self.tti.rx_antennas)?)
    }

    pub fn constellation(&self) -> Result<Constellation> {
        Ok(Constellation::new(Modulation::from_str(&self.modulation)?))
    }

    pub fn scaling(&self) -> Result<LlrScaling> {
        match self.llr_scaling.to_ascii_lowercase().as_str() {
            "magnitude" => Ok(LlrScaling::Magnitude),
            "magnitude_squared" => Ok(LlrScaling::MagnitudeSquared),
            "none" => Ok(LlrScaling::None),
            other => invalid(format!("unknown llr_scaling '{other}'")),
        }
    }

    pub fn channel_mode(&self) -> Result<ChannelMode> {
        Ok(ChannelMode::from_str(&self.channel.mode)?)
    }

    pub fn tap_profile(&self, family: &str) -> Result<TapProfile> {
        let n = self.channel.n_taps;
        if n == 0 {
            return invalid("n_taps must be positive");
        }
        match family {
            "uniform" => Ok(TapProfile::uniform(n)),
            "exponential" => Ok(TapProfile::exponential(n, self.channel.decay_taps)),
            other => invalid(format!("unknown tap profile '{other}'")),
        }
    }

    /// Channel parameters at a given Doppler for a tap family.
    pub fn channel_params(&self, doppler_hz: f64, family: &str) -> Result<ChannelParams> {
        Ok(ChannelParams {
            doppler_hz,
            symbol_duration_s: self.channel.symbol_duration_s,
            mode: self.channel_mode()?,
            tap_profile: self.tap_profile(family)?,
        })
    }

    /// The same scenario with validation-family channels.
    pub fn validation(&self) -> Self {
        let mut c = self.clone();
        c.channel.profile = c.channel.validation_profile.clone();
        c
    }

    pub fn with_snr(&self, snr_db: f64) -> Self {
        let mut c = self.clone();
        c.noise.snr_db = [snr_db, snr_db];
        c
    }

    pub fn with_doppler(&self, doppler_hz: f64) -> Self {
        let mut c = self.clone();
        c.channel.doppler_hz = [doppler_hz, doppler_hz];
        c
    }

    pub fn with_pilots(&self, name: &str) -> Self {
        let mut c = self.clone();
        c.pilots = vec![name.to_string()];
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = RunConfig::from_toml("seed = 9\n[training]\ntotal_iters = 10\nwarmup_iters = 2\n").unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.training.total_iters, 10);
        assert_eq!(c.training.batch_size, 8);
        assert_eq!(c.tti.subcarriers, 72);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("[noise]\nsnr_db = [10.0, 0.0]\n").is_err());
        assert!(RunConfig::from_toml("pilots = []\n").is_err());
        assert!(RunConfig::from_toml("modulation = \"qam32\"\n").is_err());
        assert!(RunConfig::from_toml("unknown_key = 1\n").is_err());
        assert!(RunConfig::from_toml("[channel]\nprofile = \"linear\"\n").is_err());
    }
}
