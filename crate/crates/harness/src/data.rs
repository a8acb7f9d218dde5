//! Per-TTI simulation and dataset bookkeeping.

use crate::config::RunConfig;
use crate::error::{invalid, Result};
use deeprx_core::rng::{derive_seed, rng_from_seed};
use deeprx_core::{
    add_interference, add_noise, apply_channel, build_probe_grid, build_tx_grid, draw_channel, noise_variance,
    random_payload, standard_pilot_config, BitGrid, ChannelRealization, Constellation, Interferer, PilotConfig,
    ResourceGrid, TtiSpec,
};
use rand::Rng;
use std::ops::Range;

/// Seed stream shared by every data split; splits differ by index range.
const DATA_STREAM: u64 = 0x6461_7461;
/// Offsets of the index ranges of each split.
const SPLIT_STRIDE: u64 = 1 << 48;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    fn offset(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Validation => SPLIT_STRIDE,
            Split::Test => 2 * SPLIT_STRIDE,
        }
    }
}

/// Global TTI index of the `index`-th TTI of a split.
pub fn tti_index(split: Split, index: u64) -> u64 {
    split.offset() + index
}

/// Seed of a global TTI index. Injective in `index` for a fixed master seed.
pub fn tti_seed(master: u64, global_index: u64) -> u64 {
    derive_seed(master, DATA_STREAM, global_index)
}

/// Index ranges of the training and validation sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub master_seed: u64,
    pub train: Range<u64>,
    pub validation: Range<u64>,
}

impl DatasetSpec {
    pub fn new(master_seed: u64, train_ttis: u64, validation_ttis: u64) -> Result<Self> {
        if train_ttis > SPLIT_STRIDE || validation_ttis > SPLIT_STRIDE {
            return invalid("dataset split too large");
        }
        let spec = Self {
            master_seed,
            train: tti_index(Split::Train, 0)..tti_index(Split::Train, train_ttis),
            validation: tti_index(Split::Validation, 0)..tti_index(Split::Validation, validation_ttis),
        };
        spec.check_disjoint()?;
        Ok(spec)
    }

    pub fn check_disjoint(&self) -> Result<()> {
        let (a, b) = (&self.train, &self.validation);
        if a.start < b.end && b.start < a.end {
            return invalid(format!("train {a:?} and validation {b:?} overlap"));
        }
        Ok(())
    }

    pub fn train_seed(&self, k: u64) -> u64 {
        tti_seed(self.master_seed, self.train.start + k)
    }

    pub fn validation_seed(&self, k: u64) -> u64 {
        tti_seed(self.master_seed, self.validation.start + k)
    }
}

/// What the data REs carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Payload {
    #[default]
    Random,
    /// One repeated symbol per time-frequency quadrant.
    Quadrant,
}

/// Everything needed to draw TTIs of one configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: RunConfig,
    pub tti: TtiSpec,
    pub constellation: Constellation,
    pub pilots: Vec<PilotConfig>,
    pub payload: Payload,
}

impl Scenario {
    pub fn new(config: &RunConfig) -> Result<Self> {
        config.validate()?;
        let tti = config.tti_spec()?;
        let pilots = config.pilots.iter().map(|p| standard_pilot_config(p, &tti)).collect::<std::result::Result<_, _>>()?;
        Ok(Self { config: config.clone(), tti, constellation: config.constellation()?, pilots, payload: Payload::Random })
    }

    pub fn with_payload(mut self, payload: Payload) -> Self {
        self.payload = payload;
        self
    }

    /// Label used for the pilot column of reports.
    pub fn pilot_label(&self) -> String {
        self.config.pilots.join("+")
    }
}

/// One simulated TTI with its ground truth.
#[derive(Debug, Clone)]
pub struct Tti {
    pub seed: u64,
    pub rx: ResourceGrid,
    pub bits: BitGrid,
    pub channel: ChannelRealization,
    /// True noise variance per RE and antenna.
    pub sigma2: f64,
    pub snr_db: f64,
    pub doppler_hz: f64,
    pub pilot_index: usize,
}

impl Tti {
    pub fn pilots<'a>(&self, scenario: &'a Scenario) -> &'a PilotConfig {
        &scenario.pilots[self.pilot_index]
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Draws one TTI; a deterministic function of `(scenario, seed)`.
pub fn generate_tti(scenario: &Scenario, seed: u64) -> Result<Tti> {
    let cfg = &scenario.config;
    let mut rng = rng_from_seed(seed);
    let snr_db = uniform(&mut rng, cfg.noise.snr_db);
    let doppler_hz = uniform(&mut rng, cfg.channel.doppler_hz);
    let pilot_index = if scenario.pilots.len() == 1 { 0 } else { rng.random_range(0..scenario.pilots.len()) };
    let pilots = &scenario.pilots[pilot_index];
    let (tx, bits) = match scenario.payload {
        Payload::Random => {
            let payload = random_payload(pilots.num_data() * scenario.constellation.bits_per_symbol(), &mut rng);
            build_tx_grid(&payload, &scenario.constellation, pilots, &scenario.tti)?
        }
        Payload::Quadrant => build_probe_grid(&scenario.tti, &scenario.constellation, pilots, &mut rng)?,
    };
    let params = cfg.channel_params(doppler_hz, &cfg.channel.profile)?;
    let channel = draw_channel(&params, &scenario.tti, &mut rng)?;
    let faded = apply_channel(&tx, &channel)?;
    let signal_power = faded.mean_power();
    let mut rx = add_noise(&faded, snr_db, signal_power, &mut rng)?;
    if let Some(sir) = cfg.noise.sir_db {
        let sir_db = uniform(&mut rng, sir);
        let interferer = Interferer { tti: &scenario.tti, constellation: &scenario.constellation, pilots, channel: &params };
        rx = add_interference(&rx, sir_db, cfg.noise.time_offset_samples, signal_power, &interferer, &mut rng)?;
    }
    Ok(Tti { seed, rx, bits, channel, sigma2: noise_variance(snr_db, signal_power), snr_db, doppler_hz, pilot_index })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        let mut c = RunConfig::default();
        c.tti.subcarriers = 24;
        c
    }

    #[test]
    fn same_seed_same_tti() {
        let s = Scenario::new(&small()).unwrap();
        let a = generate_tti(&s, 42).unwrap();
        let b = generate_tti(&s, 42).unwrap();
        assert_eq!(a.rx, b.rx);
        assert_eq!(a.bits, b.bits);
        assert_eq!(a.channel, b.channel);
        assert_eq!(a.snr_db.to_bits(), b.snr_db.to_bits());
        assert_ne!(generate_tti(&s, 43).unwrap().rx, a.rx);
    }

    #[test]
    fn degenerate_snr_range_is_exact() {
        let s = Scenario::new(&small().with_snr(10.0)).unwrap();
        for seed in 0..20 {
            assert_eq!(generate_tti(&s, seed).unwrap().snr_db, 10.0);
        }
    }

    #[test]
    fn pilot_configs_are_drawn_uniformly() {
        let mut c = small();
        c.pilots = vec!["one-pilot".into(), "two-pilot".into()];
        let s = Scenario::new(&c).unwrap();
        let ones = (0..400).filter(|&k| generate_tti(&s, k).unwrap().pilot_index == 0).count();
        assert!((150..250).contains(&ones), "{ones}");
    }

    #[test]
    fn validation_never_reuses_training_seeds() {
        let d = DatasetSpec::new(3, 10_000, 1_000).unwrap();
        let train: std::collections::HashSet<u64> = (0..10_000).map(|k| d.train_seed(k)).collect();
        assert!((0..1_000).all(|k| !train.contains(&d.validation_seed(k))));
        let overlapping = DatasetSpec { master_seed: 3, train: 0..10, validation: 5..20 };
        assert!(overlapping.check_disjoint().is_err());
    }
}
