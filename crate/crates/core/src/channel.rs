//! Frequency-domain channel generation, noise and interference.
//!
//! The multipath channel is a tapped delay line whose taps evolve once per
//! OFDM symbol as a first-order autoregressive process
//!
//! ```text
//! h_{i+1}[k] = a h_i[k] + sqrt(1 - a^2) g_i[k],   g_i[k] ~ CN(0, p_k)
//! H_ij       = sum_k h_i[k] exp(-2 pi i j k / F)
//! ```
//!
//! `a` is either fixed (`sqrt(0.9)`, i.e. 90 % of the variance carried over)
//! or follows the Jakes autocorrelation `J0(2 pi f_D T)` at one symbol lag.
//! The channel is constant within an OFDM symbol, so there is no ICI.

use crate::constellation::Constellation;
use crate::error::{invalid, Result};
use crate::grid::{build_tx_grid, random_payload, ResourceGrid};
use crate::pilots::PilotConfig;
use crate::tti::TtiSpec;
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelMode {
    /// AR taps with the fixed 0.9/0.1 variance split per symbol.
    ArFixed,
    /// AR taps with Jakes correlation at one symbol lag.
    ArJakes,
    /// One random phase rotation for the whole TTI.
    PhaseOnly,
    /// `H = 1` on every RE and antenna.
    Flat,
}

impl FromStr for ChannelMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ar_fixed" => Ok(ChannelMode::ArFixed),
            "ar_jakes" => Ok(ChannelMode::ArJakes),
            "phase_only" => Ok(ChannelMode::PhaseOnly),
            "flat" => Ok(ChannelMode::Flat),
            _ => invalid(format!("unknown channel mode '{s}'")),
        }
    }
}

/// Mean tap powers, normalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TapProfile(Vec<f64>);

impl TapProfile {
    pub fn uniform(n_taps: usize) -> Self {
        Self(vec![1.0 / n_taps as f64; n_taps])
    }

    /// `p_k ∝ exp(-k / decay_taps)`.
    pub fn exponential(n_taps: usize, decay_taps: f64) -> Self {
        let raw: Vec<f64> = (0..n_taps).map(|k| (-(k as f64) / decay_taps).exp()).collect();
        let total: f64 = raw.iter().sum();
        Self(raw.into_iter().map(|p| p / total).collect())
    }

    pub fn from_powers(powers: Vec<f64>) -> Result<Self> {
        if powers.is_empty() || powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return invalid("tap powers must be non-negative and finite");
        }
        let total: f64 = powers.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return invalid(format!("tap powers sum to {total}, expected 1"));
        }
        Ok(Self(powers))
    }

    pub fn powers(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelParams {
    /// Maximum Doppler shift `f_D` in Hz.
    pub doppler_hz: f64,
    /// OFDM symbol period `T` in seconds.
    pub symbol_duration_s: f64,
    pub mode: ChannelMode,
    pub tap_profile: TapProfile,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            doppler_hz: 0.0,
            symbol_duration_s: 71.4e-6,
            mode: ChannelMode::ArFixed,
            tap_profile: TapProfile::uniform(7),
        }
    }
}

impl ChannelParams {
    pub fn n_taps(&self) -> usize {
        self.tap_profile.len()
    }

    /// Symbol-to-symbol tap correlation `a`.
    pub fn correlation(&self) -> f64 {
        match self.mode {
            ChannelMode::ArFixed => 0.9f64.sqrt(),
            ChannelMode::ArJakes => bessel_j0(2.0 * PI * self.doppler_hz * self.symbol_duration_s),
            ChannelMode::PhaseOnly | ChannelMode::Flat => 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.doppler_hz >= 0.0) || !self.doppler_hz.is_finite() {
            return invalid(format!("doppler must be >= 0, got {}", self.doppler_hz));
        }
        if !(self.symbol_duration_s > 0.0) {
            return invalid("symbol duration must be positive");
        }
        TapProfile::from_powers(self.tap_profile.powers().to_vec()).map(|_| ())
    }
}

/// Bessel function of the first kind, order zero.
///
/// Power series for `|x| <= 12`, Hankel asymptotic expansion beyond.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let q = -(x * x) / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..200 {
            term *= q / (k * k) as f64;
            sum += term;
            if term.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        sum
    } else {
        // a_k = prod_{m<=k} -(2m-1)^2 / (8m); P takes even k, Q odd k.
        let chi = x - PI / 4.0;
        let (mut p, mut q) = (0.0, 0.0);
        let mut a = 1.0;
        let mut prev = f64::INFINITY;
        for k in 0..60 {
            if k > 0 {
                a *= -((2 * k - 1) as f64).powi(2) / (8.0 * k as f64);
            }
            let term = a / x.powi(k as i32);
            if term.abs() > prev || term.abs() < 1e-18 {
                break;
            }
            prev = term.abs();
            // (-1)^(k/2) sign pattern of the Hankel expansion
            let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            if k % 2 == 0 {
                p += sign * term;
            } else {
                q += sign * term;
            }
        }
        (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// Per-RE channel coefficients, `S x F x N_r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: Array3<Complex64>,
}

impl ChannelRealization {
    pub fn dims(&self) -> (usize, usize, usize) {
        self.h.dim()
    }
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// AR tap trajectory for one antenna, `S x n_taps`.
pub fn draw_ar_taps<R: Rng + ?Sized>(
    params: &ChannelParams,
    symbols: usize,
    rng: &mut R,
) -> Array2<Complex64> {
    let a = params.correlation();
    let innovation = (1.0 - a * a).max(0.0).sqrt();
    let powers = params.tap_profile.powers();
    let mut taps = Array2::zeros((symbols, powers.len()));
    for (k, &p) in powers.iter().enumerate() {
        taps[[0, k]] = complex_gaussian(rng, p);
    }
    for i in 1..symbols {
        for (k, &p) in powers.iter().enumerate() {
            let fresh = complex_gaussian(rng, p);
            taps[[i, k]] = taps[[i - 1, k]] * a + fresh * innovation;
        }
    }
    taps
}

/// `H[j] = sum_k taps[k] exp(-2 pi i j k / F)` for `j = 0..F`.
pub fn frequency_response(taps: &[Complex64], subcarriers: usize) -> Vec<Complex64> {
    let twiddle: Vec<Complex64> = (0..subcarriers)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / subcarriers as f64))
        .collect();
    (0..subcarriers)
        .map(|j| {
            taps.iter()
                .enumerate()
                .map(|(k, &t)| t * twiddle[(j * k) % subcarriers])
                .sum()
        })
        .collect()
}

/// Time-varying multi-tap Rayleigh channel; antennas are independent.
pub fn draw_ar_channel<R: Rng + ?Sized>(
    params: &ChannelParams,
    tti: &TtiSpec,
    rng: &mut R,
) -> Result<ChannelRealization> {
    if matches!(params.mode, ChannelMode::PhaseOnly | ChannelMode::Flat) {
        return invalid("draw_ar_channel needs an AR channel mode");
    }
    params.validate()?;
    let (s, f, nr) = (tti.symbols, tti.subcarriers, tti.rx_antennas);
    let mut h = Array3::zeros((s, f, nr));
    for r in 0..nr {
        let taps = draw_ar_taps(params, s, rng);
        for i in 0..s {
            let row: Vec<Complex64> = taps.row(i).to_vec();
            for (j, v) in frequency_response(&row, f).into_iter().enumerate() {
                h[[i, j, r]] = v;
            }
        }
    }
    Ok(ChannelRealization { h })
}

/// One uniformly random phase `exp(i phi)` over the whole TTI and all antennas.
pub fn draw_phase_channel<R: Rng + ?Sized>(tti: &TtiSpec, rng: &mut R) -> ChannelRealization {
    let phi = rng.random_range(0.0..2.0 * PI);
    let v = Complex64::from_polar(1.0, phi);
    ChannelRealization {
        h: Array3::from_elem((tti.symbols, tti.subcarriers, tti.rx_antennas), v),
    }
}

pub fn flat_channel(tti: &TtiSpec) -> ChannelRealization {
    ChannelRealization {
        h: Array3::from_elem((tti.symbols, tti.subcarriers, tti.rx_antennas), Complex64::new(1.0, 0.0)),
    }
}

/// Draws a channel according to `params.mode`.
pub fn draw_channel<R: Rng + ?Sized>(
    params: &ChannelParams,
    tti: &TtiSpec,
    rng: &mut R,
) -> Result<ChannelRealization> {
    match params.mode {
        ChannelMode::PhaseOnly => Ok(draw_phase_channel(tti, rng)),
        ChannelMode::Flat => Ok(flat_channel(tti)),
        _ => draw_ar_channel(params, tti, rng),
    }
}

/// Noiseless part of the received grid: `y_ij[r] = H_ij[r] x_ij`.
pub fn apply_channel(tx: &ResourceGrid, channel: &ChannelRealization) -> Result<ResourceGrid> {
    let (s, f, nr) = channel.dims();
    if tx.symbols() != s || tx.subcarriers() != f || tx.ports() != 1 {
        return Err(crate::Error::DimensionMismatch(format!(
            "tx grid {:?} vs channel {:?}",
            tx.values.dim(),
            channel.dims()
        )));
    }
    let mut y = Array3::zeros((s, f, nr));
    for ((i, j, r), out) in y.indexed_iter_mut() {
        *out = channel.h[[i, j, r]] * tx.values[[i, j, 0]];
    }
    Ok(ResourceGrid::from_array(y))
}

/// Adds circular white Gaussian noise with variance
/// `signal_power * 10^(-snr_db/10)` per RE and antenna.
/// `snr_db = +inf` disables noise.
pub fn add_noise<R: Rng + ?Sized>(
    rx: &ResourceGrid,
    snr_db: f64,
    signal_power: f64,
    rng: &mut R,
) -> Result<ResourceGrid> {
    if !(signal_power > 0.0) || !signal_power.is_finite() {
        return invalid(format!("signal power must be positive, got {signal_power}"));
    }
    if snr_db == f64::INFINITY {
        return Ok(rx.clone());
    }
    let variance = noise_variance(snr_db, signal_power);
    let mut out = rx.clone();
    for v in out.values.iter_mut() {
        *v += complex_gaussian(rng, variance);
    }
    Ok(out)
}

pub fn noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        signal_power * 10f64.powf(-snr_db / 10.0)
    }
}

/// Per-TTI noise and interference settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams {
    pub snr_db: f64,
    /// `None` disables interference.
    pub sir_db: Option<f64>,
    /// Interferer delay in samples, applied as a subcarrier phase ramp.
    pub time_offset_samples: usize,
}

/// Numerology of an interfering transmitter.
#[derive(Debug, Clone, Copy)]
pub struct Interferer<'a> {
    pub tti: &'a TtiSpec,
    pub constellation: &'a Constellation,
    pub pilots: &'a PilotConfig,
    pub channel: &'a ChannelParams,
}

/// Adds a co-channel interferer with independent bits and channel.
///
/// The interferer has unit nominal power (unit-energy symbols through a
/// unit-power channel) and is scaled to `signal_power * 10^(-sir_db/10)`.
/// Its time offset `tau` becomes the phase ramp `exp(-2 pi i j tau / F)`.
pub fn add_interference<R: Rng + ?Sized>(
    rx: &ResourceGrid,
    sir_db: f64,
    time_offset_samples: usize,
    signal_power: f64,
    interferer: &Interferer<'_>,
    rng: &mut R,
) -> Result<ResourceGrid> {
    if sir_db == f64::INFINITY {
        return Ok(rx.clone());
    }
    let Interferer { tti, constellation, pilots, channel } = *interferer;
    let payload = random_payload(pilots.num_data() * constellation.bits_per_symbol(), rng);
    let (tx, _) = build_tx_grid(&payload, constellation, pilots, tti)?;
    let mut h = draw_channel(channel, tti, rng)?;
    let f = tti.subcarriers;
    if time_offset_samples % f != 0 {
        for ((_, j, _), v) in h.h.indexed_iter_mut() {
            let phase = -2.0 * PI * ((j * time_offset_samples) % f) as f64 / f as f64;
            *v *= Complex64::from_polar(1.0, phase);
        }
    }
    let interference = apply_channel(&tx, &h)?;
    rx.check_dims(&interference, "add_interference")?;
    let gain = (signal_power * 10f64.powf(-sir_db / 10.0)).sqrt();
    let mut out = rx.clone();
    out.values.zip_mut_with(&interference.values, |y, i| *y += i * gain);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constellation::Modulation;
    use crate::pilots::standard_pilot_configs;
    use crate::rng::rng_from_seed;

    /// J0 by trapezoidal quadrature of (1/pi) int_0^pi cos(x sin t) dt.
    fn j0_quadrature(x: f64) -> f64 {
        let n = 20_000;
        let h = PI / n as f64;
        let mut acc = 0.5 * (1.0 + (x * PI.sin()).cos());
        for k in 1..n {
            acc += (x * (k as f64 * h).sin()).cos();
        }
        acc * h / PI
    }

    #[test]
    fn bessel_matches_quadrature() {
        for &x in &[0.0, 0.05, 0.224_314, 1.0, 2.404_825_557_695_773, 5.0, 11.9, 12.5, 20.0, 40.0] {
            let q = j0_quadrature(x);
            assert!((bessel_j0(x) - q).abs() < 1e-8, "x={x}: {} vs {q}", bessel_j0(x));
        }
    }

    #[test]
    fn correlation_examples() {
        let mut p = ChannelParams::default();
        assert!((p.correlation() - 0.94868).abs() < 1e-5);
        p.mode = ChannelMode::ArJakes;
        p.doppler_hz = 500.0;
        p.symbol_duration_s = 71.4e-6;
        // J0(0.224314) from the series 1 - x^2/4 + x^4/64 - ..
        let x: f64 = 2.0 * PI * 500.0 * 71.4e-6;
        let series = 1.0 - x.powi(2) / 4.0 + x.powi(4) / 64.0 - x.powi(6) / 2304.0 + x.powi(8) / 147456.0;
        assert!((p.correlation() - series).abs() < 1e-12);
        assert!((p.correlation() - 0.98746).abs() < 1e-5);
        p.doppler_hz = 0.0;
        assert_eq!(p.correlation(), 1.0);
    }

    #[test]
    fn zero_doppler_is_static() {
        let p = ChannelParams { mode: ChannelMode::ArJakes, ..Default::default() };
        let tti = TtiSpec::new(14, 16, 2).unwrap();
        let ch = draw_ar_channel(&p, &tti, &mut rng_from_seed(3)).unwrap();
        for i in 1..14 {
            for j in 0..16 {
                for r in 0..2 {
                    assert_eq!(ch.h[[i, j, r]], ch.h[[0, j, r]]);
                }
            }
        }
    }

    #[test]
    fn phase_mode_rejected_by_ar_draw() {
        let p = ChannelParams { mode: ChannelMode::PhaseOnly, ..Default::default() };
        assert!(draw_ar_channel(&p, &TtiSpec::default(), &mut rng_from_seed(0)).is_err());
    }

    #[test]
    fn frequency_response_is_zero_padded_dft() {
        let p = ChannelParams::default();
        let taps = draw_ar_taps(&p, 1, &mut rng_from_seed(11));
        let row: Vec<Complex64> = taps.row(0).to_vec();
        let f = 12;
        let got = frequency_response(&row, f);
        let mut padded = row.clone();
        padded.resize(f, Complex64::new(0.0, 0.0));
        for (j, g) in got.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, x) in padded.iter().enumerate() {
                let ang = -2.0 * PI * (j * n) as f64 / f as f64;
                acc += x * Complex64::new(ang.cos(), ang.sin());
            }
            assert!((acc - g).norm() < 1e-12);
        }
    }

    #[test]
    fn phase_channel_is_constant_unit() {
        let tti = TtiSpec::new(14, 8, 2).unwrap();
        let a = draw_phase_channel(&tti, &mut rng_from_seed(1));
        let b = draw_phase_channel(&tti, &mut rng_from_seed(2));
        let v = a.h[[0, 0, 0]];
        assert!(a.h.iter().all(|&x| x == v));
        assert!((v.norm() - 1.0).abs() < 1e-15);
        assert_ne!(v, b.h[[0, 0, 0]]);
    }

    #[test]
    fn apply_channel_examples() {
        let tti = TtiSpec::new(2, 3, 2).unwrap();
        let mut tx = ResourceGrid::zeros(2, 3, 1);
        tx.values[[0, 1, 0]] = Complex64::new(1.0, 0.0);
        tx.values[[1, 2, 0]] = Complex64::new(0.3, -0.2);
        let ones = ChannelRealization { h: Array3::from_elem((2, 3, 2), Complex64::new(1.0, 0.0)) };
        let y = apply_channel(&tx, &ones).unwrap();
        for ((i, j, _), v) in y.values.indexed_iter() {
            assert_eq!(*v, tx.values[[i, j, 0]]);
        }
        let imag = ChannelRealization { h: Array3::from_elem((2, 3, 2), Complex64::new(0.0, 1.0)) };
        let y = apply_channel(&tx, &imag).unwrap();
        assert_eq!(y.values[[0, 1, 1]], Complex64::new(0.0, 1.0));
        assert_eq!(y.values[[0, 0, 0]], Complex64::new(0.0, 0.0));
        let bad = ChannelRealization { h: Array3::zeros((2, 4, 2)) };
        assert!(apply_channel(&tx, &bad).is_err());
        let _ = tti;
    }

    #[test]
    fn noise_disabled_and_invalid_power() {
        let g = ResourceGrid::zeros(2, 2, 1);
        let mut rng = rng_from_seed(0);
        assert_eq!(add_noise(&g, f64::INFINITY, 1.0, &mut rng).unwrap(), g);
        assert!(add_noise(&g, 10.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn noise_variance_calibrated() {
        let g = ResourceGrid::zeros(1000, 1000, 1);
        let noisy = add_noise(&g, 0.0, 1.0, &mut rng_from_seed(9)).unwrap();
        let n = noisy.values.len() as f64;
        let var = noisy.mean_power();
        let var_re = noisy.values.iter().map(|v| v.re * v.re).sum::<f64>() / n;
        let var_im = noisy.values.iter().map(|v| v.im * v.im).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.01, "{var}");
        assert!((var_re - 0.5).abs() < 0.01 && (var_im - 0.5).abs() < 0.01);
    }

    #[test]
    fn interference_power_matches_sir() {
        let tti = TtiSpec::new(14, 72, 1).unwrap();
        let pilots = &standard_pilot_configs(&tti).unwrap()[0];
        let c = Constellation::new(Modulation::Qpsk);
        let ch = ChannelParams::default();
        let itf = Interferer { tti: &tti, constellation: &c, pilots, channel: &ch };
        let zero = ResourceGrid::zeros(14, 72, 1);
        let mut rng = rng_from_seed(4);
        assert_eq!(add_interference(&zero, f64::INFINITY, 0, 1.0, &itf, &mut rng).unwrap(), zero);
        let mut acc = 0.0;
        let mut n = 0usize;
        while n < 1_000_000 {
            let y = add_interference(&zero, 0.0, 5, 1.0, &itf, &mut rng).unwrap();
            acc += y.values.iter().map(|v| v.norm_sqr()).sum::<f64>();
            n += y.values.len();
        }
        let p = acc / n as f64;
        assert!((p - 1.0).abs() < 0.02, "interferer power {p}");
    }
}
