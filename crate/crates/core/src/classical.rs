//! Baseline receivers: LS channel estimation with bilinear interpolation,
//! LMMSE equalization and max-log demapping, plus the genie-aided and
//! decision-directed (iterative) variants.

use crate::channel::ChannelRealization;
use crate::constellation::Constellation;
use crate::error::{invalid, Error, Result};
use crate::grid::ResourceGrid;
use crate::llr::LlrGrid;
use crate::pilots::PilotConfig;
use ndarray::{Array2, Array3};
use num_complex::Complex64;

/// Lower bound for the estimated noise power.
pub const NOISE_FLOOR: f64 = 1e-8;

/// Raw LS channel estimates at the pilot REs, one row per pilot.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEstimate {
    pub positions: Vec<(usize, usize)>,
    /// `n_pilots x N_r`.
    pub values: Array2<Complex64>,
    pub symbols: usize,
    pub subcarriers: usize,
}

impl RawEstimate {
    pub fn rx_antennas(&self) -> usize {
        self.values.dim().1
    }

    /// Pilot rows grouped by OFDM symbol: `(symbol, [(subcarrier, row index)])`,
    /// both levels ascending.
    fn by_symbol(&self) -> Vec<(usize, Vec<(usize, usize)>)> {
        let mut out: Vec<(usize, Vec<(usize, usize)>)> = Vec::new();
        let mut order: Vec<usize> = (0..self.positions.len()).collect();
        order.sort_by_key(|&k| self.positions[k]);
        for k in order {
            let (i, j) = self.positions[k];
            match out.last_mut() {
                Some((si, row)) if *si == i => row.push((j, k)),
                _ => out.push((i, vec![(j, k)])),
            }
        }
        out
    }
}

/// Interpolated channel estimate over the whole grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// `S x F x N_r`.
    pub h_hat: Array3<Complex64>,
    pub sigma2_hat: f64,
}

/// Equalizer output with the per-RE channel norm used for LLR scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct EqualizedGrid {
    pub x_hat: Array2<Complex64>,
    pub gain: Array2<f64>,
}

/// How LLRs are weighted by the channel strength of each RE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LlrScaling {
    /// Multiply by `||H||`.
    #[default]
    Magnitude,
    /// Multiply by `||H||^2`.
    MagnitudeSquared,
    None,
}

/// `H_ij = y_ij x_ij^*` on every pilot RE and antenna.
pub fn raw_ls_estimate(rx: &ResourceGrid, pilots: &PilotConfig) -> Result<RawEstimate> {
    let (s, f) = pilots.dims();
    if rx.symbols() != s || rx.subcarriers() != f {
        return Err(Error::DimensionMismatch(format!(
            "rx grid {:?} vs pilots {s}x{f}",
            rx.values.dim()
        )));
    }
    let nr = rx.ports();
    let positions = pilots.positions().to_vec();
    let mut values = Array2::zeros((positions.len(), nr));
    for (k, &(i, j)) in positions.iter().enumerate() {
        let x = pilots.value(i, j).expect("pilot").conj();
        for r in 0..nr {
            values[[k, r]] = rx.values[[i, j, r]] * x;
        }
    }
    Ok(RawEstimate { positions, values, symbols: s, subcarriers: f })
}

/// Linear interpolation of `points` (sorted by abscissa) at `x`, holding the
/// end values constant outside the covered range.
fn interp1(points: &[(usize, Complex64)], x: usize) -> Complex64 {
    let first = points[0];
    let last = points[points.len() - 1];
    if x <= first.0 {
        return first.1;
    }
    if x >= last.0 {
        return last.1;
    }
    let upper = points.partition_point(|&(p, _)| p <= x);
    let (x0, v0) = points[upper - 1];
    if x0 == x {
        return v0;
    }
    let (x1, v1) = points[upper];
    let t = (x - x0) as f64 / (x1 - x0) as f64;
    v0 * (1.0 - t) + v1 * t
}

/// Bilinear fill of the raw estimates: linear in frequency along every
/// pilot-bearing symbol, then linear in time between those symbols, with
/// constant extrapolation at all edges.
pub fn interpolate_estimate(raw: &RawEstimate) -> Result<ChannelEstimate> {
    if raw.positions.is_empty() {
        return invalid("cannot interpolate without pilots");
    }
    let (s, f, nr) = (raw.symbols, raw.subcarriers, raw.rx_antennas());
    let rows = raw.by_symbol();
    let mut h_hat = Array3::zeros((s, f, nr));
    for r in 0..nr {
        // Frequency pass on pilot symbols.
        let freq_rows: Vec<(usize, Vec<Complex64>)> = rows
            .iter()
            .map(|(i, cols)| {
                let pts: Vec<(usize, Complex64)> =
                    cols.iter().map(|&(j, k)| (j, raw.values[[k, r]])).collect();
                (*i, (0..f).map(|j| interp1(&pts, j)).collect())
            })
            .collect();
        // Time pass.
        for j in 0..f {
            let pts: Vec<(usize, Complex64)> =
                freq_rows.iter().map(|(i, row)| (*i, row[j])).collect();
            for i in 0..s {
                h_hat[[i, j, r]] = interp1(&pts, i);
            }
        }
    }
    Ok(ChannelEstimate { h_hat, sigma2_hat: 0.0 })
}

/// Noise power from the roughness of the raw estimates along frequency.
///
/// Each interior pilot contributes `3/2 |h_k - (h_{k-1} + h_k + h_{k+1}) / 3|^2`
/// (the residual of a 3-tap moving average keeps 2/3 of white noise power); a
/// symbol with exactly two pilots contributes `|h_1 - h_2|^2 / 2`. The mean of
/// all contributions is floored at `floor`; with no usable symbol the floor
/// itself is returned.
pub fn estimate_noise_power(raw: &RawEstimate, floor: f64) -> f64 {
    let nr = raw.rx_antennas();
    let mut acc = 0.0;
    let mut n = 0usize;
    for (_, cols) in raw.by_symbol() {
        for r in 0..nr {
            let h: Vec<Complex64> = cols.iter().map(|&(_, k)| raw.values[[k, r]]).collect();
            match h.len() {
                0 | 1 => {}
                2 => {
                    acc += (h[0] - h[1]).norm_sqr() / 2.0;
                    n += 1;
                }
                len => {
                    for k in 1..len - 1 {
                        let smooth = (h[k - 1] + h[k] + h[k + 1]) / 3.0;
                        acc += 1.5 * (h[k] - smooth).norm_sqr();
                        n += 1;
                    }
                }
            }
        }
    }
    if n == 0 {
        floor
    } else {
        (acc / n as f64).max(floor)
    }
}

/// Per-RE SIMO LMMSE: `x = (H^H H + s2)^-1 H^H y`, `gain = ||H||`.
/// A zero denominator yields `x = 0` with zero gain.
pub fn lmmse_equalize(rx: &ResourceGrid, est: &ChannelEstimate) -> Result<EqualizedGrid> {
    if rx.values.dim() != est.h_hat.dim() {
        return Err(Error::DimensionMismatch(format!(
            "rx {:?} vs estimate {:?}",
            rx.values.dim(),
            est.h_hat.dim()
        )));
    }
    let (s, f, nr) = rx.values.dim();
    let mut x_hat = Array2::zeros((s, f));
    let mut gain = Array2::zeros((s, f));
    for i in 0..s {
        for j in 0..f {
            let mut hh = 0.0;
            let mut hy = Complex64::new(0.0, 0.0);
            for r in 0..nr {
                let h = est.h_hat[[i, j, r]];
                hh += h.norm_sqr();
                hy += h.conj() * rx.values[[i, j, r]];
            }
            let denom = hh + est.sigma2_hat;
            if denom > 0.0 {
                x_hat[[i, j]] = hy / denom;
                gain[[i, j]] = hh.sqrt();
            }
        }
    }
    Ok(EqualizedGrid { x_hat, gain })
}

/// Max-log LLRs
/// `L = w / s2 * (min_{x in C_l^1} |x_hat - x|^2 - min_{x in C_l^0} |x_hat - x|^2)`
/// where `w` is the channel weighting selected by `scaling`.
pub fn maxlog_demap(
    eq: &EqualizedGrid,
    constellation: &Constellation,
    sigma2: f64,
    valid: &Array2<bool>,
    scaling: LlrScaling,
) -> LlrGrid {
    let (s, f) = eq.x_hat.dim();
    let b = constellation.bits_per_symbol();
    let points = constellation.points();
    let mut llr = Array3::zeros((s, f, b));
    let mut d = vec![0.0; points.len()];
    for ((i, j), &is_data) in valid.indexed_iter() {
        if !is_data {
            continue;
        }
        let z = eq.x_hat[[i, j]];
        for (dk, p) in d.iter_mut().zip(points) {
            *dk = (z - p).norm_sqr();
        }
        let weight = match scaling {
            LlrScaling::Magnitude => eq.gain[[i, j]],
            LlrScaling::MagnitudeSquared => eq.gain[[i, j]].powi(2),
            LlrScaling::None => 1.0,
        } / sigma2;
        for l in 0..b {
            let mask = 1 << (b - 1 - l);
            let (mut d0, mut d1) = (f64::INFINITY, f64::INFINITY);
            for (label, &dk) in d.iter().enumerate() {
                if label & mask == 0 {
                    d0 = d0.min(dk);
                } else {
                    d1 = d1.min(dk);
                }
            }
            llr[[i, j, l]] = weight * (d1 - d0);
        }
    }
    LlrGrid { llr, valid: valid.clone() }
}

fn data_mask(pilots: &PilotConfig) -> Array2<bool> {
    let (s, f) = pilots.dims();
    Array2::from_shape_fn((s, f), |(i, j)| !pilots.is_pilot(i, j))
}

/// LS estimate, bilinear interpolation, LMMSE and max-log demapping.
pub fn ls_lmmse_receive(
    rx: &ResourceGrid,
    pilots: &PilotConfig,
    constellation: &Constellation,
    scaling: LlrScaling,
) -> Result<LlrGrid> {
    let est = practical_estimate(rx, pilots)?;
    let eq = lmmse_equalize(rx, &est)?;
    Ok(maxlog_demap(&eq, constellation, est.sigma2_hat, &data_mask(pilots), scaling))
}

/// The practical channel estimate (LS + interpolation + noise estimate).
pub fn practical_estimate(rx: &ResourceGrid, pilots: &PilotConfig) -> Result<ChannelEstimate> {
    let raw = raw_ls_estimate(rx, pilots)?;
    let mut est = interpolate_estimate(&raw)?;
    est.sigma2_hat = estimate_noise_power(&raw, NOISE_FLOOR);
    Ok(est)
}

/// LMMSE receiver given the true channel and noise power.
pub fn genie_receive(
    rx: &ResourceGrid,
    channel: &ChannelRealization,
    sigma2: f64,
    pilots: &PilotConfig,
    constellation: &Constellation,
    scaling: LlrScaling,
) -> Result<LlrGrid> {
    let sigma2 = sigma2.max(NOISE_FLOOR);
    let est = ChannelEstimate { h_hat: channel.h.clone(), sigma2_hat: sigma2 };
    let eq = lmmse_equalize(rx, &est)?;
    Ok(maxlog_demap(&eq, constellation, sigma2, &data_mask(pilots), scaling))
}

/// Decision-directed channel refinement for channels that are constant over
/// the TTI. Starting from the practical estimate, each iteration equalizes
/// every RE, takes hard decisions on data REs (pilots are known), and replaces
/// the estimate by the TTI-wide least-squares fit `sum y d^* / sum |d|^2` per
/// antenna.
pub fn iterative_estimate(
    rx: &ResourceGrid,
    pilots: &PilotConfig,
    constellation: &Constellation,
    n_iters: usize,
) -> Result<ChannelEstimate> {
    let mut est = practical_estimate(rx, pilots)?;
    let (s, f, nr) = rx.values.dim();
    for _ in 0..n_iters {
        let eq = lmmse_equalize(rx, &est)?;
        let mut num = vec![Complex64::new(0.0, 0.0); nr];
        let mut den = 0.0;
        for i in 0..s {
            for j in 0..f {
                let d = match pilots.value(i, j) {
                    Some(p) => p,
                    None => constellation.point(constellation.nearest_label(eq.x_hat[[i, j]])),
                };
                den += d.norm_sqr();
                for (r, acc) in num.iter_mut().enumerate() {
                    *acc += rx.values[[i, j, r]] * d.conj();
                }
            }
        }
        for (r, acc) in num.iter().enumerate() {
            let h = acc / den;
            est.h_hat.slice_mut(ndarray::s![.., .., r]).fill(h);
        }
    }
    Ok(est)
}

pub fn iterative_receive(
    rx: &ResourceGrid,
    pilots: &PilotConfig,
    constellation: &Constellation,
    n_iters: usize,
    scaling: LlrScaling,
) -> Result<LlrGrid> {
    let est = iterative_estimate(rx, pilots, constellation, n_iters)?;
    let eq = lmmse_equalize(rx, &est)?;
    Ok(maxlog_demap(&eq, constellation, est.sigma2_hat, &data_mask(pilots), scaling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{add_noise, apply_channel, draw_phase_channel};
    use crate::constellation::Modulation;
    use crate::grid::{build_tx_grid, random_payload};
    use crate::pilots::standard_pilot_configs;
    use crate::rng::rng_from_seed;
    use crate::tti::TtiSpec;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn flat_rx(tti: &TtiSpec, pilots: &PilotConfig, h: Complex64, seed: u64) -> ResourceGrid {
        let qpsk = Constellation::new(Modulation::Qpsk);
        let mut rng = rng_from_seed(seed);
        let payload = random_payload(pilots.num_data() * 2, &mut rng);
        let (tx, _) = build_tx_grid(&payload, &qpsk, pilots, tti).unwrap();
        let ch = ChannelRealization {
            h: Array3::from_elem((tti.symbols, tti.subcarriers, tti.rx_antennas), h),
        };
        apply_channel(&tx, &ch).unwrap()
    }

    #[test]
    fn raw_estimate_inverts_unit_pilots() {
        let tti = TtiSpec::new(14, 24, 2).unwrap();
        let pilots = &standard_pilot_configs(&tti).unwrap()[1];
        for h in [c(1.0, 0.0), c(0.0, 1.0), c(0.3, -1.7)] {
            let rx = flat_rx(&tti, pilots, h, 1);
            let raw = raw_ls_estimate(&rx, pilots).unwrap();
            for v in raw.values.iter() {
                assert!((v - h).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_examples() {
        let tti = TtiSpec::new(14, 24, 1).unwrap();
        let cfgs = standard_pilot_configs(&tti).unwrap();
        let h = c(0.4, -0.9);
        for p in &cfgs {
            let rx = flat_rx(&tti, p, h, 2);
            let est = interpolate_estimate(&raw_ls_estimate(&rx, p).unwrap()).unwrap();
            assert!(est.h_hat.iter().all(|v| (v - h).norm() < 1e-12), "{}", p.name());
        }

        let raw = RawEstimate {
            positions: vec![(0, 0), (0, 2)],
            values: Array2::from_shape_vec((2, 1), vec![c(0.0, 0.0), c(2.0, 0.0)]).unwrap(),
            symbols: 2,
            subcarriers: 4,
        };
        let est = interpolate_estimate(&raw).unwrap();
        assert_eq!(est.h_hat[[0, 1, 0]], c(1.0, 0.0));
        assert_eq!(est.h_hat[[0, 3, 0]], c(2.0, 0.0));
        assert_eq!(est.h_hat[[1, 1, 0]], c(1.0, 0.0));

        let empty = RawEstimate { positions: vec![], values: Array2::zeros((0, 1)), symbols: 2, subcarriers: 2 };
        assert!(interpolate_estimate(&empty).is_err());
    }

    #[test]
    fn interpolation_is_linear_in_time() {
        let raw = RawEstimate {
            positions: vec![(1, 0), (3, 0)],
            values: Array2::from_shape_vec((2, 1), vec![c(1.0, 0.0), c(3.0, 2.0)]).unwrap(),
            symbols: 6,
            subcarriers: 1,
        };
        let est = interpolate_estimate(&raw).unwrap();
        let col: Vec<Complex64> = (0..6).map(|i| est.h_hat[[i, 0, 0]]).collect();
        assert_eq!(col, vec![c(1.0, 0.0), c(1.0, 0.0), c(2.0, 1.0), c(3.0, 2.0), c(3.0, 2.0), c(3.0, 2.0)]);
    }

    #[test]
    fn single_re_estimate_is_constant() {
        let tti = TtiSpec::default();
        let p = &standard_pilot_configs(&tti).unwrap()[2];
        let rx = flat_rx(&tti, p, c(0.0, 1.0), 3);
        let est = practical_estimate(&rx, p).unwrap();
        assert!(est.h_hat.iter().all(|v| (v - c(0.0, 1.0)).norm() < 1e-12));
        assert_eq!(est.sigma2_hat, NOISE_FLOOR);
    }

    #[test]
    fn noise_estimate_calibration() {
        let tti = TtiSpec::new(14, 72, 1).unwrap();
        let p = &standard_pilot_configs(&tti).unwrap()[1];
        let clean = flat_rx(&tti, p, c(0.6, 0.8), 4);
        assert_eq!(estimate_noise_power(&raw_ls_estimate(&clean, p).unwrap(), NOISE_FLOOR), NOISE_FLOOR);

        let mut rng = rng_from_seed(99);
        let mut mean_at = |sigma2: f64| {
            let snr_db = -10.0 * sigma2.log10();
            let mut acc = 0.0;
            for _ in 0..1000 {
                let y = add_noise(&clean, snr_db, 1.0, &mut rng).unwrap();
                acc += estimate_noise_power(&raw_ls_estimate(&y, p).unwrap(), NOISE_FLOOR);
            }
            acc / 1000.0
        };
        let low = mean_at(0.1);
        let high = mean_at(0.2);
        assert!((low - 0.1).abs() < 0.015, "{low}");
        assert!((high / low - 2.0).abs() < 0.1, "{high} / {low}");
    }

    #[test]
    fn lmmse_examples() {
        let one = |h: Vec<Complex64>, s2: f64, y: Vec<Complex64>| {
            let nr = h.len();
            let est = ChannelEstimate { h_hat: Array3::from_shape_vec((1, 1, nr), h).unwrap(), sigma2_hat: s2 };
            let rx = ResourceGrid::from_array(Array3::from_shape_vec((1, 1, nr), y).unwrap());
            lmmse_equalize(&rx, &est).unwrap()
        };
        let x = c(0.3, -0.7);
        assert!((one(vec![c(2.0, 0.0)], 0.0, vec![x * 2.0]).x_hat[[0, 0]] - x).norm() < 1e-15);
        assert!((one(vec![c(1.0, 0.0)], 1.0, vec![c(1.0, 0.0)]).x_hat[[0, 0]] - c(0.5, 0.0)).norm() < 1e-15);
        let mrc = one(vec![c(1.0, 0.0), c(1.0, 0.0)], 0.0, vec![x, x]);
        assert!((mrc.x_hat[[0, 0]] - x).norm() < 1e-15);
        assert!((mrc.gain[[0, 0]] - 2f64.sqrt()).abs() < 1e-15);
        let dead = one(vec![c(0.0, 0.0)], 0.0, vec![x]);
        assert_eq!((dead.x_hat[[0, 0]], dead.gain[[0, 0]]), (c(0.0, 0.0), 0.0));
    }

    #[test]
    fn maxlog_examples() {
        let qpsk = Constellation::new(Modulation::Qpsk);
        let eq = |z: Complex64| EqualizedGrid {
            x_hat: Array2::from_elem((1, 1), z),
            gain: Array2::from_elem((1, 1), 1.0),
        };
        let valid = Array2::from_elem((1, 1), true);
        let l = maxlog_demap(&eq(c(0.5, 0.5)), &qpsk, 0.5, &valid, LlrScaling::Magnitude);
        // Bit 0 (real sign): nearest with b0=1 at distance^2 1.5, with b0=0 at 0.0858.
        assert!((l.llr[[0, 0, 0]] - 2.82843).abs() < 1e-5);
        let l = maxlog_demap(&eq(c(0.0, 0.4)), &qpsk, 0.5, &valid, LlrScaling::Magnitude);
        assert_eq!(l.llr[[0, 0, 0]], 0.0);
        let a = maxlog_demap(&eq(c(0.2, -0.9)), &qpsk, 0.5, &valid, LlrScaling::Magnitude);
        let b = maxlog_demap(&eq(c(0.2, -0.9)), &qpsk, 1.0, &valid, LlrScaling::Magnitude);
        for l in 0..2 {
            assert!((a.llr[[0, 0, l]] - 2.0 * b.llr[[0, 0, l]]).abs() < 1e-12);
        }
    }

    #[test]
    fn genie_noiseless_decodes_exactly() {
        let tti = TtiSpec::default();
        let p = &standard_pilot_configs(&tti).unwrap()[0];
        let qpsk = Constellation::new(Modulation::Qpsk);
        let mut rng = rng_from_seed(8);
        let payload = random_payload(p.num_data() * 2, &mut rng);
        let (tx, bits) = build_tx_grid(&payload, &qpsk, p, &tti).unwrap();
        let ch = ChannelRealization { h: Array3::from_elem((14, 72, 2), c(1.0, 0.0)) };
        let rx = apply_channel(&tx, &ch).unwrap();
        let llr = genie_receive(&rx, &ch, 0.0, p, &qpsk, LlrScaling::Magnitude).unwrap();
        assert_eq!(llr.count_errors(&bits).total_errors(), 0);
        // Transmitted zeros come out with positive LLRs.
        for (i, j) in p.data_positions() {
            for l in 0..2 {
                if bits.bits[[i, j, l]] == 0 {
                    assert!(llr.llr[[i, j, l]] > 0.0);
                }
            }
        }
        // Exact LS + exact noise power reproduces the genie chain.
        let practical = ls_lmmse_receive(&rx, p, &qpsk, LlrScaling::Magnitude).unwrap();
        assert_eq!(practical, llr);
    }

    #[test]
    fn iterative_recovers_phase_and_zero_iters_is_practical() {
        let tti = TtiSpec::default();
        let p = &standard_pilot_configs(&tti).unwrap()[2];
        let qpsk = Constellation::new(Modulation::Qpsk);
        let mut rng = rng_from_seed(21);
        let payload = random_payload(p.num_data() * 2, &mut rng);
        let (tx, _) = build_tx_grid(&payload, &qpsk, p, &tti).unwrap();
        let ch = draw_phase_channel(&tti, &mut rng);
        let rx = apply_channel(&tx, &ch).unwrap();
        let est = iterative_estimate(&rx, p, &qpsk, 40).unwrap();
        let phi = ch.h[[0, 0, 0]].arg();
        for v in est.h_hat.iter() {
            let d = (v.arg() - phi + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
                - std::f64::consts::PI;
            assert!(d.abs() < 1e-6);
        }
        let noisy = add_noise(&rx, 6.0, 1.0, &mut rng).unwrap();
        assert_eq!(
            iterative_receive(&noisy, p, &qpsk, 0, LlrScaling::Magnitude).unwrap(),
            ls_lmmse_receive(&noisy, p, &qpsk, LlrScaling::Magnitude).unwrap()
        );
    }

    proptest! {
        #[test]
        fn equalizer_shrinkage(hr in -3.0f64..3.0, hi in -3.0f64..3.0, h2r in -3.0f64..3.0,
                               yr in -3.0f64..3.0, yi in -3.0f64..3.0, s2 in 0.0f64..2.0) {
            let h = vec![c(hr, hi), c(h2r, 0.5)];
            let y = vec![c(yr, yi), c(yi, yr)];
            let hn: f64 = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let yn: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let est = ChannelEstimate { h_hat: Array3::from_shape_vec((1, 1, 2), h).unwrap(), sigma2_hat: s2 };
            let rx = ResourceGrid::from_array(Array3::from_shape_vec((1, 1, 2), y).unwrap());
            let eq = lmmse_equalize(&rx, &est).unwrap();
            prop_assert!(eq.x_hat[[0, 0]].norm() <= hn * yn / (hn * hn + s2) + 1e-12);
        }
    }
}
