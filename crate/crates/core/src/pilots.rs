//! Pilot (DMRS-like) layouts.

use crate::error::{invalid, Result};
use crate::rng::{name_seed, rng_from_seed};
use crate::tti::TtiSpec;
use num_complex::Complex64;
use rand::Rng;
use std::f64::consts::FRAC_1_SQRT_2;

/// A set of pilot resource elements `P` with their known unit-modulus values.
/// Every other RE of the grid belongs to the data set `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotConfig {
    name: String,
    symbols: usize,
    subcarriers: usize,
    /// Dense `S x F` lookup, row-major.
    cells: Vec<Option<Complex64>>,
    positions: Vec<(usize, usize)>,
}

impl PilotConfig {
    pub fn new(
        name: impl Into<String>,
        tti: &TtiSpec,
        entries: impl IntoIterator<Item = ((usize, usize), Complex64)>,
    ) -> Result<Self> {
        let (s, f) = (tti.symbols, tti.subcarriers);
        let mut cells = vec![None; s * f];
        for ((i, j), v) in entries {
            if i >= s || j >= f {
                return invalid(format!("pilot ({i},{j}) outside {s}x{f} grid"));
            }
            if (v.norm() - 1.0).abs() > 1e-12 {
                return invalid(format!("pilot ({i},{j}) has modulus {}", v.norm()));
            }
            if cells[i * f + j].replace(v).is_some() {
                return invalid(format!("duplicate pilot at ({i},{j})"));
            }
        }
        let positions = (0..s * f).filter(|&k| cells[k].is_some()).map(|k| (k / f, k % f)).collect();
        Ok(Self { name: name.into(), symbols: s, subcarriers: f, cells, positions })
    }

    /// Pilots on the given `(symbol, subcarrier)` cells with values drawn from
    /// a QPSK alphabet by a generator seeded from the configuration name.
    pub fn with_seeded_values(
        name: &str,
        tti: &TtiSpec,
        positions: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut rng = rng_from_seed(name_seed(name));
        let entries: Vec<_> = positions
            .into_iter()
            .map(|p| {
                let q: u8 = rng.random_range(0..4);
                let re = if q & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                let im = if q & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
                (p, Complex64::new(re, im))
            })
            .collect();
        Self::new(name, tti, entries)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.symbols, self.subcarriers)
    }

    pub fn value(&self, i: usize, j: usize) -> Option<Complex64> {
        self.cells[i * self.subcarriers + j]
    }

    pub fn is_pilot(&self, i: usize, j: usize) -> bool {
        self.value(i, j).is_some()
    }

    /// Pilot positions in row-major order.
    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    /// Data positions in row-major (time-major) order.
    pub fn data_positions(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let f = self.subcarriers;
        (0..self.symbols * f).filter(move |&k| self.cells[k].is_none()).map(move |k| (k / f, k % f))
    }

    pub fn num_pilots(&self) -> usize {
        self.positions.len()
    }

    pub fn num_data(&self) -> usize {
        self.symbols * self.subcarriers - self.positions.len()
    }

    /// Distinct OFDM symbols carrying at least one pilot, ascending.
    pub fn pilot_symbols(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.positions.iter().map(|&(i, _)| i).collect();
        v.dedup();
        v
    }

    pub fn matches(&self, tti: &TtiSpec) -> bool {
        self.symbols == tti.symbols && self.subcarriers == tti.subcarriers
    }
}

pub const ONE_PILOT: &str = "one-pilot";
pub const TWO_PILOT: &str = "two-pilot";
pub const SINGLE_RE: &str = "single-RE";

/// The canonical layouts: pilots on symbol 2 (and 11) on every even
/// subcarrier, plus a single pilot RE at the centre subcarrier of symbol 2.
pub fn standard_pilot_configs(tti: &TtiSpec) -> Result<Vec<PilotConfig>> {
    if tti.subcarriers < 2 {
        return invalid("standard pilot layouts need F >= 2");
    }
    if tti.symbols < 12 {
        return invalid(format!("standard pilot layouts need S >= 12, got {}", tti.symbols));
    }
    let comb = |i: usize| (0..tti.subcarriers).step_by(2).map(move |j| (i, j));
    Ok(vec![
        PilotConfig::with_seeded_values(ONE_PILOT, tti, comb(2))?,
        PilotConfig::with_seeded_values(TWO_PILOT, tti, comb(2).chain(comb(11)))?,
        PilotConfig::with_seeded_values(SINGLE_RE, tti, [(2, tti.subcarriers / 2)])?,
    ])
}

pub fn standard_pilot_config(name: &str, tti: &TtiSpec) -> Result<PilotConfig> {
    standard_pilot_configs(tti)?
        .into_iter()
        .find(|p| p.name().eq_ignore_ascii_case(name))
        .ok_or_else(|| crate::Error::InvalidArgument(format!("unknown pilot config '{name}'")))
}
