use crate::error::{invalid, Result};

/// Output bit planes of the neural receiver; enough for 256-QAM.
pub const B_MAX: usize = 8;

/// Dimensions of one transmission time interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TtiSpec {
    /// OFDM symbols in time (`S`).
    pub symbols: usize,
    /// Subcarriers (`F`).
    pub subcarriers: usize,
    /// Receive antennas (`N_r`).
    pub rx_antennas: usize,
}

impl TtiSpec {
    pub fn new(symbols: usize, subcarriers: usize, rx_antennas: usize) -> Result<Self> {
        if symbols == 0 || subcarriers == 0 || rx_antennas == 0 {
            return invalid(format!(
                "TTI dimensions must be positive, got S={symbols} F={subcarriers} Nr={rx_antennas}"
            ));
        }
        Ok(Self { symbols, subcarriers, rx_antennas })
    }

    pub fn resource_elements(&self) -> usize {
        self.symbols * self.subcarriers
    }
}

impl Default for TtiSpec {
    fn default() -> Self {
        Self { symbols: 14, subcarriers: 72, rx_antennas: 2 }
    }
}

