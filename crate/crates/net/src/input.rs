//! Network input assembly.
//!
//! Channel layout for `N_r` antennas (`N_c = 2 N_r + 1`):
//! `[Re Y (N_r), Re X_p, Re H_r (N_r), Im Y (N_r), Im X_p, Im H_r (N_r)]`,
//! optionally followed by the normalized time index `i / (S - 1)` and
//! frequency index `j / (F - 1)`. `X_p` and `H_r = Y X_p^*` are zero off the
//! pilot REs.

use crate::error::{Error, Result};
use deeprx_core::{Complex64, PilotConfig, ResourceGrid};

/// Real `S x F x C` input of one TTI, channels-last.
#[derive(Debug, Clone, PartialEq)]
pub struct InputTensor {
    pub symbols: usize,
    pub subcarriers: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl InputTensor {
    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.subcarriers + j) * self.channels + c]
    }

    fn set(&mut self, i: usize, j: usize, c: usize, v: f64) {
        self.data[(i * self.subcarriers + j) * self.channels + c] = v;
    }
}

/// Channel indices of the layout for `n_rx` antennas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n_rx: usize,
}

impl Layout {
    pub fn half(&self) -> usize {
        2 * self.n_rx + 1
    }
    pub fn re_y(&self, r: usize) -> usize {
        r
    }
    pub fn re_xp(&self) -> usize {
        self.n_rx
    }
    pub fn re_h(&self, r: usize) -> usize {
        self.n_rx + 1 + r
    }
    pub fn im_y(&self, r: usize) -> usize {
        self.half() + r
    }
    pub fn im_xp(&self) -> usize {
        self.half() + self.n_rx
    }
    pub fn im_h(&self, r: usize) -> usize {
        self.half() + self.n_rx + 1 + r
    }
    pub fn coord_time(&self) -> usize {
        2 * self.half()
    }
    pub fn coord_freq(&self) -> usize {
        2 * self.half() + 1
    }
}

fn coord(k: usize, n: usize) -> f64 {
    if n > 1 {
        k as f64 / (n - 1) as f64
    } else {
        0.0
    }
}

/// Builds the input of one TTI. With `pilots_only`, `Y` is zeroed off the
/// pilot REs.
pub fn build_input(rx: &ResourceGrid, pilots: &PilotConfig, coordinates: bool, pilots_only: bool) -> Result<InputTensor> {
    let (s, f) = pilots.dims();
    if rx.symbols() != s || rx.subcarriers() != f {
        return Err(Error::InvalidArgument(format!(
            "received grid {}x{} does not match pilot config '{}' ({s}x{f})",
            rx.symbols(),
            rx.subcarriers(),
            pilots.name()
        )));
    }
    let nr = rx.ports();
    let lay = Layout { n_rx: nr };
    let channels = 2 * lay.half() + if coordinates { 2 } else { 0 };
    let mut z = InputTensor { symbols: s, subcarriers: f, channels, data: vec![0.0; s * f * channels] };
    for i in 0..s {
        for j in 0..f {
            let xp = pilots.value(i, j);
            if !pilots_only || xp.is_some() {
                for r in 0..nr {
                    let y = rx.values[[i, j, r]];
                    z.set(i, j, lay.re_y(r), y.re);
                    z.set(i, j, lay.im_y(r), y.im);
                }
            }
            if let Some(x) = xp {
                z.set(i, j, lay.re_xp(), x.re);
                z.set(i, j, lay.im_xp(), x.im);
                for r in 0..nr {
                    let h: Complex64 = rx.values[[i, j, r]] * x.conj();
                    z.set(i, j, lay.re_h(r), h.re);
                    z.set(i, j, lay.im_h(r), h.im);
                }
            }
            if coordinates {
                z.set(i, j, lay.coord_time(), coord(i, s));
                z.set(i, j, lay.coord_freq(), coord(j, f));
            }
        }
    }
    Ok(z)
}

/// The real and imaginary parts of `Y` only: `[Re Y (N_r), Im Y (N_r)]`.
pub fn data_channels(rx: &ResourceGrid) -> InputTensor {
    let (s, f, nr) = rx.values.dim();
    let mut z = InputTensor { symbols: s, subcarriers: f, channels: 2 * nr, data: vec![0.0; s * f * 2 * nr] };
    for i in 0..s {
        for j in 0..f {
            for r in 0..nr {
                let y = rx.values[[i, j, r]];
                z.set(i, j, r, y.re);
                z.set(i, j, nr + r, y.im);
            }
        }
    }
    z
}
