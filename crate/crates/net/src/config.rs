use crate::error::{Error, Result};
use deeprx_core::B_MAX;
use deeprx_nn::pad_before;

/// One preactivation residual block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSpec {
    pub channels: usize,
    /// `(d_S, d_F)`.
    pub dilation: (usize, usize),
}

/// The pilot-only network with a per-RE head.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RestrictedSpec {
    pub head_width: usize,
    pub head_layers: usize,
    /// Feed the deep network the full received grid instead of pilots only.
    pub switch_closed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeepRxConfig {
    pub name: String,
    /// Output channels of the input convolution.
    pub stem_channels: usize,
    pub blocks: Vec<BlockSpec>,
    /// Depthwise filter size `(f_S, f_F)` inside the blocks.
    pub filter: (usize, usize),
    pub depth_multiplier: usize,
    pub use_coordinate_channels: bool,
    pub restricted: Option<RestrictedSpec>,
    pub outputs: usize,
}

const CLOSED_SUFFIX: &str = "-closed";

const D1: (usize, usize) = (1, 1);
const D23: (usize, usize) = (2, 3);
const D36: (usize, usize) = (3, 6);

/// Dilation schedule of the 11-block network.
const DIL11: [(usize, usize); 11] = [D1, D1, D23, D23, D23, D36, D23, D23, D23, D1, D1];

fn blocks(channels: &[usize], dilations: &[(usize, usize)]) -> Vec<BlockSpec> {
    channels.iter().zip(dilations).map(|(&channels, &dilation)| BlockSpec { channels, dilation }).collect()
}

pub const PRESETS: &[&str] = &[
    "deeprx-11",
    "11-S-DM1",
    "11-S1",
    "11-S2",
    "11-S3",
    "11-S4",
    "11-M-ND",
    "13-M",
    "5-M",
    "3-M",
    "widefield",
    "widefield-S4",
    "restricted-11R",
    "restricted-11-S4",
];

impl DeepRxConfig {
    fn plain(name: &str, channels: &[usize], dilations: &[(usize, usize)]) -> Self {
        Self {
            name: name.to_string(),
            stem_channels: channels[0],
            blocks: blocks(channels, dilations),
            filter: (3, 3),
            depth_multiplier: 2,
            use_coordinate_channels: false,
            restricted: None,
            outputs: B_MAX,
        }
    }

    /// Named architecture. Restricted presets also accept a `-closed` suffix.
    pub fn preset(name: &str) -> Result<Self> {
        if let Some(base) = name.strip_suffix(CLOSED_SUFFIX) {
            let cfg = Self::preset(base)?;
            if cfg.restricted.is_some() {
                return Ok(cfg.with_switch_closed());
            }
        }
        const MAIN: [usize; 11] = [64, 64, 128, 128, 256, 256, 256, 128, 128, 64, 64];
        const S1: [usize; 11] = [64, 64, 128, 128, 128, 128, 128, 128, 128, 64, 64];
        const S2: [usize; 11] = [32, 32, 64, 64, 128, 128, 128, 64, 64, 32, 32];
        const S3: [usize; 11] = [16, 16, 32, 32, 64, 64, 64, 32, 32, 16, 16];
        const S4: [usize; 11] = [32; 11];
        let restricted = RestrictedSpec { head_width: 32, head_layers: 3, switch_closed: false };
        let cfg = match name {
            "deeprx-11" => Self::plain(name, &MAIN, &DIL11),
            "11-S-DM1" => Self { depth_multiplier: 1, ..Self::plain(name, &S1, &DIL11) },
            "11-S1" => Self::plain(name, &S1, &DIL11),
            "11-S2" => Self::plain(name, &S2, &DIL11),
            "11-S3" => Self::plain(name, &S3, &DIL11),
            "11-S4" => Self::plain(name, &S4, &DIL11),
            "11-M-ND" => Self::plain(name, &MAIN, &[D1; 11]),
            "13-M" => Self::plain(
                name,
                &[64, 64, 128, 128, 128, 128, 128, 128, 128, 128, 128, 64, 64],
                &[D1, D1, D23, D23, D23, D36, D36, D36, D23, D23, D23, D1, D1],
            ),
            "5-M" => Self::plain(name, &[192, 256, 256, 256, 192], &[D1, D23, D36, D23, D1]),
            "3-M" => Self::plain(name, &[256, 448, 256], &[D23, D36, D23]),
            "widefield" | "widefield-S4" => {
                let base = if name == "widefield" { &MAIN } else { &S4 };
                let widen = |(s, f): (usize, usize)| match f {
                    1 => (s, 3),
                    3 => (s, 8),
                    _ => (s, 16),
                };
                let dil: Vec<_> = DIL11.iter().map(|&d| widen(d)).collect();
                Self { filter: (10, 3), use_coordinate_channels: true, ..Self::plain(name, base, &dil) }
            }
            "restricted-11R" => Self { restricted: Some(restricted), ..Self::plain(name, &MAIN, &DIL11) },
            "restricted-11-S4" => Self { restricted: Some(restricted), ..Self::plain(name, &S4, &DIL11) },
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown architecture '{name}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same architecture with the restricted network's switch closed; the
    /// name gains a `-closed` suffix.
    pub fn with_switch_closed(mut self) -> Self {
        if let Some(r) = self.restricted.as_mut() {
            if !r.switch_closed {
                r.switch_closed = true;
                self.name.push_str(CLOSED_SUFFIX);
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("config '{}': {m}", self.name)));
        if self.blocks.is_empty() {
            return bad("no residual blocks".into());
        }
        if self.stem_channels == 0 || self.blocks.iter().any(|b| b.channels == 0) {
            return bad("zero-width layer".into());
        }
        if self.blocks.iter().any(|b| b.dilation.0 == 0 || b.dilation.1 == 0) {
            return bad("dilation must be positive".into());
        }
        if self.filter.0 == 0 || self.filter.1 == 0 {
            return bad("filter must be positive".into());
        }
        if !(1..=2).contains(&self.depth_multiplier) {
            return bad(format!("depth multiplier {}", self.depth_multiplier));
        }
        if self.outputs == 0 || self.outputs > B_MAX {
            return bad(format!("{} outputs", self.outputs));
        }
        if let Some(r) = &self.restricted {
            if r.head_width == 0 || r.head_layers == 0 {
                return bad("empty head".into());
            }
        }
        Ok(())
    }

    /// Input channels for `n_rx` antennas.
    pub fn input_channels(&self, n_rx: usize) -> usize {
        2 * (2 * n_rx + 1) + if self.use_coordinate_channels { 2 } else { 0 }
    }

    /// Reach of the receptive field along `(S, F)`: output `(i, j)` depends
    /// on inputs `(i + a, j + b)` with `-lo <= a, b <= hi` per axis, returned
    /// as `((lo_S, hi_S), (lo_F, hi_F))`.
    pub fn receptive_field(&self) -> ((usize, usize), (usize, usize)) {
        let span = |k: usize, d: usize| {
            let before = pad_before(k, d);
            (before, d * (k - 1) - before)
        };
        let mut s = span(self.filter.0, 1);
        let mut f = span(self.filter.1, 1);
        for b in &self.blocks {
            for _ in 0..2 {
                let (a, z) = span(self.filter.0, b.dilation.0);
                s = (s.0 + a, s.1 + z);
                let (a, z) = span(self.filter.1, b.dilation.1);
                f = (f.0 + a, f.1 + z);
            }
        }
        (s, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PRESETS {
            let c = DeepRxConfig::preset(name).unwrap();
            assert_eq!(c.name, *name);
        }
        assert!(DeepRxConfig::preset("11-XXL").is_err());
        let w = DeepRxConfig::preset("widefield").unwrap();
        assert_eq!(w.filter, (10, 3));
        assert_eq!(w.blocks.iter().map(|b| b.dilation.1).max(), Some(16));
        assert!(w.use_coordinate_channels);
        let main = DeepRxConfig::preset("deeprx-11").unwrap();
        let ch: Vec<_> = main.blocks.iter().map(|b| b.channels).collect();
        assert_eq!(ch, [64, 64, 128, 128, 256, 256, 256, 128, 128, 64, 64]);
        let closed = DeepRxConfig::preset("restricted-11-S4-closed").unwrap();
        assert!(closed.restricted.unwrap().switch_closed);
        assert_eq!(closed.name, "restricted-11-S4-closed");
        assert!(DeepRxConfig::preset("11-S4-closed").is_err());
    }

    #[test]
    fn input_channel_accounting() {
        let c = DeepRxConfig::preset("11-S4").unwrap();
        for (nr, expect) in [(1, 6), (2, 10), (4, 18)] {
            assert_eq!(c.input_channels(nr), expect);
        }
        assert_eq!(DeepRxConfig::preset("widefield").unwrap().input_channels(2), 12);
    }
}
