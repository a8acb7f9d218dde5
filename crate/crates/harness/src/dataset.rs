//! Binary dataset files (`.drxd`) written by `gen-data`.
//!
//! ```text
//! DRXD1
//! symbols 14
//! subcarriers 72
//! rx_antennas 2
//! bits_per_symbol 2
//! count 1000
//!
//! <records>
//! ```
//!
//! Each record is little-endian: seed `u64`, snr_db `f64`, doppler_hz `f64`,
//! sigma2 `f64`, pilot index `u32`, the received grid as `(re, im)` `f64`
//! pairs in `(symbol, subcarrier, antenna)` order, the true channel in the
//! same layout, then one byte per label bit `(symbol, subcarrier, bit)` and
//! one validity byte per RE.

use crate::data::{generate_tti, Scenario, Tti};
use crate::error::{invalid, Result};
use deeprx_core::{BitGrid, ChannelRealization, Complex64, ResourceGrid};
use ndarray::{Array2, Array3};
use std::io::{BufWriter, Write};
use std::path::Path;

pub const DATASET_MAGIC: &str = "DRXD1";

fn write_grid(out: &mut impl Write, values: &Array3<Complex64>) -> std::io::Result<()> {
    for v in values.iter() {
        out.write_all(&v.re.to_le_bytes())?;
        out.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

/// Writes the TTIs with the given seeds.
pub fn write_dataset(path: &Path, scenario: &Scenario, seeds: &[u64]) -> Result<()> {
    let t = scenario.tti;
    let b = scenario.constellation.bits_per_symbol();
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    write!(
        out,
        "{DATASET_MAGIC}\nsymbols {}\nsubcarriers {}\nrx_antennas {}\nbits_per_symbol {b}\ncount {}\n\n",
        t.symbols,
        t.subcarriers,
        t.rx_antennas,
        seeds.len()
    )?;
    for &seed in seeds {
        let tti = generate_tti(scenario, seed)?;
        out.write_all(&tti.seed.to_le_bytes())?;
        out.write_all(&tti.snr_db.to_le_bytes())?;
        out.write_all(&tti.doppler_hz.to_le_bytes())?;
        out.write_all(&tti.sigma2.to_le_bytes())?;
        out.write_all(&(tti.pilot_index as u32).to_le_bytes())?;
        write_grid(&mut out, &tti.rx.values)?;
        write_grid(&mut out, &tti.channel.h)?;
        out.write_all(tti.bits.bits.as_slice().expect("standard layout"))?;
        let valid: Vec<u8> = tti.bits.valid.iter().map(|&v| u8::from(v)).collect();
        out.write_all(&valid)?;
    }
    out.flush()?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return invalid("dataset file is truncated");
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }

    fn grid(&mut self, dims: (usize, usize, usize)) -> Result<Array3<Complex64>> {
        let n = dims.0 * dims.1 * dims.2;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            let re = self.f64()?;
            v.push(Complex64::new(re, self.f64()?));
        }
        Ok(Array3::from_shape_vec(dims, v).expect("shape"))
    }
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<Vec<Tti>> {
    let bytes = std::fs::read(path)?;
    let split = bytes.windows(2).position(|w| w == b"\n\n").ok_or_else(|| crate::Error::InvalidArgument("dataset header not terminated".into()))?;
    let head = std::str::from_utf8(&bytes[..split]).map_err(|_| crate::Error::InvalidArgument("dataset header is not UTF-8".into()))?;
    let mut lines = head.lines();
    if lines.next() != Some(DATASET_MAGIC) {
        return invalid("not a dataset file");
    }
    let mut field = |name: &str| -> Result<usize> {
        let line = lines.next().unwrap_or_default();
        match line.split_once(' ') {
            Some((k, v)) if k == name => v.parse().map_err(|_| crate::Error::InvalidArgument(format!("bad {name}"))),
            _ => invalid(format!("expected '{name}' in dataset header")),
        }
    };
    let (s, f, nr, b, count) = (field("symbols")?, field("subcarriers")?, field("rx_antennas")?, field("bits_per_symbol")?, field("count")?);
    let mut r = Reader { bytes: &bytes, pos: split + 2 };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let seed = r.u64()?;
        let snr_db = r.f64()?;
        let doppler_hz = r.f64()?;
        let sigma2 = r.f64()?;
        let pilot_index = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes")) as usize;
        let rx = ResourceGrid::from_array(r.grid((s, f, nr))?);
        let channel = ChannelRealization { h: r.grid((s, f, nr))? };
        let bits = Array3::from_shape_vec((s, f, b), r.take(s * f * b)?.to_vec()).expect("shape");
        let valid = Array2::from_shape_vec((s, f), r.take(s * f)?.iter().map(|&v| v != 0).collect()).expect("shape");
        out.push(Tti { seed, rx, bits: BitGrid { bits, valid }, channel, sigma2, snr_db, doppler_hz, pilot_index });
    }
    if r.pos != bytes.len() {
        return invalid("trailing bytes after the last record");
    }
    Ok(out)
}
