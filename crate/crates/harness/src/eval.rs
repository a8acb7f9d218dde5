//! Monte Carlo BER evaluation, sweeps and CSV output.

use crate::config::RunConfig;
use crate::data::{generate_tti, tti_index, tti_seed, Scenario, Split, Tti};
use crate::error::{invalid, Error, Result};
use crate::receiver::Receiver;
use deeprx_core::BitErrorCount;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

pub const CSV_HEADER: &str = "scenario,receiver,snr_db,doppler_hz,pilot_config,bits,bit_errors,ber";

/// One row of a BER report.
#[derive(Debug, Clone, PartialEq)]
pub struct BerRecord {
    pub scenario: String,
    pub receiver: String,
    pub snr_db: f64,
    /// Upper end of the Doppler range the TTIs were drawn from.
    pub doppler_hz: f64,
    pub pilot_config: String,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

impl BerRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.scenario, self.receiver, self.snr_db, self.doppler_hz, self.pilot_config, self.bits, self.bit_errors, self.ber
        )
    }
}

/// Runs `f` on a pool of `threads` workers (0 = rayon default).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidState(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// SNR bins of a scenario: `(lower edges, width)`. A fixed SNR is one bin.
fn snr_bins(cfg: &RunConfig) -> (Vec<f64>, f64) {
    let [lo, hi] = cfg.noise.snr_db;
    if lo == hi {
        return (vec![lo], 0.0);
    }
    let w = cfg.eval.snr_bin_db;
    let n = ((hi - lo) / w).ceil().max(1.0) as usize;
    ((0..n).map(|k| lo + k as f64 * w).collect(), w)
}

fn bin_of(snr: f64, lo: f64, width: f64, n: usize) -> usize {
    if width == 0.0 {
        return 0;
    }
    (((snr - lo) / width).floor().max(0.0) as usize).min(n - 1)
}

/// Per-SNR-bin error counts of a receiver on `n_ttis` test TTIs.
/// Every receiver sees the same TTIs for the same scenario and seed.
pub fn count_errors(receiver: &Receiver, scenario: &Scenario, n_ttis: u64) -> Result<Vec<BitErrorCount>> {
    let cfg = &scenario.config;
    let (edges, width) = snr_bins(cfg);
    let chunk = cfg.eval.chunk;
    let n_chunks = n_ttis.div_ceil(chunk);
    let b = scenario.constellation.bits_per_symbol();
    let per_chunk: Vec<Result<Vec<BitErrorCount>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let ttis: Vec<Tti> = (c * chunk..((c + 1) * chunk).min(n_ttis))
                .map(|k| generate_tti(scenario, tti_seed(cfg.seed, tti_index(Split::Test, k))))
                .collect::<Result<_>>()?;
            let llrs = receiver.receive(scenario, &ttis)?;
            let mut bins = vec![BitErrorCount::new(b); edges.len()];
            for (t, llr) in ttis.iter().zip(&llrs) {
                bins[bin_of(t.snr_db, edges[0], width, edges.len())].merge(&llr.count_errors(&t.bits));
            }
            Ok(bins)
        })
        .collect();
    let mut total = vec![BitErrorCount::new(b); edges.len()];
    for bins in per_chunk {
        for (acc, c) in total.iter_mut().zip(bins?) {
            acc.merge(&c);
        }
    }
    Ok(total)
}

/// BER records, one per non-empty SNR bin (bin centre reported).
pub fn evaluate(receiver: &Receiver, scenario: &Scenario, n_ttis: u64) -> Result<Vec<BerRecord>> {
    let cfg = &scenario.config;
    let (edges, width) = snr_bins(cfg);
    let counts = count_errors(receiver, scenario, n_ttis)?;
    Ok(edges
        .iter()
        .zip(&counts)
        .filter(|(_, c)| c.total_bits() > 0)
        .map(|(&lo, c)| BerRecord {
            scenario: cfg.name.clone(),
            receiver: receiver.label().to_string(),
            snr_db: if width == 0.0 { lo } else { (lo + width / 2.0).min(cfg.noise.snr_db[1]) },
            doppler_hz: cfg.channel.doppler_hz[1],
            pilot_config: scenario.pilot_label(),
            bits: c.total_bits(),
            bit_errors: c.total_errors(),
            ber: c.ber(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Snr,
    Doppler,
    Pilot,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "snr" => Ok(Axis::Snr),
            "doppler" => Ok(Axis::Doppler),
            "pilot" => Ok(Axis::Pilot),
            _ => invalid(format!("unknown sweep axis '{s}'")),
        }
    }
}

/// Scenario of every point along an axis, in report order.
pub fn sweep_points(cfg: &RunConfig, axis: Axis) -> Result<Vec<RunConfig>> {
    let points: Vec<RunConfig> = match axis {
        Axis::Snr => {
            let mut v = cfg.eval.snr_db.clone();
            v.sort_by(f64::total_cmp);
            v.into_iter().map(|s| cfg.with_snr(s)).collect()
        }
        Axis::Doppler => {
            let mut v = cfg.eval.doppler_hz.clone();
            v.sort_by(f64::total_cmp);
            v.into_iter().map(|d| cfg.with_snr(cfg.eval.fixed_snr_db).with_doppler(d)).collect()
        }
        Axis::Pilot => cfg.eval.pilots.iter().map(|p| cfg.with_snr(cfg.eval.fixed_snr_db).with_pilots(p)).collect(),
    };
    if points.is_empty() {
        return invalid("sweep axis has no values");
    }
    Ok(points)
}

/// Cross product of receivers and axis points; rows ordered by receiver,
/// then axis value.
pub fn sweep(cfg: &RunConfig, axis: Axis, receivers: &[Receiver]) -> Result<Vec<BerRecord>> {
    let scenarios = sweep_points(cfg, axis)?.iter().map(Scenario::new).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for r in receivers {
        for s in &scenarios {
            rows.extend(evaluate(r, s, cfg.eval.ttis)?);
        }
    }
    Ok(rows)
}

pub fn to_csv(records: &[BerRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{}", r.csv_row());
    }
    out
}

/// Writes `text` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_csv(path: &Path, records: &[BerRecord]) -> Result<()> {
    write_atomic(path, &to_csv(records))
}
