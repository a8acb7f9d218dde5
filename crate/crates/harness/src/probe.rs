//! Manipulated-data probes of a trained network.

use crate::config::RunConfig;
use crate::data::{Payload, Scenario};
use crate::error::{invalid, Error, Result};
use crate::eval::{count_errors, evaluate, BerRecord};
use crate::receiver::{Precision, Receiver, ReceiverSpec};
use deeprx_core::BitErrorCount;
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeKind {
    QuadrantQpsk,
    QuadrantQam16,
    PhaseChannel,
}

impl FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadrant_qpsk" => Ok(ProbeKind::QuadrantQpsk),
            "quadrant_qam16" => Ok(ProbeKind::QuadrantQam16),
            "phase_channel" => Ok(ProbeKind::PhaseChannel),
            _ => invalid(format!("unknown probe '{s}'")),
        }
    }
}

/// Phase (quadrant) bits and amplitude bits of a 16-QAM label.
pub const PHASE_BITS: [usize; 2] = [0, 1];
pub const AMPLITUDE_BITS: [usize; 2] = [2, 3];

/// Error counts on quadrant-constant grids split into phase and amplitude
/// bit planes: `(phase, amplitude)` as `(bits, errors)` pairs.
pub fn plane_split(receiver: &Receiver, cfg: &RunConfig, n_ttis: u64) -> Result<((u64, u64), (u64, u64))> {
    let scenario = Scenario::new(cfg)?.with_payload(Payload::Quadrant);
    let mut total = BitErrorCount::default();
    for c in count_errors(receiver, &scenario, n_ttis)? {
        total.merge(&c);
    }
    Ok((total.planes(PHASE_BITS), total.planes(AMPLITUDE_BITS)))
}

fn record(cfg: &RunConfig, scenario: &str, receiver: &str, pilot: String, (bits, errors): (u64, u64)) -> BerRecord {
    BerRecord {
        scenario: scenario.to_string(),
        receiver: receiver.to_string(),
        snr_db: cfg.noise.snr_db[0],
        doppler_hz: cfg.channel.doppler_hz[1],
        pilot_config: pilot,
        bits,
        bit_errors: errors,
        ber: errors as f64 / bits.max(1) as f64,
    }
}

fn neural(checkpoint: Option<&Path>, precision: Precision) -> Result<Receiver> {
    let path = checkpoint.ok_or_else(|| Error::InvalidState("probe needs a trained checkpoint".into()))?;
    ReceiverSpec::DeepRx(path.to_path_buf()).build(precision)
}

/// Runs a probe and returns its BER rows. Quadrant probes need a checkpoint;
/// the phase-channel probe includes the network only when one is given.
pub fn probe(cfg: &RunConfig, kind: ProbeKind, checkpoint: Option<&Path>, precision: Precision) -> Result<Vec<BerRecord>> {
    let n = cfg.eval.ttis;
    let mut rows = Vec::new();
    match kind {
        ProbeKind::QuadrantQpsk | ProbeKind::QuadrantQam16 => {
            let modulation = if kind == ProbeKind::QuadrantQpsk { "qpsk" } else { "qam16" };
            let mut c = cfg.with_snr(cfg.eval.fixed_snr_db);
            c.modulation = modulation.into();
            let receivers = [neural(checkpoint, precision)?, Receiver::LsLmmse];
            let base = Scenario::new(&c)?;
            for r in &receivers {
                for (payload, tag) in [(Payload::Random, "regular"), (Payload::Quadrant, "quadrant")] {
                    let s = base.clone().with_payload(payload);
                    for mut rec in evaluate(r, &s, n)? {
                        rec.scenario = format!("{}/{modulation}/{tag}", c.name);
                        rows.push(rec);
                    }
                }
                if kind == ProbeKind::QuadrantQam16 {
                    let (phase, amplitude) = plane_split(r, &c, n)?;
                    let pilot = base.pilot_label();
                    rows.push(record(&c, &format!("{}/qam16/phase-bits", c.name), r.label(), pilot.clone(), phase));
                    rows.push(record(&c, &format!("{}/qam16/amplitude-bits", c.name), r.label(), pilot, amplitude));
                }
            }
        }
        ProbeKind::PhaseChannel => {
            let mut c = cfg.clone();
            c.channel.mode = "phase_only".into();
            c.pilots = vec!["single-RE".into()];
            let mut receivers = Vec::new();
            match checkpoint {
                Some(p) => receivers.push(ReceiverSpec::DeepRx(p.to_path_buf()).build(precision)?),
                None => log::warn!("no checkpoint given; phase_channel probe runs the classical receivers only"),
            }
            receivers.extend([Receiver::Iterative, Receiver::LsLmmse, Receiver::GenieLmmse]);
            let mut snrs = c.eval.snr_db.clone();
            snrs.sort_by(f64::total_cmp);
            for r in &receivers {
                for &snr in &snrs {
                    let s = Scenario::new(&c.with_snr(snr))?;
                    rows.extend(evaluate(r, &s, n)?.into_iter().map(|mut rec| {
                        rec.scenario = format!("{}/phase-channel", c.name);
                        rec
                    }));
                }
            }
        }
    }
    Ok(rows)
}
