//! Orchestration for the receiver laboratory: TTI generation, training,
//! BER evaluation, sweeps, probes and the gradient-check report.

pub mod config;
pub mod data;
pub mod dataset;
mod error;
pub mod eval;
pub mod probe;
pub mod receiver;
pub mod train;

pub use config::RunConfig;
pub use data::{generate_tti, DatasetSpec, Payload, Scenario, Split, Tti};
pub use error::{Error, Result};
pub use eval::{count_errors, evaluate, sweep, to_csv, write_csv, Axis, BerRecord, CSV_HEADER};
pub use probe::{probe, ProbeKind};
pub use receiver::{Network, Precision, Receiver, ReceiverSpec};
pub use train::{train, TrainOptions, TrainOutcome};

use deeprx_nn::gradcheck::{fault_target, run_suite, TOLERANCE};
use std::fmt::Write as _;

/// Finite-difference report, one line per layer kind, and whether all
/// kinds passed. `fault` names a layer whose backward pass is corrupted.
pub fn gradcheck_report(fault: Option<&str>) -> Result<(String, bool)> {
    let target = match fault {
        Some(name) => Some(fault_target(name).ok_or_else(|| Error::InvalidArgument(format!("unknown layer '{name}'")))?),
        None => None,
    };
    let results = run_suite(target)?;
    let mut out = String::new();
    for r in &results {
        let _ = writeln!(
            out,
            "{:<20} max_rel_error {:.3e} ({} entries) {}",
            r.layer,
            r.max_rel_error,
            r.entries_checked,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let ok = results.iter().all(|r| r.passed());
    let _ = writeln!(out, "tolerance {TOLERANCE:e}: {}", if ok { "all layers pass" } else { "FAILED" });
    Ok((out, ok))
}
