//! Receivers that can be evaluated by name.

use crate::data::{Scenario, Tti};
use crate::error::{invalid, Error, Result};
use deeprx_core::{genie_receive, iterative_receive, ls_lmmse_receive, LlrGrid, LlrScaling};
use deeprx_net::{load_checkpoint, DeepRx};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Arithmetic used for network inference and training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            _ => invalid(format!("unknown precision '{s}' (expected f32 or f64)")),
        }
    }
}

/// A trained network in either precision.
#[derive(Debug, Clone)]
pub enum Network {
    F32(DeepRx<f32>),
    F64(DeepRx<f64>),
}

impl Network {
    pub fn load(path: &Path, precision: Precision) -> Result<Self> {
        Ok(match precision {
            Precision::F32 => Network::F32(load_checkpoint(path)?),
            Precision::F64 => Network::F64(load_checkpoint(path)?),
        })
    }

    pub fn is_restricted(&self) -> bool {
        match self {
            Network::F32(m) => m.is_restricted(),
            Network::F64(m) => m.is_restricted(),
        }
    }

    pub fn receive(&self, scenario: &Scenario, ttis: &[Tti]) -> Result<Vec<LlrGrid>> {
        let samples: Vec<_> = ttis.iter().map(|t| (&t.rx, t.pilots(scenario))).collect();
        Ok(match self {
            Network::F32(m) => m.receive(&samples, &scenario.constellation)?,
            Network::F64(m) => m.receive(&samples, &scenario.constellation)?,
        })
    }
}

/// Receiver names: `ls-lmmse`, `genie-lmmse`, `iterative`,
/// `deeprx:<checkpoint>` and `restricted:<checkpoint>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReceiverSpec {
    LsLmmse,
    GenieLmmse,
    Iterative,
    DeepRx(PathBuf),
    Restricted(PathBuf),
}

impl FromStr for ReceiverSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_prefix("deeprx:") {
            return Ok(ReceiverSpec::DeepRx(PathBuf::from(p)));
        }
        if let Some(p) = s.strip_prefix("restricted:") {
            return Ok(ReceiverSpec::Restricted(PathBuf::from(p)));
        }
        match s {
            "ls-lmmse" => Ok(ReceiverSpec::LsLmmse),
            "genie-lmmse" => Ok(ReceiverSpec::GenieLmmse),
            "iterative" => Ok(ReceiverSpec::Iterative),
            _ => invalid(format!("unknown receiver '{s}'")),
        }
    }
}

impl ReceiverSpec {
    /// Name used in reports; checkpoint paths are not included.
    pub fn label(&self) -> &'static str {
        match self {
            ReceiverSpec::LsLmmse => "ls-lmmse",
            ReceiverSpec::GenieLmmse => "genie-lmmse",
            ReceiverSpec::Iterative => "iterative",
            ReceiverSpec::DeepRx(_) => "deeprx",
            ReceiverSpec::Restricted(_) => "restricted",
        }
    }

    pub fn build(&self, precision: Precision) -> Result<Receiver> {
        match self {
            ReceiverSpec::LsLmmse => Ok(Receiver::LsLmmse),
            ReceiverSpec::GenieLmmse => Ok(Receiver::GenieLmmse),
            ReceiverSpec::Iterative => Ok(Receiver::Iterative),
            ReceiverSpec::DeepRx(p) | ReceiverSpec::Restricted(p) => {
                if !p.exists() {
                    return Err(Error::InvalidState(format!("checkpoint {} not found", p.display())));
                }
                let net = Network::load(p, precision)?;
                let want_restricted = matches!(self, ReceiverSpec::Restricted(_));
                if net.is_restricted() != want_restricted {
                    return invalid(format!(
                        "checkpoint {} {} a restricted network",
                        p.display(),
                        if want_restricted { "is not" } else { "is" }
                    ));
                }
                Ok(Receiver::Neural { label: self.label(), net: Box::new(net) })
            }
        }
    }
}

/// A ready-to-run receiver.
#[derive(Debug, Clone)]
pub enum Receiver {
    LsLmmse,
    GenieLmmse,
    Iterative,
    Neural { label: &'static str, net: Box<Network> },
}

impl Receiver {
    pub fn label(&self) -> &'static str {
        match self {
            Receiver::LsLmmse => "ls-lmmse",
            Receiver::GenieLmmse => "genie-lmmse",
            Receiver::Iterative => "iterative",
            Receiver::Neural { label, .. } => label,
        }
    }

    /// LLRs for a chunk of TTIs, in order.
    pub fn receive(&self, scenario: &Scenario, ttis: &[Tti]) -> Result<Vec<LlrGrid>> {
        let c = &scenario.constellation;
        let scaling: LlrScaling = scenario.config.scaling()?;
        let iters = scenario.config.iterative_iters;
        match self {
            Receiver::Neural { net, .. } => net.receive(scenario, ttis),
            _ => ttis
                .iter()
                .map(|t| {
                    let p = t.pilots(scenario);
                    Ok(match self {
                        Receiver::LsLmmse => ls_lmmse_receive(&t.rx, p, c, scaling)?,
                        Receiver::GenieLmmse => genie_receive(&t.rx, &t.channel, t.sigma2, p, c, scaling)?,
                        Receiver::Iterative => iterative_receive(&t.rx, p, c, iters, scaling)?,
                        Receiver::Neural { .. } => unreachable!(),
                    })
                })
                .collect(),
        }
    }
}
