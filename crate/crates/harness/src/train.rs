//! Training loop with validation, logging and checkpoints.

use crate::config::RunConfig;
use crate::data::{generate_tti, DatasetSpec, Scenario, Tti};
use crate::error::{Error, Result};
use crate::eval::write_atomic;
use crate::receiver::Precision;
use deeprx_core::rng::{derive_seed, rng_from_seed};
use deeprx_net::{load_into, loss_targets, save_checkpoint, DeepRx, DeepRxConfig};
use deeprx_nn::{AdamW, LrSchedule, Mode, Scalar, Tape, BN_MOMENTUM};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

const INIT_STREAM: u64 = 0x696e_6974;

pub const FINAL_CHECKPOINT: &str = "final.drx";
pub const BEST_CHECKPOINT: &str = "best.drx";
pub const LAST_CHECKPOINT: &str = "last.drx";
pub const LOG_FILE: &str = "train_log.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub log: Vec<LogRecord>,
    /// `(iteration, validation loss)` at every validation point.
    pub validation: Vec<(usize, f64)>,
    pub final_checkpoint: PathBuf,
    pub best_checkpoint: PathBuf,
    pub best_validation_loss: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub precision: Precision,
    /// Initial parameters; the schedule still runs from iteration 0.
    pub resume: Option<PathBuf>,
}

pub fn train(cfg: &RunConfig, out_dir: &Path, options: &TrainOptions) -> Result<TrainOutcome> {
    match options.precision {
        Precision::F32 => train_typed::<f32>(cfg, out_dir, options.resume.as_deref()),
        Precision::F64 => train_typed::<f64>(cfg, out_dir, options.resume.as_deref()),
    }
}

/// The untrained network a run starts from.
pub fn initial_model<T: Scalar>(cfg: &RunConfig) -> Result<DeepRx<T>> {
    let mut rng = rng_from_seed(derive_seed(cfg.seed, INIT_STREAM, 0));
    Ok(DeepRx::new(DeepRxConfig::preset(&cfg.architecture)?, cfg.tti.rx_antennas, &mut rng)?)
}

/// Masked cross-entropy of a batch with running batch-norm statistics.
fn batch_loss<T: Scalar>(model: &DeepRx<T>, scenario: &Scenario, ttis: &[Tti]) -> Result<f64> {
    let samples: Vec<_> = ttis.iter().map(|t| (&t.rx, t.pilots(scenario))).collect();
    let bits: Vec<_> = ttis.iter().map(|t| &t.bits).collect();
    let (targets, mask) = loss_targets::<T>(&bits, model.config.outputs)?;
    let mut tape = Tape::new(&model.params, Mode::Eval);
    let logits = model.forward(&mut tape, model.batch(&samples)?)?;
    let loss = tape.masked_bce(logits, &targets, &mask)?;
    Ok(tape.value(loss).item().f64())
}

/// Mean loss over the validation set, in eval mode.
pub fn validation_loss<T: Scalar>(model: &DeepRx<T>, cfg: &RunConfig) -> Result<f64> {
    let scenario = Scenario::new(&cfg.validation())?;
    let t = &cfg.training;
    let spec = DatasetSpec::new(cfg.seed, t.train_ttis, t.validation_ttis)?;
    let n = t.validation_ttis;
    if n == 0 {
        return Ok(f64::NAN);
    }
    let b = t.batch_size as u64;
    let (mut sum, mut count) = (0.0, 0u64);
    let mut k = 0;
    while k < n {
        let ttis: Vec<Tti> =
            (k..(k + b).min(n)).map(|i| generate_tti(&scenario, spec.validation_seed(i))).collect::<Result<_>>()?;
        sum += batch_loss(model, &scenario, &ttis)? * ttis.len() as f64;
        count += ttis.len() as u64;
        k += b;
    }
    Ok(sum / count as f64)
}

fn train_typed<T: Scalar>(cfg: &RunConfig, out_dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let stale = out_dir.join(BEST_CHECKPOINT);
    if stale.exists() {
        std::fs::remove_file(stale)?;
    }
    let t = &cfg.training;
    let scenario = Scenario::new(cfg)?;
    let spec = DatasetSpec::new(cfg.seed, t.train_ttis, t.validation_ttis)?;
    let mut model = initial_model::<T>(cfg)?;
    if let Some(path) = resume {
        load_into(&mut model, path)?;
        log::info!("initialized from {}", path.display());
    }
    log::info!(
        "training {} ({} parameters), {} iterations of {} TTIs, seed {}",
        model.config.name,
        model.trainable_count(),
        t.total_iters,
        t.batch_size,
        cfg.seed
    );
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml())?;
    let schedule = LrSchedule::new(t.base_lr, t.warmup_iters, t.total_iters)?;
    let mut opt = AdamW::new(&model.params, t.weight_decay);
    let paths = |name: &str| out_dir.join(name);
    let mut log = Vec::new();
    let mut log_text = String::from("iteration,lr,loss\n");
    let mut validation = Vec::new();
    let mut best = f64::INFINITY;
    let mut last_good: Option<PathBuf> = None;
    let validate = |model: &DeepRx<T>, it: usize, best: &mut f64, validation: &mut Vec<(usize, f64)>| -> Result<()> {
        if t.validation_ttis == 0 {
            return Ok(());
        }
        let v = validation_loss(model, cfg)?;
        log::info!("iteration {it}: validation loss {v:.5}");
        validation.push((it, v));
        if v < *best {
            *best = v;
            save_checkpoint(model, &paths(BEST_CHECKPOINT))?;
        }
        Ok(())
    };
    for it in 0..t.total_iters {
        let lr = schedule.lr_at(it)?;
        let ttis: Vec<Tti> = (0..t.batch_size as u64)
            .map(|k| {
                let mut idx = it as u64 * t.batch_size as u64 + k;
                if t.train_ttis > 0 {
                    idx %= t.train_ttis;
                }
                generate_tti(&scenario, spec.train_seed(idx))
            })
            .collect::<Result<_>>()?;
        let samples: Vec<_> = ttis.iter().map(|x| (&x.rx, x.pilots(&scenario))).collect();
        let bits: Vec<_> = ttis.iter().map(|x| &x.bits).collect();
        let (targets, mask) = loss_targets::<T>(&bits, model.config.outputs)?;
        let (loss, grads, bn) = {
            let mut tape = Tape::new(&model.params, Mode::Train);
            let logits = model.forward(&mut tape, model.batch(&samples)?)?;
            let loss = tape.masked_bce(logits, &targets, &mask)?;
            let grads = tape.backward(loss)?;
            (tape.value(loss).item().f64(), grads, tape.into_bn_updates())
        };
        if !loss.is_finite() || !grads.is_finite() {
            log::error!("non-finite loss or gradient at iteration {it}");
            return Err(Error::Diverged { iteration: it, last_good });
        }
        model.params.apply_bn_updates(&bn, BN_MOMENTUM);
        opt.step(&mut model.params, &grads, lr)?;
        if t.log_every > 0 && it % t.log_every == 0 {
            log::info!("iteration {it}: lr {lr:.3e} loss {loss:.5}");
            log.push(LogRecord { iteration: it, lr, loss });
            let _ = writeln!(log_text, "{it},{lr:e},{loss}");
            write_atomic(&paths(LOG_FILE), &log_text)?;
        }
        let done = it + 1;
        if t.checkpoint_every > 0 && done % t.checkpoint_every == 0 && model.params.is_finite() {
            save_checkpoint(&model, &paths(LAST_CHECKPOINT))?;
            last_good = Some(paths(LAST_CHECKPOINT));
        }
        if t.validate_every > 0 && done % t.validate_every == 0 && done < t.total_iters {
            validate(&model, done, &mut best, &mut validation)?;
        }
    }
    save_checkpoint(&model, &paths(FINAL_CHECKPOINT))?;
    validate(&model, t.total_iters, &mut best, &mut validation)?;
    if !paths(BEST_CHECKPOINT).exists() {
        save_checkpoint(&model, &paths(BEST_CHECKPOINT))?;
    }
    write_atomic(&paths(LOG_FILE), &log_text)?;
    Ok(TrainOutcome {
        log,
        validation,
        final_checkpoint: paths(FINAL_CHECKPOINT),
        best_checkpoint: paths(BEST_CHECKPOINT),
        best_validation_loss: best,
    })
}
