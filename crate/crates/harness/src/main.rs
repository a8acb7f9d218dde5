use clap::{Parser, Subcommand};
use deeprx_harness::data::{tti_index, tti_seed, Split};
use deeprx_harness::dataset::write_dataset;
use deeprx_harness::{
    evaluate, gradcheck_report, probe, sweep, train, write_csv, Axis, DatasetSpec, Precision, ProbeKind, Receiver,
    ReceiverSpec, RunConfig, Scenario, TrainOptions,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "deeprx", version, about = "OFDM receiver laboratory: classical and neural receivers")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for evaluation (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Network arithmetic.
    #[arg(long, global = true, default_value = "f32")]
    precision: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write training and validation TTIs to .drxd files.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Start from these parameters.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// BER of one receiver.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// ls-lmmse, genie-lmmse, iterative, deeprx[:<ckpt>] or restricted[:<ckpt>].
        #[arg(long)]
        receiver: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        ttis: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// BER over an axis for several receivers.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// snr, doppler or pilot.
        #[arg(long)]
        axis: String,
        /// Comma-separated receiver names.
        #[arg(long)]
        receivers: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Manipulated-data experiments.
    Probe {
        #[arg(long)]
        config: PathBuf,
        /// quadrant_qpsk, quadrant_qam16 or phase_channel.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every layer kind.
    Gradcheck {
        /// Corrupt the backward pass of this layer (self-test).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
}

fn load_config(path: &Path, seed: Option<u64>) -> deeprx_harness::Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn receiver_spec(name: &str, checkpoint: Option<&Path>) -> deeprx_harness::Result<ReceiverSpec> {
    match (name, checkpoint) {
        ("deeprx", Some(p)) => Ok(ReceiverSpec::DeepRx(p.to_path_buf())),
        ("restricted", Some(p)) => Ok(ReceiverSpec::Restricted(p.to_path_buf())),
        ("deeprx" | "restricted", None) => Err(deeprx_harness::Error::InvalidState(format!("{name} needs --checkpoint"))),
        _ => name.parse(),
    }
}

fn run(cli: Cli) -> deeprx_harness::Result<ExitCode> {
    let precision: Precision = cli.precision.parse()?;
    let threads = cli.threads;
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load_config(&config, cli.seed)?;
            std::fs::create_dir_all(&out)?;
            let t = &cfg.training;
            let n_train = if t.train_ttis > 0 { t.train_ttis } else { (t.total_iters * t.batch_size) as u64 };
            let spec = DatasetSpec::new(cfg.seed, n_train, t.validation_ttis)?;
            write_dataset(&out.join("train.drxd"), &Scenario::new(&cfg)?, &(0..n_train).map(|k| spec.train_seed(k)).collect::<Vec<_>>())?;
            write_dataset(
                &out.join("validation.drxd"),
                &Scenario::new(&cfg.validation())?,
                &(0..t.validation_ttis).map(|k| spec.validation_seed(k)).collect::<Vec<_>>(),
            )?;
            let n_test = cfg.eval.ttis;
            write_dataset(
                &out.join("test.drxd"),
                &Scenario::new(&cfg)?,
                &(0..n_test).map(|k| tti_seed(cfg.seed, tti_index(Split::Test, k))).collect::<Vec<_>>(),
            )?;
            println!("wrote {n_train} training, {} validation and {n_test} test TTIs (seed {})", t.validation_ttis, cfg.seed);
        }
        Command::Train { config, out, resume } => {
            let cfg = load_config(&config, cli.seed)?;
            let outcome = train(&cfg, &out, &TrainOptions { precision, resume })?;
            println!(
                "final checkpoint {}; best validation loss {:.5} ({}) (seed {})",
                outcome.final_checkpoint.display(),
                outcome.best_validation_loss,
                outcome.best_checkpoint.display(),
                cfg.seed
            );
        }
        Command::Eval { config, receiver, checkpoint, ttis, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let rx = receiver_spec(&receiver, checkpoint.as_deref())?.build(precision)?;
            let scenario = Scenario::new(&cfg)?;
            let n = ttis.unwrap_or(cfg.eval.ttis);
            let records = deeprx_harness::eval::with_threads(threads, || evaluate(&rx, &scenario, n))??;
            write_csv(&out, &records)?;
            for r in &records {
                println!("{} snr {} dB: BER {:.4e} ({} bits)", r.receiver, r.snr_db, r.ber, r.bits);
            }
        }
        Command::Sweep { config, axis, receivers, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let axis: Axis = axis.parse()?;
            let rxs = receivers
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.parse::<ReceiverSpec>().and_then(|r| r.build(precision)))
                .collect::<deeprx_harness::Result<Vec<Receiver>>>()?;
            let records = deeprx_harness::eval::with_threads(threads, || sweep(&cfg, axis, &rxs))??;
            write_csv(&out, &records)?;
            println!("{} rows written to {} (seed {})", records.len(), out.display(), cfg.seed);
        }
        Command::Probe { config, kind, checkpoint, out } => {
            let cfg = load_config(&config, cli.seed)?;
            let kind: ProbeKind = kind.parse()?;
            let records =
                deeprx_harness::eval::with_threads(threads, || probe(&cfg, kind, checkpoint.as_deref(), precision))??;
            write_csv(&out, &records)?;
            println!("{} rows written to {} (seed {})", records.len(), out.display(), cfg.seed);
        }
        Command::Gradcheck { inject_fault } => {
            let (report, ok) = gradcheck_report(inject_fault.as_deref())?;
            print!("{report}");
            return Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
