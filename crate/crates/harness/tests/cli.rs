use std::path::Path;
use std::process::{Command, Output};

fn deeprx(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deeprx")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        "name = \"cli\"\nseed = 9\n[tti]\nsubcarriers = 24\n[eval]\nttis = 6\nchunk = 2\nsnr_db = [0.0, 8.0]\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn gradcheck_lists_each_layer_once_and_passes() {
    let out = deeprx(&["gradcheck"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let layers: Vec<&str> = text.lines().filter(|l| l.contains("max_rel_error")).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(layers, ["conv2d", "depthwise_separable", "batchnorm", "add_residual", "masked_bce"], "{text}");
    assert!(text.lines().filter(|l| l.contains("max_rel_error")).all(|l| l.ends_with("PASS")));
}

#[test]
fn corrupted_backward_fails_gradcheck() {
    let out = deeprx(&["gradcheck", "--inject-fault", "batchnorm"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn sweep_csv_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut files = Vec::new();
    for (k, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("sweep{k}.csv"));
        let o = out.to_str().unwrap();
        let status = deeprx(&["--threads", threads, "sweep", "--config", &cfg, "--axis", "snr", "--receivers", "ls-lmmse,genie-lmmse,iterative", "--out", o]);
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        files.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0], files[2]);
    let text = String::from_utf8(files[0].clone()).unwrap();
    assert_eq!(text.lines().next().unwrap(), "scenario,receiver,snr_db,doppler_hz,pilot_config,bits,bit_errors,ber");
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        assert!(deeprx(&["--seed", seed, "eval", "--config", &cfg, "--receiver", "ls-lmmse", "--out", out.to_str().unwrap()]).status.success());
        std::fs::read_to_string(out).unwrap()
    };
    assert_eq!(run("4", "a.csv"), run("4", "b.csv"));
    assert_ne!(run("4", "a.csv"), run("5", "c.csv"));
}

#[test]
fn unknown_receiver_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("x.csv");
    let o = deeprx(&["eval", "--config", &cfg, "--receiver", "oracle", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stderr).unwrap().contains("oracle"));
    assert!(!out.exists());
}

#[test]
fn network_receivers_need_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("x.csv");
    let o = deeprx(&["eval", "--config", &cfg, "--receiver", "deeprx", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = dir.path().join("none.drx");
    let o = deeprx(&["probe", "--config", &cfg, "--kind", "quadrant_qam16", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let o = deeprx(&[
        "eval",
        "--config",
        &cfg,
        "--receiver",
        "deeprx",
        "--checkpoint",
        missing.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "nmae = \"typo\"\n").unwrap();
    let o = deeprx(&["sweep", "--config", path.to_str().unwrap(), "--axis", "snr", "--receivers", "ls-lmmse", "--out", "unused.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_then_evaluate_and_probe() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("train.toml");
    std::fs::write(
        &path,
        "name = \"tiny\"\nseed = 2\n[tti]\nsubcarriers = 12\n[training]\ntotal_iters = 4\nwarmup_iters = 1\nbatch_size = 2\nvalidation_ttis = 2\nvalidate_every = 2\nlog_every = 1\ncheckpoint_every = 2\n[eval]\nttis = 2\nchunk = 2\nsnr_db = [10.0]\n",
    )
    .unwrap();
    let cfg = path.to_str().unwrap();
    let run_dir = dir.path().join("run");
    let o = deeprx(&["train", "--config", cfg, "--out", run_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["final.drx", "best.drx", "last.drx", "train_log.csv", "config.toml"] {
        assert!(run_dir.join(f).exists(), "{f}");
    }
    let log = std::fs::read_to_string(run_dir.join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 5);

    let ckpt = run_dir.join("final.drx");
    let csv = dir.path().join("eval.csv");
    let o = deeprx(&["eval", "--config", cfg, "--receiver", "deeprx", "--checkpoint", ckpt.to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&csv).unwrap().lines().nth(1).unwrap().contains(",deeprx,"));

    let probe = dir.path().join("probe.csv");
    let o = deeprx(&["probe", "--config", cfg, "--kind", "quadrant_qpsk", "--checkpoint", ckpt.to_str().unwrap(), "--out", probe.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(&probe).unwrap();
    assert!(rows.contains("/qpsk/quadrant,deeprx,"));
    assert!(rows.contains("/qpsk/regular,ls-lmmse,"));

    let resumed = dir.path().join("resumed");
    let o = deeprx(&["train", "--config", cfg, "--out", resumed.to_str().unwrap(), "--resume", ckpt.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let data = dir.path().join("data");
    let o = deeprx(&["gen-data", "--config", cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let train = deeprx_harness::dataset::read_dataset(&data.join("train.drxd")).unwrap();
    assert_eq!(train.len(), 8);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = deeprx_harness::RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        n += 1;
    }
    assert!(n >= 5);
}
