//! Black-box tests of the `cloudscale` binary: subcommands, file formats
//! and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cloudscale(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cloudscale"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, extra: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    let base = "trace = synthetic\n\
                synthetic_days = 1\n\
                trace_scale = 20\n\
                epochs = 2\n\
                seeds = 1\n\
                agent = threshold\n\
                env = fast\n\
                episode_log = none\n\
                warmup = 64\n\
                batch_size = 16\n\
                replay_capacity = 1024\n";
    fs::write(&path, format!("{base}{extra}")).unwrap();
    path
}

#[test]
fn ingest_bins_and_scales_a_raw_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    fs::write(&trace, "0.5 tcp x\n10 tcp y\n299.9 udp z\n300.0 tcp w\n").unwrap();
    let out = dir.path().join("bins.csv");
    let res = cloudscale(&[
        "ingest",
        "--trace",
        trace.to_str().unwrap(),
        "--interval",
        "300",
        "--scale",
        "20",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{res:?}");
    let content = fs::read_to_string(&out).unwrap();
    assert_eq!(content, "interval_index,count\n0,60\n1,20\n");
}

#[test]
fn ingest_reports_parse_errors_with_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.txt");
    fs::write(&trace, "0.5 ok\nbogus line\n").unwrap();
    let out = dir.path().join("bins.csv");
    let res = cloudscale(&[
        "ingest",
        "--trace",
        trace.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("line 2"), "{stderr}");
}

#[test]
fn train_writes_run_files_and_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let res = cloudscale(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{res:?}");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("experiment: threshold_fast"), "{stdout}");
    assert!(out_dir.join("threshold_fast/s1/epochs.csv").exists());
}

#[test]
fn train_repeats_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "agent = qtable\n");
    let run = |out: &Path| {
        let res = cloudscale(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(res.status.success(), "{res:?}");
        fs::read(out.join("qtable_fast/s1/epochs.csv")).unwrap()
    };
    let a = run(&dir.path().join("a"));
    let b = run(&dir.path().join("b"));
    assert_eq!(a, b);
}

#[test]
fn train_rejects_bad_overrides_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let res = cloudscale(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--agent",
        "sarsa",
    ]);
    assert_eq!(res.status.code(), Some(2));
    // init weights are only valid for deep agents
    let res = cloudscale(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--init-weights",
        "w.qnw",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_exit_code_3() {
    let res = cloudscale(&["train", "--config", "/nonexistent/exp.cfg"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn compare_prints_t_and_p_for_identical_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out_dir = dir.path().join("out");
    let res = cloudscale(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(res.status.success());
    let csv = out_dir.join("threshold_fast/s1/epochs.csv");
    let res = cloudscale(&[
        "compare",
        "--a",
        csv.to_str().unwrap(),
        "--b",
        csv.to_str().unwrap(),
        "--metric",
        "mean_reward",
    ]);
    assert!(res.status.success(), "{res:?}");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("p: 1"), "{stdout}");
    assert!(stdout.contains("mean_diff: 0"), "{stdout}");

    let res = cloudscale(&[
        "compare",
        "--a",
        csv.to_str().unwrap(),
        "--b",
        csv.to_str().unwrap(),
        "--metric",
        "nope",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn transfer_runs_cold_and_warm_and_reports_wins() {
    let dir = tempfile::tempdir().unwrap();
    // Train a tiny DQN on the fast env to produce source weights.
    let cfg = write_config(
        dir.path(),
        "agent = dqn\nwarmup = 32\nbatch_size = 8\nwindow = 6\nconv_layers = 2\nconv_filters = 4\n",
    );
    let fast_out = dir.path().join("fast");
    let res = cloudscale(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        fast_out.to_str().unwrap(),
        "--epochs",
        "1",
    ]);
    assert!(res.status.success(), "{res:?}");
    let weights = fast_out.join("dqn_fast/s1/weights_final.qnw");
    assert!(weights.exists());

    let transfer_cfg = write_config(
        dir.path(),
        "agent = dqn\nwarmup = 32\nbatch_size = 8\nwindow = 6\nconv_layers = 2\nconv_filters = 4\nenv = fidelity\n",
    );
    let out = dir.path().join("transfer");
    let res = cloudscale(&[
        "transfer",
        "--source-weights",
        weights.to_str().unwrap(),
        "--config",
        transfer_cfg.to_str().unwrap(),
        "--out-dir",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{res:?}");
    let stdout = String::from_utf8_lossy(&res.stdout);
    assert!(stdout.contains("warm_wins:"), "{stdout}");
    assert!(out.join("cold/dqn_fidelity/s1/epochs.csv").exists());
    assert!(out.join("warm/dqn_fidelity/s1/epochs.csv").exists());
}

#[test]
fn transfer_rejects_fast_backend_with_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "agent = dqn\n");
    let weights = dir.path().join("w.qnw");
    fs::write(&weights, b"QNW1").unwrap();
    let res = cloudscale(&[
        "transfer",
        "--source-weights",
        weights.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}
