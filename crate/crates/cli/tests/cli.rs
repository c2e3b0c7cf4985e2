//! Black-box smoke tests for the `csilab` binary: every subcommand runs at toy
//! sizes, writes the files it promises, and fails cleanly on bad input.

use std::path::Path;
use std::process::{Command, Output};

/// Flags that shrink every command to seconds.
const TOY: &[&str] = &["--nt", "8", "--nc", "32", "--ld", "8"];

fn csilab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csilab"))
        .args(args)
        .output()
        .expect("binary spawns")
}

/// Runs the binary, asserts success, and returns stdout.
fn run_ok(args: &[&str]) -> String {
    let out = csilab(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout is utf-8")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn corr_reports_every_plane_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("corr");
    let mut args = vec!["corr", "--n", "40", "--plot", "--out-dir", out_dir.to_str().unwrap()];
    args.extend_from_slice(TOY);
    let stdout = run_ok(&args);

    for plane in ["magnitude", "abs_real", "real", "phase", "sign_agreement"] {
        assert!(stdout.contains(plane), "missing {plane} in:\n{stdout}");
    }
    let csv = read(&out_dir.join("corr.csv"));
    assert_eq!(
        csv.matches("plane,").count(),
        1,
        "exactly one header row:\n{csv}"
    );
    let json: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("corr.json"))).expect("corr.json parses");
    assert_eq!(json.as_array().map(Vec::len), Some(7), "one report per plane");
    assert!(read(&out_dir.join("corr.svg")).starts_with("<svg"));
}

#[test]
fn sweep_emits_one_row_per_grid_cell() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("sweep");
    let mut args = vec![
        "sweep",
        "--gaps",
        "50e6,400e6",
        "--bandwidths",
        "10e6,20e6",
        "--n",
        "25",
        "--plot",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TOY);
    let stdout = run_ok(&args);
    assert_eq!(stdout.matches("gap ").count(), 4, "stdout:\n{stdout}");

    let csv = read(&out_dir.join("sweep.csv"));
    assert_eq!(csv.lines().count(), 5, "header plus four cells:\n{csv}");
    assert!(read(&out_dir.join("corr_vs_gap.svg")).starts_with("<svg"));
    assert!(read(&out_dir.join("corr_vs_bandwidth.svg")).starts_with("<svg"));
}

#[test]
fn gen_is_reproducible_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csid");
    let b = dir.path().join("b.csid");
    let mut args_a = vec!["gen", "--n", "6", "--out", a.to_str().unwrap()];
    args_a.extend_from_slice(TOY);
    let mut args_b = vec!["gen", "--n", "6", "--out", b.to_str().unwrap()];
    args_b.extend_from_slice(TOY);

    let out_a = run_ok(&args_a);
    let out_b = run_ok(&args_b);
    let sha = |s: &str| {
        s.lines()
            .find_map(|l| l.strip_prefix("sha256 "))
            .map(str::to_string)
            .expect("summary line")
    };
    assert_eq!(sha(&out_a), sha(&out_b));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(out_a.contains("6 samples x 1 frames"));
}

#[test]
fn train_then_eval_round_trips_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    let out_dir = dir.path().join("reports");
    let sizes = [
        "--n-train", "24", "--n-val", "8", "--n-test", "8",
        "--epochs", "2", "--batch-size", "8", "--patience", "0",
    ];

    let mut train = vec!["train", "--codec", "csinet", "--cr", "1/8"];
    train.extend_from_slice(&["--save-dir", models.to_str().unwrap()]);
    train.extend_from_slice(TOY);
    train.extend_from_slice(&sizes);
    let stdout = run_ok(&train);
    assert!(stdout.contains("training csinet (cr 1/8)"), "{stdout}");
    assert!(stdout.contains("stage 1: 2 epochs"), "{stdout}");
    assert!(models.join("csinet.train.json").exists());

    let mut eval = vec!["eval", "--load-dir", models.to_str().unwrap()];
    eval.extend_from_slice(&["--stem", "csinet", "--out-dir", out_dir.to_str().unwrap()]);
    eval.extend_from_slice(TOY);
    eval.extend_from_slice(&sizes);
    let stdout = run_ok(&eval);
    assert!(stdout.contains("csinet: nmse"), "{stdout}");

    let json: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("csinet.eval.json"))).unwrap();
    assert_eq!(json["codec"], "csinet");
    assert_eq!(json["outcomes"][0]["n_samples"], 8);
    // dB values ride as strings so that -inf survives JSON.
    assert!(json["outcomes"][0]["nmse_db"].is_string());
}

#[test]
fn eval_rejects_a_bundle_trained_at_other_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let models = dir.path().join("models");
    let mut train = vec!["train", "--codec", "csinet", "--cr", "1/8"];
    train.extend_from_slice(&["--save-dir", models.to_str().unwrap()]);
    train.extend_from_slice(TOY);
    train.extend_from_slice(&[
        "--n-train", "16", "--n-val", "8", "--epochs", "1", "--batch-size", "8",
    ]);
    run_ok(&train);

    let eval = [
        "eval", "--load-dir", models.to_str().unwrap(), "--stem", "csinet",
        "--nt", "16", "--nc", "64", "--ld", "16",
    ];
    let out = csilab(&eval);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("trained at nt=8"), "stderr: {stderr}");
}

#[test]
fn experiment_writes_records_and_figures() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("exp");
    let mut args = vec![
        "experiment",
        "--codecs", "csinet",
        "--crs", "1/8",
        "--variants", "baseline",
        "--seeds", "5",
        "--n-train", "24", "--n-val", "8", "--n-test", "8",
        "--epochs", "2", "--batch-size", "8", "--patience", "0",
        "--plot",
        "--out-dir", out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TOY);
    let stdout = run_ok(&args);
    assert!(stdout.contains("1 records, 0 divergences"), "{stdout}");

    let csv = read(&out_dir.join("records.csv"));
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("codec,variant,cr,"));
    let row = lines.next().expect("one record row");
    assert!(row.starts_with("csinet,baseline,0.125,180000000,20000000,5,"), "{row}");
    assert_eq!(lines.next(), None);

    let json: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("report.json"))).unwrap();
    assert_eq!(json["config"]["scenario"], "indoor");
    assert_eq!(json["records"].as_array().map(Vec::len), Some(1));
    assert!(read(&out_dir.join("nmse_vs_cr.svg")).starts_with("<svg"));
}

#[test]
fn omp_on_grid_recovery_is_near_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("omp");
    let mut args = vec![
        "omp", "--cr", "1/2", "--n", "10", "--on-grid",
        "--out-dir", out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(TOY);
    let stdout = run_ok(&args);
    assert!(stdout.contains("omp cr 1/2 (64 measurements"), "{stdout}");
    assert!(stdout.contains("on-grid"), "{stdout}");

    let json: serde_json::Value =
        serde_json::from_str(&read(&out_dir.join("omp.json"))).unwrap();
    let nmse: f64 = json["nmse_db"].as_str().unwrap().parse().unwrap();
    assert!(nmse < -60.0, "on-grid recovery should be near exact, got {nmse} dB");
}

#[test]
fn config_file_layers_under_the_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("layered");
    let conf = dir.path().join("lab.conf");
    // The file picks the outdoor preset and a wrong output directory; the
    // flags must win on the directory while the preset bandwidth survives.
    std::fs::write(
        &conf,
        format!(
            "scenario = outdoor\nout_dir = {}\nnt = 8\nnc = 32\nld = 8\n",
            dir.path().join("ignored").display()
        ),
    )
    .unwrap();
    let stdout = run_ok(&[
        "corr",
        "--config",
        conf.to_str().unwrap(),
        "--n",
        "12",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("magnitude"));
    assert!(out_dir.join("corr.csv").exists());
    assert!(!dir.path().join("ignored").exists());
}

#[test]
fn unknown_codec_lists_the_known_ones() {
    let out = csilab(&["experiment", "--codecs", "csinet,quantum-net"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("quantum-net"), "stderr: {stderr}");
    assert!(stderr.contains("dualnet-mag"), "stderr: {stderr}");
}
