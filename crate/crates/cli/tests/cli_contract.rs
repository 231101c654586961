use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use spadsim_core::sigmodel::read_frames;

fn spadsim(args: &[&str], config: &Value, dir: &Path) -> Output {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_spadsim"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("SPADSIM_THREADS")
        .output()
        .unwrap()
}

fn result_line(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout);
    stdout.lines().last().unwrap_or_default().to_string()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
        .unwrap_or_else(|| panic!("{key} missing from {line}"))
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn small_scenario(n_gates: u64) -> Value {
    json!({ "n_gates": n_gates, "seed": 11, "illumination": { "kind": "alternating" } })
}

#[test]
fn zero_gates_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = spadsim(&["simulate"], &json!({ "scenario": small_scenario(0), "compensator": {} }), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(result_line(&out), "RESULT simulate status=error exit=1");
}

#[test]
fn unknown_keys_and_missing_files_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "scenario": { "n_gates": 100, "gates": 3 }, "compensator": {} });
    assert_eq!(spadsim(&["simulate"], &cfg, dir.path()).status.code(), Some(1));
    let out = Command::new(env!("CARGO_BIN_EXE_spadsim"))
        .args(["hwcheck", "--config", "/nonexistent/config.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let missing = spadsim(&["sweep"], &json!({ "scenario": small_scenario(100) }), dir.path());
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn bad_flags_exit_one() {
    for args in [vec!["frobnicate"], vec!["simulate", "--config", "x.json", "--threads", "0"]] {
        let out = Command::new(env!("CARGO_BIN_EXE_spadsim")).args(&args).output().unwrap();
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
}

#[test]
fn over_budget_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = spadsim(&["hwcheck"], &json!({ "hw": { "budget_mw": 150 } }), dir.path());
    assert_eq!(out.status.code(), Some(3));
    let line = result_line(&out);
    assert_eq!(field(&line, "pass"), "false");
    assert!(field(&line, "margin_mw").starts_with('-'));

    let ok = spadsim(&["hwcheck"], &json!({ "hw": { "budget_mw": 193.2 } }), dir.path());
    assert_eq!(ok.status.code(), Some(0), "{}", result_line(&ok));
}

#[test]
fn simulate_writes_consistent_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "scenario": { "n_gates": 500, "seed": 2, "channels": 2 }, "compensator": {} });
    let out = spadsim(&["simulate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let out_dir = dir.path().join("out");
    for ch in 0..2 {
        let file = std::fs::File::open(out_dir.join(format!("frames_ch{ch}.bin"))).unwrap();
        let frames = read_frames(std::io::BufReader::new(file), ch).unwrap();
        assert_eq!((frames.n_gates(), frames.samples_per_gate), (500, 16));
        assert!(out_dir.join(format!("groundtruth_ch{ch}.csv")).exists());
    }
    assert_eq!(read_csv(&out_dir.join("decisions.csv")).len(), 1000);
}

#[test]
fn single_threshold_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({
        "scenario": small_scenario(2000),
        "compensator": {},
        "sweep": { "thresholds": [0.04] }
    });
    let out = spadsim(&["sweep"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read_csv(&dir.path().join("out/sweep.csv")).len(), 1);
    assert_eq!(field(&result_line(&out), "rows"), "1");
}

#[test]
fn comparing_a_detector_with_itself_gives_unit_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = json!({ "n_gates": 20000, "seed": 5, "devices": [{ "dark_prob_per_gate": 1e-3 }] });
    let cfg = json!({
        "scenario": scenario,
        "compensator": {},
        "sweep": {
            "thresholds": { "min": 0.02, "max": 0.12, "count": 11 },
            "compare_scenario": scenario,
            "target_p_pd": 0.05
        }
    });
    let out = spadsim(&["sweep"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(field(&result_line(&out), "dark_ratio"), "1");
    let a = std::fs::read(dir.path().join("out/sweep.csv")).unwrap();
    let b = std::fs::read(dir.path().join("out/sweep_compare.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn keyrate_single_point_without_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "keyrate": { "params": { "e_det": 0.0, "p_dk": 0.0, "mu": 0.5, "channel_loss_db": 3.0 } } });
    let out = spadsim(&["keyrate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("out/keyrate.csv"));
    assert_eq!(rows.len(), 1);
    let q: f64 = rows[0][3].parse().unwrap();
    let e: f64 = rows[0][4].parse().unwrap();
    let r: f64 = rows[0][5].parse().unwrap();
    assert_eq!(e, 0.0);
    let t = 0.1 * 10f64.powf(-0.3);
    assert!((q - (1.0 - (-0.5 * t).exp())).abs() < 1e-15);
    assert!((r - 0.5 * q).abs() <= 1e-15 * q);
}

#[test]
fn no_dark_counts_means_no_gain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "keyrate": { "params": { "p_dk": 0.0 }, "target_gain": 1.5 } });
    let out = spadsim(&["keyrate"], &cfg, dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.path().join("out/gain.csv"));
    assert_eq!(rows.len(), 161);
    assert!(rows.iter().all(|r| r[1] == "1"));
    assert_eq!(field(&result_line(&out), "crossing_loss_db"), "none");
}

#[test]
fn bench_needs_post_warmup_gates_and_enough_trials() {
    let dir = tempfile::tempdir().unwrap();
    let short = spadsim(&["bench"], &json!({ "scenario": small_scenario(10) }), dir.path());
    assert_eq!(short.status.code(), Some(1));
    let few = spadsim(&["bench", "--trials", "2"], &json!({ "scenario": small_scenario(1000) }), dir.path());
    assert_eq!(few.status.code(), Some(1));
}

#[test]
fn seed_override_changes_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({ "scenario": small_scenario(2000), "compensator": {} });
    let a = result_line(&spadsim(&["simulate"], &cfg, dir.path()));
    let b = result_line(&spadsim(&["simulate", "--seed", "12"], &cfg, dir.path()));
    let c = result_line(&spadsim(&["simulate", "--seed", "11"], &cfg, dir.path()));
    assert_ne!(field(&a, "checksum"), field(&b, "checksum"));
    assert_eq!(a, c);
}
