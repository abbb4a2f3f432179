use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use matchsim_cli::{config_hash, run, validate_config, Kind};
use serde_json::Value;

fn matchsim(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_matchsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn summary(dir: &Path) -> Value {
    let file = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().contains("_summary_"))
        .expect("summary written");
    serde_json::from_str(&fs::read_to_string(file).unwrap()).unwrap()
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().contains("_summary_") && p.extension().is_some_and(|e| e != "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

const GENERATOR: &str = "K = 2\nlambda0 = 1.0\nbeta = [0.3, -0.3]\ndelta = [1.0, 2.0]\nbuffer = [1.0, 1.0]\nn = 9\n";

#[test]
fn generator_check_reports_zero_difference() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), GENERATOR);
    let out = matchsim(&["generator-check", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path());
    assert!(s["results"]["max_abs_diff"].as_f64().unwrap() <= 1e-12);
    assert_eq!(s["results"]["states"], 7);
    assert_eq!(s["results"]["pass"], true);
    for key in ["config", "rng", "version", "wall_time_seconds", "config_hash"] {
        assert!(s.get(key).is_some(), "summary lacks {key}");
    }
}

#[test]
fn zero_horizon_gives_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(
        &format!("K = 2\nbeta = [0, 0]\ndelta = [1, 1]\nn = 100\nhorizon = 0\nout = {:?}\n", dir.path()),
        Some(Kind::SimulateCtmc),
    )
    .unwrap();
    let done = run(&cfg).unwrap();
    let path = done.files.iter().find(|p| p.to_string_lossy().contains("_path_")).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "t,Q_1,Q_2,A_1,A_2,G_1,G_2,L_1,L_2,R");
    assert_eq!(lines[1], "0,0,0,0,0,0,0,0,0,0");
}

#[test]
fn outputs_are_named_by_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(&format!("{GENERATOR}out = {:?}\n", dir.path()), Some(Kind::GeneratorCheck)).unwrap();
    let hash = config_hash(&cfg);
    let done = run(&cfg).unwrap();
    assert!(done.summary_path.to_string_lossy().contains(&hash));
    assert!(done.files.iter().all(|p| p.to_string_lossy().contains(&hash)));
    assert_eq!(done.summary["config_hash"], hash);
}

#[test]
fn invalid_config_lists_every_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "lambda0 = 1.0\nbeta = [0.3]\ndelta = [1, 1]\nreplications = 0\n");
    let out = matchsim(&["simulate-ctmc", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("K required"), "{err}");
    assert!(err.contains("replications"), "{err}");
}

#[test]
fn runs_reproduce_byte_for_byte() {
    let configs = [
        ("simulate-ctmc", "K = 3\nbeta = [0.2, 0, -0.2]\ndelta = [1, 1, 1]\nbuffer = [1, 1, \"inf\"]\nn = 100\nhorizon = 2\nreplications = 40\n"),
        ("simulate-limit", "K = 3\nbeta = [0.2, 0, -0.2]\ndelta = [1, 1, 1]\nbuffer = [1, 1, \"inf\"]\nhorizon = 1\nreplications = 20\nrecord_every = 50\n"),
        ("double-ended", "K = 2\nbeta = [0.3, 0]\ndelta = [1, 1]\nbuffer = [1, 0.5]\nhorizon = 1\nreplications = 20\nrecord_every = 50\n"),
        ("compare-laws", "K = 2\nbeta = [0.3, -0.3]\ndelta = [1, 1]\nn = 100\nT = 1\ntimes = [0.5, 1.0]\nreplications = 200\n"),
        ("oracle-validate", "K = 2\nlambda0 = 3\nbeta = [0, 0]\ndelta = [1, 1]\nbuffer = [2, 2]\nhorizon = 1\nreplications = 500\n"),
        ("converge-sweep", "K = 2\nbeta = [0.3, -0.3]\ndelta = [1, 1]\nn_grid = [100, 400]\n"),
    ];
    for (kind, text) in configs {
        let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
        for (i, dir) in dirs.iter().enumerate() {
            let cfg = write_config(dir.path(), text);
            let threads = (i + 1).to_string();
            let out = matchsim(&[
                kind, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "11", "--threads", &threads,
            ]);
            assert!(out.status.success(), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let first = data_files(dirs[0].path());
        assert!(!first.is_empty());
        for dir in &dirs[1..] {
            assert_eq!(first, data_files(dir.path()), "{kind} output differs");
        }
    }
}

#[test]
fn seed_changes_output() {
    let text = "K = 2\nbeta = [0, 0]\ndelta = [1, 1]\nn = 100\nhorizon = 1\n";
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "1"), (&b, "2")] {
        let cfg = write_config(dir.path(), text);
        assert!(matchsim(&["simulate-ctmc", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", seed])
            .status
            .success());
    }
    let fa: Vec<Vec<u8>> = data_files(a.path()).into_iter().map(|f| f.1).collect();
    let fb: Vec<Vec<u8>> = data_files(b.path()).into_iter().map(|f| f.1).collect();
    assert_ne!(fa, fb);
}

#[test]
fn compare_laws_reports_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = validate_config(
        &format!("K = 3\nbeta = [0.2, 0, -0.2]\ndelta = [1, 1, 1]\nn = 100\nT = 1\nreplications = 300\nks_threshold = 0.2\nout = {:?}\n", dir.path()),
        Some(Kind::CompareLaws),
    )
    .unwrap();
    let done = run(&cfg).unwrap();
    let r = &done.summary["results"];
    assert_eq!(r["statistic"], "Q1");
    assert_eq!(r["threshold"], 0.2);
    assert!(r["ks"][0]["ks"].as_f64().unwrap() <= 1.0);
}
