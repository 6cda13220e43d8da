use std::fs;
use std::path::Path;
use std::process::{Command as Process, Stdio};

use subconvex::harness::{run_experiment, Command, ExperimentConfig};

fn small_config(out: &Path, workers: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("T_list", "30,60"),
        ("deviation_t_list", "20,40,80"),
        ("remainder_t_list", "20,40,80"),
        ("kernel_points", "8"),
        ("kernel_t", "40"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.out = out.to_path_buf();
    cfg.workers = workers;
    cfg
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn empty_lists_give_header_only_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [("T_list", ""), ("deviation_t_list", ""), ("remainder_t_list", ""), ("kernel_points", "4")] {
        cfg.set(k, v).unwrap();
    }
    cfg.out = dir.path().to_path_buf();
    let outcome = run_experiment(Command::All, &cfg).unwrap();
    assert!(outcome.passed());
    for name in ["sweep.csv", "peakfit.csv", "boundchain.csv", "kernel_deviation.csv", "kernel_remainder.csv"] {
        let text = fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1, "{name}");
    }
}

#[test]
fn output_is_independent_of_worker_count() {
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    let a = run_experiment(Command::All, &small_config(one.path(), 1)).unwrap();
    let b = run_experiment(Command::All, &small_config(two.path(), 2)).unwrap();
    assert_eq!(a.checks, b.checks);
    let fa = csv_files(one.path());
    assert_eq!(fa.len(), 7);
    assert_eq!(fa, csv_files(two.path()));
    assert!(a.passed(), "{}", a.summary());
}

#[test]
fn peakfit_needs_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { out: dir.path().to_path_buf(), ..ExperimentConfig::default() };
    assert!(run_experiment(Command::Peakfit, &cfg).is_err());
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_subconvex");
    let ok = Process::new(bin).arg("critpts").arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(ok.code(), Some(0));
    assert!(dir.path().join("critpts.csv").exists());
    let bad = Process::new(bin)
        .args(["critpts", "--set", "no_such_key=1", "--out"])
        .arg(dir.path())
        .stderr(Stdio::null())
        .status()
        .unwrap();
    assert_eq!(bad.code(), Some(2));
    let config = dir.path().join("run.cfg");
    fs::write(&config, "T_list = \ndeviation_t_list =\nremainder_t_list =\nkernel_points = 4\n").unwrap();
    let from_file = Process::new(bin)
        .arg("all")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("run"))
        .status()
        .unwrap();
    assert_eq!(from_file.code(), Some(0));
}
