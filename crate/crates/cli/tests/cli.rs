//! End-to-end checks of the `dcdr` binary: subcommands, file outputs, and
//! exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dcdr"))
}

fn temp(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dcdr-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "command failed: {:?}\nstdout: {}\nstderr: {}",
        cmd,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, slots: usize) {
    run_ok(bin().args([
        "synth",
        "--seed",
        "7",
        "--slots",
        &slots.to_string(),
        "--out",
        dir.to_str().unwrap(),
    ]));
}

#[test]
fn synth_is_byte_deterministic() {
    let root = temp("synth");
    let a = root.join("a");
    let b = root.join("b");
    synth(&a, 6);
    synth(&b, 6);
    for file in [
        "scenario.toml",
        "base_price.csv",
        "background_load.csv",
        "transmission_delay.csv",
        "workload.csv",
    ] {
        assert_eq!(
            fs::read(a.join(file)).unwrap(),
            fs::read(b.join(file)).unwrap(),
            "{file} differs between identical synth runs"
        );
    }
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn validate_accepts_good_and_names_bad_cells() {
    let root = temp("validate");
    let dir = root.join("scenario");
    synth(&dir, 4);
    run_ok(bin().args(["validate", dir.to_str().unwrap()]));

    // Corrupt one background cell beyond the capacity.
    let file = dir.join("background_load.csv");
    let text = fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    // Row for slot 2, location 1 (header + 2*4 + 1 + 1).
    let row = 1 + 2 * 4 + 1;
    lines[row] = "2,1,9.9e9".into();
    fs::write(&file, lines.join("\n") + "\n").unwrap();

    let out = bin().args(["validate", dir.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("slot 2, location 1"), "stderr: {stderr}");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn run_emits_reports_and_summary() {
    let root = temp("run");
    let scenario = root.join("scenario");
    synth(&scenario, 4);
    let out_dir = root.join("out");
    let out = run_ok(bin().args([
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--methods",
        "integrated,restricted,exact,base-price",
        "--out",
        out_dir.to_str().unwrap(),
        "--deterministic",
    ]));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("4 slots x 4 methods"), "stdout: {stdout}");
    for file in [
        "per_slot.csv",
        "eli_integrated.csv",
        "eli_exact.csv",
        "cost_base-price.csv",
        "energy_restricted.csv",
        "reference_exact.csv",
        "price_exact.csv",
        "summary.toml",
    ] {
        assert!(out_dir.join(file).exists(), "{file} missing");
    }
    // The bounds sandwich the exact values in the emitted table.
    let per_slot = fs::read_to_string(out_dir.join("per_slot.csv")).unwrap();
    let mut integrated = [f64::NAN; 4];
    let mut exact = [f64::NAN; 4];
    let mut restricted = [f64::NAN; 4];
    for line in per_slot.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let slot: usize = cells[0].parse().unwrap();
        let eli: f64 = cells[2].parse().unwrap();
        match cells[1] {
            "integrated" => integrated[slot] = eli,
            "exact" => exact[slot] = eli,
            "restricted" => restricted[slot] = eli,
            _ => {}
        }
    }
    for t in 0..4 {
        assert!(integrated[t] <= exact[t] + 1e-6);
        assert!(exact[t] <= restricted[t] + 1e-6);
    }
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn run_reports_infeasible_cells_with_exit_code_3() {
    let root = temp("infeasible");
    let scenario = root.join("scenario");
    synth(&scenario, 3);
    // An absurd workload scale starves every slot.
    let out = bin()
        .args([
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--methods",
            "integrated",
            "--workload-scale",
            "50.0",
            "--out",
            root.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let per_slot = fs::read_to_string(root.join("out/per_slot.csv")).unwrap();
    assert!(per_slot.contains("infeasible"));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn robust_requires_uncertainty() {
    let root = temp("robust");
    let scenario = root.join("scenario");
    synth(&scenario, 3);
    let out = bin()
        .args([
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--methods",
            "robust",
            "--out",
            root.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn sweep_writes_the_table() {
    let root = temp("sweep");
    let scenario = root.join("scenario");
    synth(&scenario, 3);
    run_ok(bin().args([
        "sweep",
        "--scenario",
        scenario.to_str().unwrap(),
        "--range",
        "0.8:1.2:0.2",
        "--out",
        root.join("out").to_str().unwrap(),
    ]));
    let table = fs::read_to_string(root.join("out/sweep.csv")).unwrap();
    assert!(table.starts_with("scale,eli_exact,eli_base,reduction_pct"));
    assert_eq!(table.lines().count(), 4);
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn tolerance_env_knob_is_validated() {
    let root = temp("tol");
    let scenario = root.join("scenario");
    synth(&scenario, 3);
    let out = bin()
        .env("DCDR_TOL", "not-a-number")
        .args([
            "run",
            "--scenario",
            scenario.to_str().unwrap(),
            "--out",
            root.join("out").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = run_ok(bin().env("DCDR_TOL", "1e-7").args([
        "run",
        "--scenario",
        scenario.to_str().unwrap(),
        "--methods",
        "integrated",
        "--out",
        root.join("out").to_str().unwrap(),
    ]));
    assert!(out.status.success());
    let _ = fs::remove_dir_all(&root);
}
