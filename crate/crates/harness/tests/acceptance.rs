//! Acceptance suite: one test per criterion, each printing a single verdict line.
//!
//! Lines go straight to the stderr handle so they show up even when the test
//! harness captures output.

use std::io::Write;
use std::path::Path;
use std::process::Command;

use mcc_harness::checks::{self, CheckOutcome};
use mcc_harness::report::REPORT_JSON;

fn report(out: &CheckOutcome) {
    let line = format!("{out}\n");
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn verdict(id: usize, result: mcc_harness::Result<CheckOutcome>) {
    let out = result.unwrap_or_else(|e| CheckOutcome {
        id,
        title: "error",
        pass: false,
        detail: e.to_string(),
    });
    report(&out);
    assert!(out.pass, "{out}");
}

#[test]
fn criterion_01_pit_calibration_bound() {
    verdict(1, checks::criterion_1());
}

#[test]
fn criterion_02_ece_after_recalibration() {
    verdict(2, checks::criterion_2());
}

#[test]
fn criterion_03_conformal_coverage() {
    verdict(3, checks::criterion_3());
}

#[test]
fn criterion_04_credible_mass_of_conformal_interval() {
    verdict(4, checks::criterion_4());
}

#[test]
fn criterion_05_lambda_accuracy() {
    verdict(5, checks::criterion_5());
}

#[test]
fn criterion_06_least_squares_oracle() {
    verdict(6, checks::criterion_6());
}

#[test]
fn criterion_07_crps_dual_path() {
    verdict(7, checks::criterion_7());
}

#[test]
fn criterion_08_gradient_checks() {
    verdict(8, checks::criterion_8());
}

#[test]
fn criterion_09_interval_comparison() {
    verdict(9, checks::criterion_9());
}

const SMALL_CONFIG: &str = "\
# tiny grid for the determinism check
datasets = hetero:rows=600, skew:rows=400
bases = point, distribution
interpolators = linear, naive
seeds = 0, 1
hidden = 16
epochs = 100
";

fn run_cli(config: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_calibrate"))
        .args(["run", "--config"])
        .arg(config)
        .env("CALIB_THREADS", "2")
        .output()
        .expect("calibrate runs")
}

#[test]
fn criterion_10_cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config = dir.path().join("grid.conf");
    std::fs::write(&config, format!("{SMALL_CONFIG}output_dir = {}\n", out_dir.display())).unwrap();

    let mut runs = Vec::new();
    for _ in 0..2 {
        let output = run_cli(&config);
        assert!(
            output.status.success(),
            "calibrate run failed: {}",
            String::from_utf8_lossy(&output.stderr)
        );
        runs.push(std::fs::read(out_dir.join(REPORT_JSON)).unwrap());
    }
    let pass = runs[0] == runs[1];
    report(&CheckOutcome {
        id: 10,
        title: "byte-identical reports",
        pass,
        detail: format!(
            "two `calibrate run` invocations, {} bytes, {}",
            runs[0].len(),
            if pass { "identical" } else { "DIFFERENT" }
        ),
    });
    assert!(pass);
}
