#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use latentgaze::{GazeLabel, LatentCode, LatentDataset, LatentLayout, Sample};
use latentgaze_cli::format;

pub const BIN: &str = env!("CARGO_BIN_EXE_latentgaze");

pub fn latentgaze(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

/// Runs the binary, asserts success and parses its stdout.
pub fn ok(args: &[&str]) -> serde_json::Value {
    let out = latentgaze(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn write_spec(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

pub fn latents(dir: &Path) -> PathBuf {
    dir.join(format::LATENTS_FILE)
}

pub fn labels(dir: &Path) -> PathBuf {
    dir.join(format::LABELS_FILE)
}

/// Samples whose yaw and pitch are exact linear functions of chunk 0.
/// Every value is a multiple of 1/8 so the `f32` file keeps it exactly.
pub fn linear_dataset(n: usize) -> LatentDataset {
    let layout = LatentLayout::new(1, 8, 4).unwrap();
    let samples = (0..n).map(|i| {
        let a = ((i * 5) % 9) as f64 / 8.0 - 0.5;
        let b = ((i * 7) % 11) as f64 / 8.0 - 0.625;
        let values = vec![a, b, a - b, 0.25, ((i * 3) % 5) as f64 / 8.0, 0.0, 0.5, -0.5];
        Sample {
            id: format!("lin{i:03}"),
            code: LatentCode::new(layout, values).unwrap(),
            label: GazeLabel::new(20.0 * a - 10.0 * b, 8.0 * b + 2.0).unwrap(),
        }
    });
    LatentDataset::from_samples(layout, samples).unwrap()
}

pub fn validate_report(path: &Path) {
    let schema: serde_json::Value = serde_json::from_str(latentgaze_cli::report::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{}: {errors:?}", path.display());
}
