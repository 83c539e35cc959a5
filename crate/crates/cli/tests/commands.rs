mod common;

use common::*;
use latentgaze::shiftsim::ToyPipelineParams;
use latentgaze::synth::{generate, SynthSpec};
use latentgaze::LatentLayout;
use latentgaze_cli::format::{self, LatentFile};
use latentgaze_cli::model;
use latentgaze_cli::report::ReportFile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;

fn header_words(bytes: &[u8]) -> Vec<u32> {
    bytes[4..24].chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect()
}

#[test]
fn default_synth_layout_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    ok(&["synth", "--out", p(&out)]);
    let bytes = fs::read(latents(&out)).unwrap();
    assert_eq!(&bytes[..4], b"LGZ1");
    assert_eq!(header_words(&bytes), vec![1, 4000, 14, 512, 16]);
    assert_eq!(bytes.len() - 24, 4000 * 7168 * 4);
}

#[test]
fn synth_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 40, "seed": 9}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["synth", "--spec", p(&spec), "--out", p(&a)]);
    ok(&["synth", "--spec", p(&spec), "--out", p(&b)]);
    assert_eq!(fs::read(latents(&a)).unwrap(), fs::read(latents(&b)).unwrap());
    assert_eq!(fs::read(labels(&a)).unwrap(), fs::read(labels(&b)).unwrap());
    let c = dir.path().join("c");
    ok(&["synth", "--spec", p(&spec), "--out", p(&c), "--seed", "10"]);
    assert_ne!(fs::read(latents(&a)).unwrap(), fs::read(latents(&c)).unwrap());
}

#[test]
fn synth_pair_writes_both_domains() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "pair.json",
        r#"{"source": {"n_samples": 12, "seed": 1}, "target": {"n_samples": 8, "seed": 2, "offset_std": 1.0}}"#,
    );
    let out = dir.path().join("pair");
    ok(&["synth", "--pair", "--spec", p(&spec), "--out", p(&out)]);
    assert_eq!(LatentFile::read(&latents(&out.join("source"))).unwrap().rows.len(), 12);
    assert_eq!(LatentFile::read(&latents(&out.join("target"))).unwrap().rows.len(), 8);
}

#[test]
fn analyze_recovers_planted_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d");
    ok(&["synth", "--out", p(&data)]);
    let report = dir.path().join("r.json");
    ok(&["analyze", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--top", "64", "--out", p(&report)]);
    validate_report(&report);
    let file = ReportFile::read(&report).unwrap();
    let planted = SynthSpec::default().planted_chunks;
    let hits = file.selected.iter().filter(|c| planted.contains(c)).count();
    assert!(hits as f64 / 64.0 >= 0.95, "{hits}");
    assert!(file.chunks.iter().enumerate().all(|(i, c)| c.index == i));

    let all = dir.path().join("all.json");
    ok(&["analyze", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--top", "448", "--out", p(&all)]);
    validate_report(&all);
    assert_eq!(ReportFile::read(&all).unwrap().selected.len(), 448);
}

#[test]
fn analyze_shuffled_labels_near_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 1500}"#);
    let mut selected = 0;
    for seed in 0..4 {
        let data = dir.path().join(format!("d{seed}"));
        let s = seed.to_string();
        ok(&["synth", "--spec", p(&spec), "--seed", &s, "--shuffle-labels", "--out", p(&data)]);
        let report = dir.path().join(format!("r{seed}.json"));
        ok(&[
            "analyze", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)),
            "--alpha", "0.05", "--right-range", "-90:-30", "--out", p(&report),
        ]);
        validate_report(&report);
        selected += ReportFile::read(&report).unwrap().selected.len();
    }
    let rate = selected as f64 / (4.0 * 448.0);
    assert!((0.02..=0.08).contains(&rate), "rate {rate}");
}

#[test]
fn analyze_error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 30}"#);
    let data = dir.path().join("d");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    let report = dir.path().join("r.json");

    let short = dir.path().join("short.csv");
    let text = fs::read_to_string(labels(&data)).unwrap();
    fs::write(&short, text.lines().take(10).collect::<Vec<_>>().join("\n")).unwrap();
    let out = latentgaze(&["analyze", "--latents", p(&latents(&data)), "--labels", p(&short), "--out", p(&report)]);
    assert_eq!(out.status.code(), Some(2));

    let out = latentgaze(&[
        "analyze", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)),
        "--left-range", "89.999:90", "--out", p(&report),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let bad = write_spec(dir.path(), "bad.json", r#"{"n_samples": 2}"#);
    assert_eq!(latentgaze(&["synth", "--spec", p(&bad), "--out", p(&data)]).status.code(), Some(2));
}

#[test]
fn eval_on_exact_linear_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("lin");
    format::save_dataset(&linear_dataset(60), &data).unwrap();
    let mask = dir.path().join("mask.json");
    fs::write(&mask, r#"{"layout": {"n_layers": 1, "layer_dim": 8, "chunk_size": 4}, "chunks": [0]}"#).unwrap();
    let model = dir.path().join("model.bin");
    ok(&[
        "train", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--mask", p(&mask),
        "--hidden", "8", "--epochs", "2000", "--lr", "0.01", "--batch-size", "10", "--seed", "3", "--out", p(&model),
    ]);
    let result = ok(&["eval", "--model", p(&model), "--latents", p(&latents(&data)), "--labels", p(&labels(&data))]);
    let err = result["mean_angular_error_deg"].as_f64().unwrap();
    assert!(err < 0.5, "{err}");
}

#[test]
fn train_is_bit_reproducible_and_diverges_loudly() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 64, "layout": {"n_layers": 2, "layer_dim": 32, "chunk_size": 16}, "planted_chunks": [1]}"#);
    let data = dir.path().join("d");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    let args = |out: &str, lr: &str| {
        vec![
            "train".to_string(), "--latents".into(), p(&latents(&data)).into(), "--labels".into(), p(&labels(&data)).into(),
            "--hidden".into(), "6".into(), "--epochs".into(), "5".into(), "--lr".into(), lr.into(), "--seed".into(), "4".into(),
            "--out".into(), dir.path().join(out).to_str().unwrap().into(),
        ]
    };
    let run = |a: Vec<String>| latentgaze(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(run(args("a.bin", "0.01")).status.success());
    assert!(run(args("b.bin", "0.01")).status.success());
    assert_eq!(fs::read(dir.path().join("a.bin")).unwrap(), fs::read(dir.path().join("b.bin")).unwrap());
    assert_eq!(run(args("c.bin", "1e30")).status.code(), Some(4));
}

#[test]
fn empty_mask_manipulation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 50}"#);
    let data = dir.path().join("d");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    let mask = dir.path().join("empty.json");
    fs::write(&mask, r#"{"layout": {"n_layers": 14, "layer_dim": 512, "chunk_size": 16}, "chunks": []}"#).unwrap();
    let out = dir.path().join("m");
    ok(&[
        "manipulate", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--mask", p(&mask),
        "--donor-group", "left", "--out", p(&out),
    ]);
    assert_eq!(fs::read(latents(&out)).unwrap(), fs::read(latents(&data)).unwrap());
}

#[test]
fn select_then_manipulate_moves_group_means() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "spec.json", r#"{"n_samples": 300}"#);
    let data = dir.path().join("d");
    ok(&["synth", "--spec", p(&spec), "--out", p(&data)]);
    let report = dir.path().join("r.json");
    ok(&["analyze", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--out", p(&report)]);
    let mask = dir.path().join("mask.json");
    let sel = ok(&["select", "--report", p(&report), "--top", "10", "--out", p(&mask)]);
    assert_eq!(sel["n_selected"], 10);
    let out = dir.path().join("m");
    let res = ok(&[
        "manipulate", "--latents", p(&latents(&data)), "--labels", p(&labels(&data)), "--mask", p(&mask),
        "--donor-group", "left", "--targets", "right", "--out", p(&out),
    ]);
    let before = format::load_dataset(&latents(&data), &labels(&data)).unwrap();
    let after = format::load_dataset(&latents(&out), &labels(&out)).unwrap();
    let chunks: Vec<usize> = serde_json::from_value(sel["chunks"].clone()).unwrap();
    let n_right = before.samples().iter().filter(|s| s.label.yaw_deg() <= -30.0).count();
    assert_eq!(res["n_edited"], n_right);
    let left: Vec<usize> = (0..before.len()).filter(|&i| before.samples()[i].label.yaw_deg() >= 30.0).collect();
    let donor = latentgaze::manipulate::group_mean_code(&before, &left).unwrap();
    for (b, a) in before.samples().iter().zip(after.samples()) {
        let edited = b.label.yaw_deg() <= -30.0;
        for c in 0..448 {
            if edited && chunks.contains(&c) {
                let want: Vec<f64> = donor.chunk(c).iter().map(|&v| v as f32 as f64).collect();
                assert_eq!(a.code.chunk(c), &want[..]);
            } else {
                assert_eq!(a.code.chunk(c), b.code.chunk(c));
            }
        }
    }
}

#[test]
fn shiftsim_grad_check_passes() {
    let out = latentgaze(&["shiftsim", "--grad-check", "--seed", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn shiftsim_keeps_generator_bits() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "pair.json",
        r#"{"source": {"n_samples": 200, "layout": {"n_layers": 2, "layer_dim": 16, "chunk_size": 4}, "planted_chunks": [2, 3], "effect_size": 0.5, "seed": 1},
            "target": {"n_samples": 200, "layout": {"n_layers": 2, "layer_dim": 16, "chunk_size": 4}, "planted_chunks": [2, 3], "effect_size": 0.5, "seed": 2, "offset_std": 1.0}}"#,
    );
    let data = dir.path().join("pair");
    ok(&["synth", "--pair", "--spec", p(&spec), "--out", p(&data)]);
    let (src, tgt) = (data.join("source"), data.join("target"));
    let pipeline = dir.path().join("pipe.bin");
    let log = dir.path().join("log.json");
    let result = ok(&[
        "shiftsim", "--source-latents", p(&latents(&src)), "--source-labels", p(&labels(&src)),
        "--target-latents", p(&latents(&tgt)), "--target-labels", p(&labels(&tgt)),
        "--holdout-latents", p(&latents(&src)), "--holdout-labels", p(&labels(&src)),
        "--epochs", "20", "--seed", "6", "--joint", "--out", p(&pipeline), "--log", p(&log),
    ]);
    assert!(result["domain_gap_shifted"].as_f64().unwrap() < result["domain_gap_raw"].as_f64().unwrap());
    let log: serde_json::Value = serde_json::from_slice(&fs::read(&log).unwrap()).unwrap();
    assert_eq!(log["encoder"].as_array().unwrap().len(), 20);

    let trained = model::read_pipeline(&pipeline).unwrap();
    let source = format::load_dataset(&latents(&src), &labels(&src)).unwrap();
    let images: Vec<Vec<f64>> = source.samples().iter().map(|s| s.code.values().to_vec()).collect();
    let fresh = ToyPipelineParams::from_source(&images, 2, 6).unwrap();
    let bits = |p: &ToyPipelineParams| {
        p.generator().weight().iter().chain(p.generator().bias()).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(bits(&trained), bits(&fresh));
    assert!(trained.extractor_trained());
}

#[test]
fn latent_file_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dir = tempfile::tempdir().unwrap();
    for trial in 0..50 {
        let chunk = [1, 2, 4, 8][trial % 4];
        let layout = LatentLayout::new(rng.random_range(1..4), chunk * rng.random_range(1..5), chunk).unwrap();
        let rows: Vec<Vec<f32>> = (0..rng.random_range(0..20))
            .map(|_| (0..layout.total_dims()).map(|_| f32::from_bits(rng.random())).collect())
            .collect();
        let file = LatentFile::new(layout, rows).unwrap();
        let path = dir.path().join(format!("{trial}.lgz"));
        file.write(&path).unwrap();
        let back = LatentFile::read(&path).unwrap();
        assert_eq!(back.layout, file.layout);
        let bits = |f: &LatentFile| f.rows.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&file));
        assert_eq!(fs::read(&path).unwrap(), file.to_bytes().unwrap());
    }
}

#[test]
fn dataset_files_round_trip() {
    let spec = SynthSpec { n_samples: 20, layout: LatentLayout::new(2, 16, 4).unwrap(), planted_chunks: vec![1], ..Default::default() };
    let ds = generate(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    format::save_dataset(&ds, dir.path()).unwrap();
    let back = format::load_dataset(&latents(dir.path()), &labels(dir.path())).unwrap();
    for (a, b) in ds.samples().iter().zip(back.samples()) {
        assert_eq!(a.id, b.id);
        assert_eq!(a.label, b.label);
        assert!(a.code.values().iter().zip(b.code.values()).all(|(x, y)| (*x as f32) as f64 == *y));
    }
}
