use latentgaze::regressor::*;
use latentgaze::statedit::{analyze, AnalysisConfig, SelectionMode};
use latentgaze::synth::{generate, SynthSpec};
use latentgaze::{GazeLabel, LatentCode, LatentDataset, LatentLayout, Sample, SelectionMask};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn linear_dataset(layout: LatentLayout, n: usize, seed: u64) -> (LatentDataset, SelectionMask) {
    let mask = SelectionMask::new(layout, vec![0, 2]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = layout.total_dims();
    let wy: Vec<f64> = (0..mask.n_elements()).map(|_| rng.random_range(-10.0..10.0)).collect();
    let wp: Vec<f64> = (0..mask.n_elements()).map(|_| rng.random_range(-5.0..5.0)).collect();
    let samples = (0..n).map(|i| {
        let values: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = mask.gather(&values);
        let yaw: f64 = 5.0 + x.iter().zip(&wy).map(|(a, b)| a * b).sum::<f64>();
        let pitch: f64 = -3.0 + x.iter().zip(&wp).map(|(a, b)| a * b).sum::<f64>();
        Sample {
            id: format!("s{i}"),
            code: LatentCode::new(layout, values).unwrap(),
            label: GazeLabel::new(yaw, pitch).unwrap(),
        }
    });
    (LatentDataset::from_samples(layout, samples).unwrap(), mask)
}

#[test]
fn linear_labels_are_fit_exactly() {
    let layout = LatentLayout::new(1, 8, 2).unwrap();
    let (ds, mask) = linear_dataset(layout, 64, 3);
    let cfg = TrainConfig { learning_rate: 0.01, momentum: 0.9, epochs: 2000, batch_size: 16, hidden: 8, seed: 1 };
    let trained = train(&ds, &mask, &cfg).unwrap();
    let mse = mean_squared_error(&trained.params, &ds, &mask).unwrap();
    assert!(mse < 1e-4, "mse {mse}");
}

#[test]
fn zero_first_layer_has_no_sensitivity() {
    let layout = LatentLayout::new(1, 8, 2).unwrap();
    let (ds, mask) = linear_dataset(layout, 10, 4);
    let mut p = RegressorParams::init(&mask, 6, 0);
    p.w1.iter_mut().for_each(|w| *w = 0.0);
    p.b1.iter_mut().for_each(|b| *b = 1.0);
    let report = gradient_sensitivity(&p, &ds, &mask).unwrap();
    assert!(report.element.iter().all(|&v| v == 0.0));
    assert!(report.chunk.iter().all(|&v| v == 0.0));
}

fn planted_spec(seed: u64) -> SynthSpec {
    let layout = LatentLayout::new(4, 128, 16).unwrap();
    SynthSpec { layout, n_samples: 1200, planted_chunks: (8..16).collect(), seed, ..Default::default() }
}

#[test]
fn sensitivity_agrees_with_t_test_selection() {
    let spec = planted_spec(7);
    let ds = generate(&spec).unwrap();
    let k = spec.planted_chunks.len();
    let cfg = AnalysisConfig { selection: SelectionMode::TopN(k), ..Default::default() };
    let selected = analyze(&ds, &cfg).unwrap().selected_mask();

    let all = SelectionMask::all(spec.layout);
    let tc = TrainConfig { learning_rate: 0.002, epochs: 30, hidden: 32, seed: 7, ..Default::default() };
    let trained = train(&ds, &all, &tc).unwrap();
    let report = gradient_sensitivity(&trained.params, &ds, &all).unwrap();
    let overlap = report.top(k).iter().filter(|&&c| selected.contains(c)).count();
    assert!(overlap as f64 >= 0.7 * k as f64, "overlap {overlap}/{k}");
}

#[test]
fn planted_mask_beats_random_mask() {
    for seed in 0..5 {
        let spec = planted_spec(seed);
        let train_ds = generate(&spec).unwrap();
        let test_ds = generate(&SynthSpec { seed: seed + 100, n_samples: 400, ..spec.clone() }).unwrap();
        let planted = spec.planted_mask().unwrap();
        let mut chunks: Vec<usize> = (0..spec.layout.n_chunks()).collect();
        chunks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let random = SelectionMask::new(spec.layout, chunks[..planted.len()].to_vec()).unwrap();

        let tc = TrainConfig { learning_rate: 0.002, epochs: 30, hidden: 32, seed, ..Default::default() };
        let err = |mask: &SelectionMask| {
            let t = train(&train_ds, mask, &tc).unwrap();
            evaluate(&t.params, &test_ds, mask).unwrap()
        };
        let (e_planted, e_random) = (err(&planted), err(&random));
        assert!(e_planted <= e_random, "seed {seed}: {e_planted} > {e_random}");
    }
}

#[test]
fn training_is_reproducible() {
    let spec = SynthSpec { n_samples: 200, ..planted_spec(2) };
    let ds = generate(&spec).unwrap();
    let mask = spec.planted_mask().unwrap();
    let tc = TrainConfig { epochs: 3, hidden: 8, seed: 9, ..Default::default() };
    let a = train(&ds, &mask, &tc).unwrap();
    let b = train(&ds, &mask, &tc).unwrap();
    assert_eq!(a, b);
    assert_eq!(evaluate(&a.params, &ds, &mask).unwrap().to_bits(), evaluate(&b.params, &ds, &mask).unwrap().to_bits());
}
