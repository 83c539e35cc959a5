//! Subcommand definitions and their implementations.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use latentgaze::manipulate::{apply_recipe, DonorPolicy, ManipulationRecipe};
use latentgaze::regressor::{self, TrainConfig};
use latentgaze::shiftsim::{
    self, DomainPair, LossWeights, PluggableLosses, ShiftTrainConfig, ToyPipelineParams,
};
use latentgaze::statedit::{analyze, select_chunks, split_groups, AnalysisConfig, SelectionMode, YawRange};
use latentgaze::synth::{self, DomainPairSpec, SynthSpec};
use latentgaze::{GazeLabel, LatentDataset, Sample, SelectionMask};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{input_err, CliError, Result};
use crate::format::{self, write_atomic, LABELS_FILE, LATENTS_FILE};
use crate::model::{self, RegressorModel};
use crate::report::{ReportFile, ReportInputs};

const SHUFFLE_SALT: u64 = 0x005e_ed1a_be15;

#[derive(Debug, Parser)]
#[command(name = "latentgaze", version, about = "Gaze-relevant latent chunk analysis and manipulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic latent dataset with planted gaze chunks.
    Synth(SynthArgs),
    /// Split by yaw, run per-chunk Welch tests and write a report.
    Analyze(AnalyzeArgs),
    /// Turn a report into a chunk mask.
    Select(SelectArgs),
    /// Replace masked chunks of samples with donor content.
    Manipulate(ManipulateArgs),
    /// Train the gaze regressor on masked latents.
    Train(TrainArgs),
    /// Evaluate a trained regressor.
    Eval(EvalArgs),
    /// Train or gradient-check the toy domain-shift pipeline.
    Shiftsim(ShiftsimArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub latents: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
}

impl DataArgs {
    fn load(&self) -> Result<LatentDataset> {
        format::load_dataset(&self.latents, &self.labels)
    }
}

#[derive(Debug, Args)]
#[group(multiple = false)]
pub struct SelectionArgs {
    /// Keep the N best-ranked chunks.
    #[arg(long, value_name = "N")]
    pub top: Option<usize>,
    /// Keep chunks with p-value below A.
    #[arg(long, value_name = "A")]
    pub alpha: Option<f64>,
}

impl SelectionArgs {
    fn mode(&self) -> Option<SelectionMode> {
        self.top.map(SelectionMode::TopN).or(self.alpha.map(SelectionMode::Alpha))
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON spec; fields left out take their defaults.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the spec seed. With --pair it seeds the source and seed + 1 the target.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permute labels across samples after generation.
    #[arg(long)]
    pub shuffle_labels: bool,
    /// Read a source/target pair spec and write `source/` and `target/`.
    #[arg(long, requires = "spec")]
    pub pair: bool,
}

fn parse_range(s: &str) -> std::result::Result<YawRange, String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    YawRange::new(lo, hi).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct RangeArgs {
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "30:90")]
    pub left_range: YawRange,
    #[arg(long, value_parser = parse_range, allow_hyphen_values = true, default_value = "-90:-30")]
    pub right_range: YawRange,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub ranges: RangeArgs,
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long)]
    pub report: PathBuf,
    /// Defaults to the selection recorded in the report.
    #[command(flatten)]
    pub selection: SelectionArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Group {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Targets {
    All,
    Left,
    Right,
}

#[derive(Debug, Args)]
pub struct ManipulateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Mask JSON written by `select`.
    #[arg(long)]
    pub mask: PathBuf,
    /// Use this sample's code as the donor.
    #[arg(long, conflicts_with = "donor_group")]
    pub donor_sample: Option<String>,
    /// Use the mean code of a yaw group as the donor.
    #[arg(long, value_enum)]
    pub donor_group: Option<Group>,
    /// Samples to edit; the rest are copied unchanged.
    #[arg(long, value_enum, default_value = "all")]
    pub targets: Targets,
    #[command(flatten)]
    pub ranges: RangeArgs,
    /// Output directory for latents.lgz and labels.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Mask JSON; all chunks when omitted.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON loss-curve log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ShiftsimArgs {
    /// Compare analytic and finite-difference gradients on random pipelines.
    #[arg(long)]
    pub grad_check: bool,
    #[arg(long, default_value_t = 8)]
    pub image_dim: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, required_unless_present = "grad_check")]
    pub source_latents: Option<PathBuf>,
    #[arg(long, required_unless_present = "grad_check")]
    pub source_labels: Option<PathBuf>,
    #[arg(long, required_unless_present = "grad_check")]
    pub target_latents: Option<PathBuf>,
    #[arg(long, required_unless_present = "grad_check")]
    pub target_labels: Option<PathBuf>,
    #[arg(long, requires = "holdout_labels")]
    pub holdout_latents: Option<PathBuf>,
    #[arg(long, requires = "holdout_latents")]
    pub holdout_labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub latent_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.005)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_l2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_gd: f64,
    /// Keep updating the extractor during encoder training.
    #[arg(long)]
    pub joint: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pipeline file.
    #[arg(long, required_unless_present = "grad_check")]
    pub out: Option<PathBuf>,
    /// JSON loss-curve log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Select(a) => cmd_select(a),
        Command::Manipulate(a) => cmd_manipulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Shiftsim(a) => cmd_shiftsim(a),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_err!("{}: {e}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| input_err!("cannot encode JSON: {e}"))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn generate_into(spec: &SynthSpec, domain: synth::Domain, shuffle: bool, dir: &Path) -> Result<Value> {
    let mut ds = synth::generate_for(spec, domain)?;
    if shuffle {
        synth::shuffle_labels(&mut ds, spec.seed ^ SHUFFLE_SALT)?;
    }
    format::save_dataset(&ds, dir)?;
    Ok(json!({
        "n_samples": ds.len(),
        "layout": ds.layout(),
        "seed": spec.seed,
        "latents": dir.join(LATENTS_FILE),
        "labels": dir.join(LABELS_FILE),
    }))
}

fn cmd_synth(a: &SynthArgs) -> Result<Value> {
    if a.pair {
        let mut pair: DomainPairSpec = read_json(a.spec.as_ref().expect("clap requires --spec"))?;
        if let Some(seed) = a.seed {
            pair.source.seed = seed;
            pair.target.seed = seed.wrapping_add(1);
        }
        pair.validate()?;
        let source = generate_into(&pair.source, synth::Domain::Train, a.shuffle_labels, &a.out.join("source"))?;
        let target = generate_into(&pair.target, synth::Domain::Test, a.shuffle_labels, &a.out.join("target"))?;
        return Ok(json!({ "source": source, "target": target }));
    }
    let mut spec: SynthSpec = match &a.spec {
        Some(p) => read_json(p)?,
        None => SynthSpec::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    generate_into(&spec, synth::Domain::Train, a.shuffle_labels, &a.out)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<Value> {
    let ds = a.data.load()?;
    let n_chunks = ds.layout().n_chunks();
    let selection = a.selection.mode().unwrap_or(SelectionMode::TopN(64.min(n_chunks)));
    let config = AnalysisConfig { left_range: a.ranges.left_range, right_range: a.ranges.right_range, selection };
    let report = analyze(&ds, &config)?;
    let inputs = ReportInputs {
        latents: a.data.latents.display().to_string(),
        labels: a.data.labels.display().to_string(),
    };
    let file = ReportFile::from_report(&report, inputs, a.seed);
    file.write(&a.out)?;
    Ok(json!({
        "report": a.out,
        "split": file.split,
        "n_selected": file.selected.len(),
        "selected": file.selected,
        "warnings": file.warnings,
    }))
}

fn cmd_select(a: &SelectArgs) -> Result<Value> {
    let file = ReportFile::read(&a.report)?;
    let report = file.to_report()?;
    let mode = a.selection.mode().unwrap_or(report.config.selection);
    let mask = select_chunks(&report, mode)?;
    write_json(&a.out, &mask)?;
    Ok(json!({ "mask": a.out, "mode": mode, "n_selected": mask.len(), "chunks": mask.chunks() }))
}

fn read_mask(path: &Path, dataset: &LatentDataset) -> Result<SelectionMask> {
    let mask: SelectionMask = read_json(path)?;
    if mask.layout() != dataset.layout() {
        return Err(input_err!("{}: mask layout differs from the data layout", path.display()));
    }
    Ok(mask)
}

fn cmd_manipulate(a: &ManipulateArgs) -> Result<Value> {
    let ds = a.data.load()?;
    let mask = read_mask(&a.mask, &ds)?;
    let split = split_groups(&ds, a.ranges.left_range, a.ranges.right_range)?;
    let donor = match (&a.donor_sample, a.donor_group) {
        (Some(id), _) => {
            let s = ds.samples().iter().find(|s| &s.id == id).ok_or_else(|| input_err!("no sample with id {id}"))?;
            DonorPolicy::FromCode(s.code.clone())
        }
        (None, Some(Group::Left)) => DonorPolicy::FromGroupMean(split.left.clone()),
        (None, Some(Group::Right)) => DonorPolicy::FromGroupMean(split.right.clone()),
        (None, None) => return Err(input_err!("one of --donor-sample or --donor-group is required")),
    };
    let recipe = ManipulationRecipe { mask, donor };
    let edit: Vec<bool> = match a.targets {
        Targets::All => vec![true; ds.len()],
        Targets::Left | Targets::Right => {
            let group = if a.targets == Targets::Left { &split.left } else { &split.right };
            let mut v = vec![false; ds.len()];
            group.iter().for_each(|&i| v[i] = true);
            v
        }
    };
    let mut samples = Vec::with_capacity(ds.len());
    for (s, &e) in ds.samples().iter().zip(&edit) {
        let code = if e { apply_recipe(&s.code, &recipe, Some(&ds))? } else { s.code.clone() };
        samples.push(Sample { code, ..s.clone() });
    }
    let out = LatentDataset::from_samples(*ds.layout(), samples)?;
    format::save_dataset(&out, &a.out)?;
    Ok(json!({
        "n_samples": out.len(),
        "n_edited": edit.iter().filter(|&&e| e).count(),
        "n_chunks_replaced": recipe.mask.len(),
        "latents": a.out.join(LATENTS_FILE),
        "labels": a.out.join(LABELS_FILE),
    }))
}

fn cmd_train(a: &TrainArgs) -> Result<Value> {
    let ds = a.data.load()?;
    let mask = match &a.mask {
        Some(p) => read_mask(p, &ds)?,
        None => SelectionMask::all(*ds.layout()),
    };
    let config = TrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        hidden: a.hidden,
        seed: a.seed,
    };
    let trained = regressor::train(&ds, &mask, &config)?;
    let mse = regressor::mean_squared_error(&trained.params, &ds, &mask)?;
    RegressorModel { mask: mask.clone(), params: trained.params }.write(&a.out)?;
    if let Some(log) = &a.log {
        write_json(log, &json!({ "config": config, "loss_curve": trained.loss_curve }))?;
    }
    Ok(json!({
        "model": a.out,
        "config": config,
        "n_samples": ds.len(),
        "n_chunks": mask.len(),
        "final_epoch_loss": trained.loss_curve.last(),
        "train_mse": mse,
    }))
}

fn cmd_eval(a: &EvalArgs) -> Result<Value> {
    let model = RegressorModel::read(&a.model)?;
    let ds = a.data.load()?;
    if model.mask.layout() != ds.layout() {
        return Err(input_err!("model layout differs from the data layout"));
    }
    let err = regressor::evaluate(&model.params, &ds, &model.mask)?;
    let mse = regressor::mean_squared_error(&model.params, &ds, &model.mask)?;
    let result = json!({
        "model": a.model,
        "n_samples": ds.len(),
        "mean_angular_error_deg": err,
        "mse_rad2": mse,
        "seed": a.seed,
    });
    if let Some(out) = &a.out {
        write_json(out, &result)?;
    }
    Ok(result)
}

fn grad_check_run(a: &ShiftsimArgs) -> Result<Value> {
    if a.image_dim == 0 || a.latent_dim == 0 || a.latent_dim > a.image_dim || a.trials == 0 {
        return Err(input_err!("grad check needs 1 <= latent-dim <= image-dim and at least one trial"));
    }
    let weights = LossWeights { lambda_l2: a.lambda_l2, lambda_gd: a.lambda_gd, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut worst = 0.0f64;
    for _ in 0..a.trials {
        let (m, d) = (a.image_dim, a.latent_dim);
        let mut affine = |o: usize, i: usize| {
            let w = (0..o * i).map(|_| rng.random_range(-0.5..0.5)).collect();
            let b = (0..o).map(|_| rng.random_range(-0.5..0.5)).collect();
            shiftsim::Affine::new(o, i, w, b)
        };
        let params = ToyPipelineParams::new(affine(d, m)?, affine(m, d)?, affine(2, m)?, true)?;
        let image: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = GazeLabel::new(rng.random_range(-80.0..80.0), rng.random_range(-40.0..40.0))?;
        worst = worst.max(shiftsim::grad_check(&params, &image, &label, &weights)?);
    }
    Ok(json!({
        "trials": a.trials,
        "image_dim": a.image_dim,
        "latent_dim": a.latent_dim,
        "max_relative_error": worst,
        "passed": worst < 1e-4,
    }))
}

fn images(xs: &[shiftsim::ImageSample]) -> Vec<Vec<f64>> {
    xs.iter().map(|s| s.image.clone()).collect()
}

fn cmd_shiftsim(a: &ShiftsimArgs) -> Result<Value> {
    if a.grad_check {
        return grad_check_run(a);
    }
    let need = |p: &Option<PathBuf>| p.clone().expect("clap requires the data paths");
    let source = format::load_dataset(&need(&a.source_latents), &need(&a.source_labels))?;
    let target = format::load_dataset(&need(&a.target_latents), &need(&a.target_labels))?;
    let pair = DomainPair::from_datasets(&source, &target)?;
    let held_out = match (&a.holdout_latents, &a.holdout_labels) {
        (Some(l), Some(b)) => Some(DomainPair::from_datasets(&format::load_dataset(l, b)?, &target)?.source),
        _ => None,
    };
    let weights = LossWeights { lambda_l2: a.lambda_l2, lambda_gd: a.lambda_gd, ..Default::default() };
    let config = ShiftTrainConfig {
        learning_rate: a.lr,
        momentum: a.momentum,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        joint: a.joint,
    };
    let plug = PluggableLosses::default();
    let source_images = images(&pair.source);
    let p0 = ToyPipelineParams::from_source(&source_images, a.latent_dim, a.seed)?;
    let (p1, extractor_log) = shiftsim::train_extractor(&p0, &pair.source, &config)?;
    let (p2, encoder_log) = shiftsim::train_encoder(&p1, &pair.source, &weights, &plug, &config)?;
    model::write_pipeline(&need(&a.out), &p2)?;
    if let Some(log) = &a.log {
        write_json(log, &json!({ "extractor": extractor_log, "encoder": encoder_log }))?;
    }

    let raw = images(&pair.target);
    let shifted: Vec<Vec<f64>> = raw.iter().map(|x| p2.shift(x)).collect();
    let held = match &held_out {
        Some(h) => Some(shiftsim::mean_loss_terms(&p2, h, &weights, &plug)?),
        None => None,
    };
    Ok(json!({
        "pipeline": a.out,
        "config": config,
        "weights": weights,
        "extractor_mse": shiftsim::extractor_mse(&p1, &pair.source)?,
        "source_terms": shiftsim::mean_loss_terms(&p2, &pair.source, &weights, &plug)?,
        "held_out_terms": held,
        "domain_gap_raw": shiftsim::domain_gap(shiftsim::identity_features, &raw, &source_images)?,
        "domain_gap_shifted": shiftsim::domain_gap(shiftsim::identity_features, &shifted, &source_images)?,
    }))
}
