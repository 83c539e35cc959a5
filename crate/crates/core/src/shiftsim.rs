//! A small affine encoder / generator / extractor pipeline for studying
//! gaze-preserving domain shift.
//!
//! The encoder `E` maps an image vector to a latent, the generator `G` maps
//! the latent back to an image, and the extractor `F` reads yaw and pitch
//! (radians) off an image. `G` is fitted once to source images (mean plus
//! leading principal directions) and never changes afterwards. Training runs
//! in two phases: first `F` is fitted to source labels, then `E` is trained
//! on a weighted sum of reconstruction and gaze-distortion losses with `F`
//! held fixed (or, in joint mode, updated along with `E`).

use alloc::boxed::Box;
use alloc::vec::Vec;

use libm::sqrt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Error, Result};
use crate::gaze::{angles_to_vector, angles_to_vector_jacobian, GazeLabel, Vec3};
use crate::layout::LatentDataset;
use crate::numeric::{max_gradient_error, CompensatedSum};

/// Finite-difference step used by [`grad_check`].
pub const GRAD_CHECK_STEP: f64 = 1e-5;
/// Derivatives smaller than this in magnitude are not compared relatively.
pub const GRAD_CHECK_FLOOR: f64 = 1e-7;

/// `y = W x + b` with `W` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    weight: Vec<f64>,
    bias: Vec<f64>,
    inputs: usize,
}

impl Affine {
    pub fn new(outputs: usize, inputs: usize, weight: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weight.len() != outputs * inputs || bias.len() != outputs {
            bail!(Structural, "affine map {outputs}x{inputs} got {} weights and {} biases", weight.len(), bias.len());
        }
        if weight.iter().chain(&bias).any(|v| !v.is_finite()) {
            bail!(Domain, "affine parameters must be finite");
        }
        Ok(Self { weight, bias, inputs })
    }

    pub fn zeros(outputs: usize, inputs: usize) -> Self {
        Self { weight: alloc::vec![0.0; outputs * inputs], bias: alloc::vec![0.0; outputs], inputs }
    }

    fn uniform(outputs: usize, inputs: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut a = Self::zeros(outputs, inputs);
        a.weight.iter_mut().for_each(|w| *w = rng.random_range(-scale..=scale));
        a
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// `Wᵀ y`
    fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.inputs];
        for (row, &g) in self.weight.chunks_exact(self.inputs).zip(y) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * g;
            }
        }
        out
    }

    /// Adds the gradient of `⟨d_out, W x + b⟩` to `self`.
    fn accumulate(&mut self, d_out: &[f64], x: &[f64], scale: f64) {
        for ((row, b), &g) in self.weight.chunks_exact_mut(self.inputs).zip(self.bias.iter_mut()).zip(d_out) {
            *b += scale * g;
            for (w, v) in row.iter_mut().zip(x) {
                *w += scale * g * v;
            }
        }
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn to_flat(&self) -> Vec<f64> {
        self.weight.iter().chain(&self.bias).copied().collect()
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let n = self.weight.len();
        self.weight.copy_from_slice(&flat[..n]);
        self.bias.copy_from_slice(&flat[n..]);
    }

    fn step(&mut self, velocity: &mut Affine, grad: &Affine, lr: f64, momentum: f64) {
        let pairs = self.weight.iter_mut().chain(self.bias.iter_mut());
        let vel = velocity.weight.iter_mut().chain(velocity.bias.iter_mut());
        let grads = grad.weight.iter().chain(&grad.bias);
        for ((p, v), g) in pairs.zip(vel).zip(grads) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyPipelineParams {
    pub encoder: Affine,
    generator: Affine,
    pub extractor: Affine,
    extractor_trained: bool,
}

impl ToyPipelineParams {
    pub fn new(encoder: Affine, generator: Affine, extractor: Affine, extractor_trained: bool) -> Result<Self> {
        let m = encoder.inputs();
        let d = encoder.outputs();
        if generator.inputs() != d || generator.outputs() != m || extractor.inputs() != m || extractor.outputs() != 2 {
            bail!(Structural, "encoder {m}->{d}, generator {}->{}, extractor {}->{} do not chain",
                generator.inputs(), generator.outputs(), extractor.inputs(), extractor.outputs());
        }
        Ok(Self { encoder, generator, extractor, extractor_trained })
    }

    /// Fits the generator to `source_images` (mean plus the `latent_dim`
    /// leading principal directions) and draws a small random encoder and
    /// extractor from `seed`.
    pub fn from_source(source_images: &[Vec<f64>], latent_dim: usize, seed: u64) -> Result<Self> {
        let Some(first) = source_images.first() else {
            bail!(InsufficientData, "no source images");
        };
        let m = first.len();
        if latent_dim == 0 || latent_dim > m {
            bail!(Config, "latent dimension {latent_dim} must lie in 1..={m}");
        }
        if source_images.iter().any(|x| x.len() != m) {
            bail!(Structural, "source images differ in dimension");
        }
        let mean = mean_vector(source_images);
        let dirs = principal_directions(source_images, &mean, latent_dim, seed);
        let mut g_weight = alloc::vec![0.0; m * latent_dim];
        for (j, dir) in dirs.iter().enumerate() {
            for i in 0..m {
                g_weight[i * latent_dim + j] = dir[i];
            }
        }
        let generator = Affine::new(m, latent_dim, g_weight, mean)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Affine::uniform(latent_dim, m, 0.05, &mut rng);
        let extractor = Affine::uniform(2, m, 0.05, &mut rng);
        Self::new(encoder, generator, extractor, false)
    }

    pub fn generator(&self) -> &Affine {
        &self.generator
    }

    pub fn extractor_trained(&self) -> bool {
        self.extractor_trained
    }

    pub fn image_dim(&self) -> usize {
        self.encoder.inputs()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.outputs()
    }

    /// `G(E(image))`
    pub fn shift(&self, image: &[f64]) -> Vec<f64> {
        self.generator.apply(&self.encoder.apply(image))
    }

    /// `F(image)` as radian yaw and pitch.
    pub fn extract(&self, image: &[f64]) -> [f64; 2] {
        let a = self.extractor.apply(image);
        [a[0], a[1]]
    }

    /// Learnable parameters, encoder first then extractor.
    pub fn learnable_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.to_flat();
        v.extend(self.extractor.to_flat());
        v
    }

    fn set_learnable_flat(&mut self, flat: &[f64]) {
        let n = self.encoder.n_params();
        self.encoder.set_flat(&flat[..n]);
        self.extractor.set_flat(&flat[n..]);
    }

    fn check_image(&self, image: &[f64]) -> Result<()> {
        if image.len() != self.image_dim() {
            bail!(Structural, "image has {} elements, pipeline expects {}", image.len(), self.image_dim());
        }
        Ok(())
    }
}

fn mean_vector(xs: &[Vec<f64>]) -> Vec<f64> {
    let mut mean = alloc::vec![0.0; xs[0].len()];
    for x in xs {
        mean.iter_mut().zip(x).for_each(|(m, v)| *m += v);
    }
    let n = xs.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Leading eigenvectors of the sample covariance by power iteration with
/// deflation.
fn principal_directions(xs: &[Vec<f64>], mean: &[f64], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let m = mean.len();
    let mut cov = alloc::vec![0.0; m * m];
    for x in xs {
        let c: Vec<f64> = x.iter().zip(mean).map(|(v, mu)| v - mu).collect();
        for i in 0..m {
            for j in 0..m {
                cov[i * m + j] += c[i] * c[j];
            }
        }
    }
    let n = xs.len().max(2) as f64 - 1.0;
    cov.iter_mut().for_each(|v| *v /= n);

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9ca);
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        for _ in 0..500 {
            let mut w: Vec<f64> = (0..m).map(|i| (0..m).map(|j| cov[i * m + j] * v[j]).sum()).collect();
            // keep the iterate orthogonal to directions already found
            for d in &dirs {
                let p: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
                w.iter_mut().zip(d).for_each(|(a, b)| *a -= p * b);
            }
            let norm = sqrt(w.iter().map(|a| a * a).sum());
            if norm == 0.0 {
                break;
            }
            w.iter_mut().for_each(|a| *a /= norm);
            v = w;
        }
        dirs.push(v);
    }
    dirs
}

/// A loss on `(image, reconstruction)` that plugs into [`total_loss`].
pub trait ReconstructionLoss {
    fn value(&self, image: &[f64], recon: &[f64]) -> f64;
    /// Gradient with respect to `recon`.
    fn gradient(&self, image: &[f64], recon: &[f64]) -> Vec<f64>;
}

/// Contributes nothing; stands in for perceptual and identity losses that
/// need pretrained networks.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroLoss;

impl ReconstructionLoss for ZeroLoss {
    fn value(&self, _: &[f64], _: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, _: &[f64], recon: &[f64]) -> Vec<f64> {
        alloc::vec![0.0; recon.len()]
    }
}

pub struct PluggableLosses {
    pub lpips: Box<dyn ReconstructionLoss>,
    pub sim: Box<dyn ReconstructionLoss>,
}

impl Default for PluggableLosses {
    fn default() -> Self {
        Self { lpips: Box::new(ZeroLoss), sim: Box::new(ZeroLoss) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossWeights {
    pub lambda_l2: f64,
    pub lambda_lpips: f64,
    pub lambda_sim: f64,
    pub lambda_gd: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_l2: 1.0, lambda_lpips: 0.0, lambda_sim: 0.0, lambda_gd: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_l2, self.lambda_lpips, self.lambda_sim, self.lambda_gd];
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            bail!(Config, "loss weights must be finite and nonnegative");
        }
        Ok(())
    }
}

/// An image vector with its gaze label.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub image: Vec<f64>,
    pub label: GazeLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainPair {
    pub source: Vec<ImageSample>,
    pub target: Vec<ImageSample>,
}

impl DomainPair {
    pub fn new(source: Vec<ImageSample>, target: Vec<ImageSample>) -> Result<Self> {
        let dim = source.first().or(target.first()).map(|s| s.image.len());
        if source.iter().chain(&target).any(|s| Some(s.image.len()) != dim) {
            bail!(Structural, "source and target images must share one dimension");
        }
        Ok(Self { source, target })
    }

    /// Uses each latent code's values as an image vector.
    pub fn from_datasets(source: &LatentDataset, target: &LatentDataset) -> Result<Self> {
        let conv = |ds: &LatentDataset| {
            ds.samples().iter().map(|s| ImageSample { image: s.code.values().to_vec(), label: s.label }).collect()
        };
        Self::new(conv(source), conv(target))
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn gaze_residual(angles: [f64; 2], label: &GazeLabel) -> Vec3 {
    let v = angles_to_vector(angles[0], angles[1]);
    let g = label.to_vector();
    [v[0] - g[0], v[1] - g[1], v[2] - g[2]]
}

/// `‖F(G(E(image))) − g‖²`, comparing unit gaze vectors.
pub fn gaze_distortion_loss(params: &ToyPipelineParams, image: &[f64], label: &GazeLabel) -> Result<f64> {
    params.check_image(image)?;
    let r = gaze_residual(params.extract(&params.shift(image)), label);
    Ok(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
}

/// `‖image − G(E(image))‖²`
pub fn reconstruction_loss(params: &ToyPipelineParams, image: &[f64]) -> Result<f64> {
    params.check_image(image)?;
    Ok(squared_distance(image, &params.shift(image)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LossTerms {
    pub l2: f64,
    pub lpips: f64,
    pub sim: f64,
    pub gd: f64,
    pub total: f64,
}

fn loss_terms(params: &ToyPipelineParams, image: &[f64], label: &GazeLabel, w: &LossWeights, plug: &PluggableLosses) -> LossTerms {
    let recon = params.shift(image);
    let r = gaze_residual(params.extract(&recon), label);
    let l2 = squared_distance(image, &recon);
    let lpips = plug.lpips.value(image, &recon);
    let sim = plug.sim.value(image, &recon);
    let gd = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let total = w.lambda_l2 * l2 + w.lambda_lpips * lpips + w.lambda_sim * sim + w.lambda_gd * gd;
    LossTerms { l2, lpips, sim, gd, total }
}

/// Weighted sum of reconstruction, pluggable, and gaze-distortion losses.
pub fn total_loss(
    params: &ToyPipelineParams,
    image: &[f64],
    label: &GazeLabel,
    weights: &LossWeights,
    losses: &PluggableLosses,
) -> Result<f64> {
    weights.validate()?;
    params.check_image(image)?;
    Ok(loss_terms(params, image, label, weights, losses).total)
}

/// Gradients of the total loss with respect to encoder and extractor.
struct Grads {
    encoder: Affine,
    extractor: Affine,
}

impl Grads {
    fn zeros(p: &ToyPipelineParams) -> Self {
        Self {
            encoder: Affine::zeros(p.latent_dim(), p.image_dim()),
            extractor: Affine::zeros(2, p.image_dim()),
        }
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut v = self.encoder.to_flat();
        v.extend(self.extractor.to_flat());
        v
    }
}

fn accumulate_total_grad(
    p: &ToyPipelineParams,
    image: &[f64],
    label: &GazeLabel,
    w: &LossWeights,
    plug: &PluggableLosses,
    scale: f64,
    grads: &mut Grads,
) {
    let latent = p.encoder.apply(image);
    let recon = p.generator.apply(&latent);
    let angles = p.extract(&recon);
    let r = gaze_residual(angles, label);
    let jac = angles_to_vector_jacobian(angles[0], angles[1]);
    let d_angles: Vec<f64> = jac
        .iter()
        .map(|col| 2.0 * w.lambda_gd * (col[0] * r[0] + col[1] * r[1] + col[2] * r[2]))
        .collect();

    let mut d_recon = p.extractor.apply_transpose(&d_angles);
    let lp = plug.lpips.gradient(image, &recon);
    let sm = plug.sim.gradient(image, &recon);
    for i in 0..recon.len() {
        d_recon[i] += 2.0 * w.lambda_l2 * (recon[i] - image[i]) + w.lambda_lpips * lp[i] + w.lambda_sim * sm[i];
    }
    let d_latent = p.generator.apply_transpose(&d_recon);
    grads.encoder.accumulate(&d_latent, image, scale);
    grads.extractor.accumulate(&d_angles, &recon, scale);
}

/// Worst relative disagreement between analytic gradients of
/// [`total_loss`] and central differences, over every encoder and extractor
/// parameter.
pub fn grad_check(params: &ToyPipelineParams, image: &[f64], label: &GazeLabel, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    params.check_image(image)?;
    let plug = PluggableLosses::default();
    let mut grads = Grads::zeros(params);
    accumulate_total_grad(params, image, label, weights, &plug, 1.0, &mut grads);
    let mut probe = params.clone();
    Ok(max_gradient_error(&params.learnable_flat(), &grads.to_flat(), GRAD_CHECK_STEP, GRAD_CHECK_FLOOR, |flat| {
        probe.set_learnable_flat(flat);
        loss_terms(&probe, image, label, weights, &plug).total
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ShiftTrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Also update the extractor during encoder training.
    pub joint: bool,
}

impl Default for ShiftTrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, epochs: 100, batch_size: 32, seed: 0, joint: false }
    }
}

impl ShiftTrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || !(0.0..1.0).contains(&self.momentum) {
            bail!(Config, "learning rate must be finite and nonnegative, momentum in [0, 1)");
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub l2: f64,
    pub gd: f64,
}

fn check_samples(params: &ToyPipelineParams, data: &[ImageSample]) -> Result<()> {
    if data.is_empty() {
        bail!(InsufficientData, "no training samples");
    }
    data.iter().try_for_each(|s| params.check_image(&s.image))
}

fn diverged(epoch: usize, log: &[EpochLog]) -> Error {
    Error::Diverged { epoch, last_finite_loss: log.last().map_or(f64::NAN, |l| l.loss) }
}

/// Phase 1: fits the extractor to source labels by minibatch gradient
/// descent on the mean squared radian error. Encoder and generator are
/// untouched.
pub fn train_extractor(
    params: &ToyPipelineParams,
    source: &[ImageSample],
    config: &ShiftTrainConfig,
) -> Result<(ToyPipelineParams, Vec<EpochLog>)> {
    config.validate()?;
    check_samples(params, source)?;
    let mut p = params.clone();
    let mut velocity = Affine::zeros(2, p.image_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = CompensatedSum::default();
        for batch in order.chunks(config.batch_size) {
            let mut grad = Affine::zeros(2, p.image_dim());
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &source[i];
                let a = p.extract(&s.image);
                let t = s.label.to_radians();
                let r = [a[0] - t[0], a[1] - t[1]];
                sum.add(r[0] * r[0] + r[1] * r[1]);
                grad.accumulate(&[2.0 * r[0], 2.0 * r[1]], &s.image, scale);
            }
            p.extractor.step(&mut velocity, &grad, config.learning_rate, config.momentum);
        }
        let loss = sum.value() / source.len() as f64;
        if !loss.is_finite() || p.extractor.to_flat().iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, &log));
        }
        log.push(EpochLog { epoch, loss, l2: 0.0, gd: 0.0 });
    }
    p.extractor_trained = true;
    Ok((p, log))
}

/// Mean squared radian error of the extractor on raw images.
pub fn extractor_mse(params: &ToyPipelineParams, data: &[ImageSample]) -> Result<f64> {
    check_samples(params, data)?;
    let sum: CompensatedSum = data
        .iter()
        .map(|s| {
            let a = params.extract(&s.image);
            let t = s.label.to_radians();
            (a[0] - t[0]) * (a[0] - t[0]) + (a[1] - t[1]) * (a[1] - t[1])
        })
        .collect();
    Ok(sum.value() / data.len() as f64)
}

/// Phase 2: trains the encoder on [`total_loss`] with the generator fixed
/// and the extractor fixed unless `config.joint`. Rejects parameters whose
/// extractor has not been through phase 1.
pub fn train_encoder(
    params: &ToyPipelineParams,
    source: &[ImageSample],
    weights: &LossWeights,
    losses: &PluggableLosses,
    config: &ShiftTrainConfig,
) -> Result<(ToyPipelineParams, Vec<EpochLog>)> {
    weights.validate()?;
    config.validate()?;
    if !params.extractor_trained {
        bail!(Config, "extractor must be trained (phase 1) before encoder training");
    }
    check_samples(params, source)?;
    let mut p = params.clone();
    let mut vel = Grads::zeros(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..source.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut l2, mut gd) = (CompensatedSum::default(), CompensatedSum::default(), CompensatedSum::default());
        for batch in order.chunks(config.batch_size) {
            let mut grads = Grads::zeros(&p);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &source[i];
                let terms = loss_terms(&p, &s.image, &s.label, weights, losses);
                total.add(terms.total);
                l2.add(terms.l2);
                gd.add(terms.gd);
                accumulate_total_grad(&p, &s.image, &s.label, weights, losses, scale, &mut grads);
            }
            p.encoder.step(&mut vel.encoder, &grads.encoder, config.learning_rate, config.momentum);
            if config.joint {
                p.extractor.step(&mut vel.extractor, &grads.extractor, config.learning_rate, config.momentum);
            }
        }
        let n = source.len() as f64;
        let entry = EpochLog { epoch, loss: total.value() / n, l2: l2.value() / n, gd: gd.value() / n };
        if !entry.loss.is_finite() || p.learnable_flat().iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, &log));
        }
        log.push(entry);
    }
    Ok((p, log))
}

/// Mean of each loss term over `data`.
pub fn mean_loss_terms(
    params: &ToyPipelineParams,
    data: &[ImageSample],
    weights: &LossWeights,
    losses: &PluggableLosses,
) -> Result<LossTerms> {
    weights.validate()?;
    check_samples(params, data)?;
    let mut sums = [CompensatedSum::default(); 5];
    for s in data {
        let t = loss_terms(params, &s.image, &s.label, weights, losses);
        for (acc, v) in sums.iter_mut().zip([t.l2, t.lpips, t.sim, t.gd, t.total]) {
            acc.add(v);
        }
    }
    let n = data.len() as f64;
    let [l2, lpips, sim, gd, total] = sums.map(|s| s.value() / n);
    Ok(LossTerms { l2, lpips, sim, gd, total })
}

pub fn identity_features(x: &[f64]) -> Vec<f64> {
    x.to_vec()
}

/// `‖mean φ(shifted) − mean φ(source)‖`, a proxy for the gap between a
/// shifted target domain and the source domain under feature map `φ`.
pub fn domain_gap<F>(feature_map: F, shifted_targets: &[Vec<f64>], source: &[Vec<f64>]) -> Result<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if shifted_targets.is_empty() || source.is_empty() {
        bail!(InsufficientData, "domain gap needs nonempty target and source sets");
    }
    let dim = source[0].len();
    if shifted_targets.iter().chain(source).any(|x| x.len() != dim) {
        bail!(Structural, "target and source vectors differ in dimension");
    }
    let ft: Vec<Vec<f64>> = shifted_targets.iter().map(|x| feature_map(x)).collect();
    let fs: Vec<Vec<f64>> = source.iter().map(|x| feature_map(x)).collect();
    Ok(sqrt(squared_distance(&mean_vector(&ft), &mean_vector(&fs))))
}
