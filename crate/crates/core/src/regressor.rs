//! Latent-only gaze head: per-chunk sigmoid attention gates followed by two
//! fully-connected layers that predict yaw and pitch in radians.
//!
//! The network sees only the chunks in a [`SelectionMask`]. Masked chunks are
//! gathered in ascending chunk order, each chunk scaled by its gate
//! `sigmoid(attention_logits[c])`, then passed through
//! `relu(W1 x + b1)` and `W2 h + b2`.

use alloc::vec::Vec;

use libm::exp;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{bail, Error, Result};
use crate::gaze::{angles_to_vector, angular_error, gaze_to_vector};
use crate::layout::{LatentCode, LatentDataset, LatentLayout, Sample};
use crate::mask::SelectionMask;
use crate::numeric::CompensatedSum;

/// Half-width of the uniform initialisation interval.
pub const INIT_SCALE: f64 = 0.05;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

/// Weights of the gaze head. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorParams {
    /// One logit per chunk of the layout, masked or not.
    pub attention_logits: Vec<f64>,
    /// `hidden × input_dim`
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `2 × hidden`
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    input_dim: usize,
    hidden: usize,
}

impl RegressorParams {
    pub fn zeros(n_chunks: usize, input_dim: usize, hidden: usize) -> Self {
        Self {
            attention_logits: alloc::vec![0.0; n_chunks],
            w1: alloc::vec![0.0; hidden * input_dim],
            b1: alloc::vec![0.0; hidden],
            w2: alloc::vec![0.0; 2 * hidden],
            b2: alloc::vec![0.0; 2],
            input_dim,
            hidden,
        }
    }

    /// Parameters sized for `mask`, every entry uniform in
    /// `[-INIT_SCALE, INIT_SCALE]`.
    pub fn init(mask: &SelectionMask, hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(mask.layout().n_chunks(), mask.n_elements(), hidden);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in p.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.random_range(-INIT_SCALE..=INIT_SCALE));
        }
        p
    }

    /// Reassembles parameters from raw tensors, checking every shape.
    pub fn from_parts(
        attention_logits: Vec<f64>,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self> {
        let hidden = b1.len();
        if hidden == 0 || !w1.len().is_multiple_of(hidden) || w2.len() != 2 * hidden || b2.len() != 2 {
            bail!(Structural, "inconsistent regressor tensor shapes");
        }
        let input_dim = w1.len() / hidden;
        let p = Self { attention_logits, w1, b1, w2, b2, input_dim, hidden };
        if p.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            bail!(Domain, "regressor parameters must be finite");
        }
        Ok(p)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn n_chunks(&self) -> usize {
        self.attention_logits.len()
    }

    /// `[attention_logits, w1, b1, w2, b2]`
    pub fn tensors(&self) -> [&Vec<f64>; 5] {
        [&self.attention_logits, &self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.attention_logits, &mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_params());
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }

    fn check(&self, layout: &LatentLayout, mask: &SelectionMask) -> Result<()> {
        if mask.layout() != layout {
            bail!(Structural, "mask layout differs from the data layout");
        }
        if self.attention_logits.len() != layout.n_chunks() {
            bail!(Structural, "{} attention logits for {} chunks", self.attention_logits.len(), layout.n_chunks());
        }
        if self.input_dim != mask.n_elements() {
            bail!(Structural, "network expects {} inputs but the mask keeps {}", self.input_dim, mask.n_elements());
        }
        Ok(())
    }
}

/// Per-sample activations kept for the backward pass.
struct Activations {
    gated: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    out: [f64; 2],
}

struct Head<'a> {
    params: &'a RegressorParams,
    chunk_size: usize,
    /// Gate of each masked chunk, in mask order.
    gates: Vec<f64>,
}

impl<'a> Head<'a> {
    fn new(params: &'a RegressorParams, mask: &SelectionMask) -> Self {
        let gates = mask.chunks().iter().map(|&c| sigmoid(params.attention_logits[c])).collect();
        Self { params, chunk_size: mask.layout().chunk_size(), gates }
    }

    fn run(&self, inputs: &[f64]) -> Activations {
        let p = self.params;
        let gated: Vec<f64> = inputs
            .chunks_exact(self.chunk_size)
            .zip(&self.gates)
            .flat_map(|(c, &g)| c.iter().map(move |x| g * x))
            .collect();
        let mut pre = p.b1.clone();
        for (k, z) in pre.iter_mut().enumerate() {
            let row = &p.w1[k * p.input_dim..(k + 1) * p.input_dim];
            *z += row.iter().zip(&gated).map(|(w, x)| w * x).sum::<f64>();
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
        let mut out = [p.b2[0], p.b2[1]];
        for (o, row) in out.iter_mut().zip(p.w2.chunks_exact(p.hidden)) {
            *o += row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
        }
        Activations { gated, pre, hidden, out }
    }

    /// Accumulates `d loss / d params` given `d loss / d out` for one sample.
    fn backward(&self, mask: &SelectionMask, inputs: &[f64], act: &Activations, d_out: [f64; 2], grad: &mut RegressorParams) {
        let p = self.params;
        let (h, d) = (p.hidden, p.input_dim);
        for (o, &g) in d_out.iter().enumerate() {
            grad.b2[o] += g;
            for k in 0..h {
                grad.w2[o * h + k] += g * act.hidden[k];
            }
        }
        let mut d_gated = alloc::vec![0.0; d];
        for k in 0..h {
            if act.pre[k] <= 0.0 {
                continue;
            }
            let dz = d_out[0] * p.w2[k] + d_out[1] * p.w2[h + k];
            if dz == 0.0 {
                continue;
            }
            grad.b1[k] += dz;
            let row = &p.w1[k * d..(k + 1) * d];
            let grow = &mut grad.w1[k * d..(k + 1) * d];
            for e in 0..d {
                grow[e] += dz * act.gated[e];
                d_gated[e] += dz * row[e];
            }
        }
        for (m, (&c, &g)) in mask.chunks().iter().zip(&self.gates).enumerate() {
            let r = m * self.chunk_size..(m + 1) * self.chunk_size;
            let d_gate: f64 = d_gated[r.clone()].iter().zip(&inputs[r]).map(|(a, x)| a * x).sum();
            grad.attention_logits[c] += d_gate * g * (1.0 - g);
        }
    }
}

/// Masked inputs and radian targets of a batch, gathered once.
struct Prepared {
    inputs: Vec<Vec<f64>>,
    targets: Vec<[f64; 2]>,
}

impl Prepared {
    fn new<'s>(samples: impl IntoIterator<Item = &'s Sample>, mask: &SelectionMask) -> Self {
        let (inputs, targets) =
            samples.into_iter().map(|s| (mask.gather(s.code.values()), s.label.to_radians())).unzip();
        Self { inputs, targets }
    }
}

/// Predicted `(yaw, pitch)` in radians for `code`.
pub fn forward(params: &RegressorParams, code: &LatentCode, mask: &SelectionMask) -> Result<[f64; 2]> {
    params.check(code.layout(), mask)?;
    Ok(Head::new(params, mask).run(&mask.gather(code.values())).out)
}

fn batch_loss_grad(params: &RegressorParams, mask: &SelectionMask, data: &Prepared, idx: &[usize]) -> (f64, RegressorParams) {
    let head = Head::new(params, mask);
    let mut grad = RegressorParams::zeros(params.n_chunks(), params.input_dim, params.hidden);
    let scale = 1.0 / idx.len() as f64;
    let mut loss = 0.0;
    for &i in idx {
        let act = head.run(&data.inputs[i]);
        let t = data.targets[i];
        let r = [act.out[0] - t[0], act.out[1] - t[1]];
        loss += r[0] * r[0] + r[1] * r[1];
        head.backward(mask, &data.inputs[i], &act, [2.0 * scale * r[0], 2.0 * scale * r[1]], &mut grad);
    }
    (loss * scale, grad)
}

/// Mean squared radian error over `batch` and its exact gradient.
pub fn loss_and_gradients(params: &RegressorParams, batch: &[&Sample], mask: &SelectionMask) -> Result<(f64, RegressorParams)> {
    if batch.is_empty() {
        bail!(InsufficientData, "empty batch");
    }
    for s in batch {
        params.check(s.code.layout(), mask)?;
    }
    let data = Prepared::new(batch.iter().copied(), mask);
    let idx: Vec<usize> = (0..batch.len()).collect();
    Ok(batch_loss_grad(params, mask, &data, &idx))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, momentum: 0.9, epochs: 50, batch_size: 32, hidden: 128, seed: 0 }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            bail!(Config, "learning rate must be finite and nonnegative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bail!(Config, "momentum must lie in [0, 1)");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.hidden == 0 {
            bail!(Config, "epochs, batch size and hidden width must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRegressor {
    pub params: RegressorParams,
    /// Mean batch loss of every epoch.
    pub loss_curve: Vec<f64>,
}

/// Minibatch gradient descent with heavy-ball momentum. Batches are drawn
/// from a per-epoch shuffle seeded by `config.seed`.
pub fn train(dataset: &LatentDataset, mask: &SelectionMask, config: &TrainConfig) -> Result<TrainedRegressor> {
    config.validate()?;
    if dataset.is_empty() {
        bail!(InsufficientData, "cannot train on an empty dataset");
    }
    let mut params = RegressorParams::init(mask, config.hidden, config.seed);
    params.check(dataset.layout(), mask)?;
    let data = Prepared::new(dataset.samples(), mask);
    let mut velocity = RegressorParams::zeros(params.n_chunks(), params.input_dim, params.hidden);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x005e_ed0f_5eed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut last_finite = f64::NAN;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = CompensatedSum::default();
        for batch in order.chunks(config.batch_size) {
            let (loss, grad) = batch_loss_grad(&params, mask, &data, batch);
            epoch_loss.add(loss * batch.len() as f64);
            for ((p, v), g) in params.tensors_mut().into_iter().zip(velocity.tensors_mut()).zip(grad.tensors()) {
                for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g.iter()) {
                    *v = config.momentum * *v + g;
                    *p -= config.learning_rate * *v;
                }
            }
        }
        let mean = epoch_loss.value() / dataset.len() as f64;
        if !mean.is_finite() || params.tensors().iter().any(|t| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Diverged { epoch, last_finite_loss: last_finite });
        }
        last_finite = mean;
        loss_curve.push(mean);
    }
    Ok(TrainedRegressor { params, loss_curve })
}

/// Mean squared radian error of `params` over `dataset`.
pub fn mean_squared_error(params: &RegressorParams, dataset: &LatentDataset, mask: &SelectionMask) -> Result<f64> {
    if dataset.is_empty() {
        bail!(InsufficientData, "empty dataset");
    }
    params.check(dataset.layout(), mask)?;
    let head = Head::new(params, mask);
    let sum: CompensatedSum = dataset
        .samples()
        .iter()
        .map(|s| {
            let y = head.run(&mask.gather(s.code.values())).out;
            let t = s.label.to_radians();
            let r = [y[0] - t[0], y[1] - t[1]];
            r[0] * r[0] + r[1] * r[1]
        })
        .collect();
    Ok(sum.value() / dataset.len() as f64)
}

/// Predictions for every sample of `dataset`, in order.
pub fn predict(params: &RegressorParams, dataset: &LatentDataset, mask: &SelectionMask) -> Result<Vec<[f64; 2]>> {
    params.check(dataset.layout(), mask)?;
    let head = Head::new(params, mask);
    Ok(dataset.samples().iter().map(|s| head.run(&mask.gather(s.code.values())).out).collect())
}

/// Mean angular error in degrees between predicted and labelled gaze.
pub fn evaluate(params: &RegressorParams, dataset: &LatentDataset, mask: &SelectionMask) -> Result<f64> {
    if dataset.is_empty() {
        bail!(InsufficientData, "cannot evaluate on an empty dataset");
    }
    let preds = predict(params, dataset, mask)?;
    let mut sum = CompensatedSum::default();
    for (p, s) in preds.iter().zip(dataset.samples()) {
        sum.add(angular_error(&angles_to_vector(p[0], p[1]), &gaze_to_vector(&s.label))?);
    }
    Ok(sum.value() / dataset.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// Mean `|∂yaw/∂x_e| + |∂pitch/∂x_e|` per latent element; zero outside the mask.
    pub element: Vec<f64>,
    /// `element` averaged within each chunk.
    pub chunk: Vec<f64>,
    /// Chunk indices sorted by descending score, ties by index.
    pub ranking: Vec<usize>,
}

impl SensitivityReport {
    pub fn top(&self, n: usize) -> &[usize] {
        &self.ranking[..n.min(self.ranking.len())]
    }
}

/// Input-gradient magnitude of the trained head, averaged over `dataset`.
pub fn gradient_sensitivity(params: &RegressorParams, dataset: &LatentDataset, mask: &SelectionMask) -> Result<SensitivityReport> {
    if dataset.is_empty() {
        bail!(InsufficientData, "empty dataset");
    }
    params.check(dataset.layout(), mask)?;
    let layout = *dataset.layout();
    let head = Head::new(params, mask);
    let (h, d, cs) = (params.hidden, params.input_dim, layout.chunk_size());
    let mut acc = alloc::vec![CompensatedSum::default(); d];
    for s in dataset.samples() {
        let act = head.run(&mask.gather(s.code.values()));
        let mut dyaw = alloc::vec![0.0; d];
        let mut dpitch = alloc::vec![0.0; d];
        for k in 0..h {
            if act.pre[k] <= 0.0 {
                continue;
            }
            let row = &params.w1[k * d..(k + 1) * d];
            let (a, b) = (params.w2[k], params.w2[h + k]);
            for e in 0..d {
                dyaw[e] += a * row[e];
                dpitch[e] += b * row[e];
            }
        }
        for e in 0..d {
            let g = head.gates[e / cs];
            acc[e].add((g * dyaw[e]).abs() + (g * dpitch[e]).abs());
        }
    }
    let n = dataset.len() as f64;
    let mut element = alloc::vec![0.0; layout.total_dims()];
    for (m, &c) in mask.chunks().iter().enumerate() {
        for j in 0..cs {
            element[c * cs + j] = acc[m * cs + j].value() / n;
        }
    }
    let chunk: Vec<f64> = element.chunks_exact(cs).map(|c| c.iter().sum::<f64>() / cs as f64).collect();
    let mut ranking: Vec<usize> = (0..chunk.len()).collect();
    ranking.sort_by(|&a, &b| chunk[b].total_cmp(&chunk[a]));
    Ok(SensitivityReport { element, chunk, ranking })
}
