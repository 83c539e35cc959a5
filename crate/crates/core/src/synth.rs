//! Synthetic latent datasets with a planted, known set of gaze-relevant
//! chunks.
//!
//! Every element is `N(0, noise_std²)`. Elements of planted chunks get an
//! extra `effect_size · (yaw / 90°) · noise_std`, elements of nuisance chunks
//! an extra `corr · (yaw / 90°) · noise_std`, where `corr` is the nuisance
//! descriptor's train-domain or test-domain coefficient. Target domains may
//! also carry a fixed per-element offset. Sample `i` draws from its own
//! ChaCha stream, so the seed-to-sample mapping does not depend on
//! generation order.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{bail, Result};
use crate::gaze::GazeLabel;
use crate::layout::{LatentCode, LatentDataset, LatentLayout, Sample};
use crate::mask::SelectionMask;

/// Stream reserved for the per-element domain offset.
const OFFSET_STREAM: u64 = u64::MAX;

/// Chunks whose content tracks yaw with a domain-dependent strength.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Nuisance {
    pub chunks: Vec<usize>,
    pub train_corr: f64,
    pub test_corr: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SynthSpec {
    pub layout: LatentLayout,
    pub n_samples: usize,
    pub planted_chunks: Vec<usize>,
    pub effect_size: f64,
    pub nuisance: Vec<Nuisance>,
    pub noise_std: f64,
    pub yaw_range: [f64; 2],
    pub pitch_range: [f64; 2],
    /// Standard deviation, in units of `noise_std`, of a fixed additive
    /// per-element offset. Zero means no offset.
    pub offset_std: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    /// 448-chunk layout with the 64 chunks of layers 4 and 5 planted.
    fn default() -> Self {
        let layout = LatentLayout::default();
        Self {
            layout,
            n_samples: 4000,
            planted_chunks: layout.layer_chunks(4).chain(layout.layer_chunks(5)).collect(),
            effect_size: 1.0,
            nuisance: Vec::new(),
            noise_std: 1.0,
            yaw_range: [-90.0, 90.0],
            pitch_range: [-10.0, 10.0],
            offset_std: 0.0,
            seed: 0,
        }
    }
}

/// Which nuisance coefficient applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Train,
    Test,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let n_chunks = self.layout.n_chunks();
        if self.n_samples < 4 {
            bail!(Config, "n_samples must be at least 4, got {}", self.n_samples);
        }
        if !(self.noise_std > 0.0 && self.noise_std.is_finite()) {
            bail!(Config, "noise_std must be positive and finite");
        }
        if !self.effect_size.is_finite() || !(self.offset_std >= 0.0 && self.offset_std.is_finite()) {
            bail!(Config, "effect_size and offset_std must be finite, offset_std nonnegative");
        }
        let [ylo, yhi] = self.yaw_range;
        let [plo, phi] = self.pitch_range;
        if !(-90.0 <= ylo && ylo <= yhi && yhi <= 90.0) {
            bail!(Config, "yaw_range must be an interval inside [-90, 90]");
        }
        if !(-90.0 <= plo && plo <= phi && phi <= 90.0) {
            bail!(Config, "pitch_range must be an interval inside [-90, 90]");
        }
        let planted: BTreeSet<usize> = self.planted_chunks.iter().copied().collect();
        if planted.len() != self.planted_chunks.len() {
            bail!(Config, "planted chunks contain duplicates");
        }
        for n in &self.nuisance {
            if !n.train_corr.is_finite() || !n.test_corr.is_finite() {
                bail!(Config, "nuisance correlations must be finite");
            }
            for &c in &n.chunks {
                if planted.contains(&c) {
                    bail!(Config, "chunk {c} is both planted and nuisance");
                }
            }
        }
        let all = self.planted_chunks.iter().chain(self.nuisance.iter().flat_map(|n| &n.chunks));
        if let Some(c) = all.copied().find(|&c| c >= n_chunks) {
            bail!(Config, "chunk {c} out of range for {n_chunks} chunks");
        }
        Ok(())
    }

    pub fn planted_mask(&self) -> Result<SelectionMask> {
        SelectionMask::new(self.layout, self.planted_chunks.clone())
    }

    /// Per-element yaw loading for `domain`: the coefficient multiplying
    /// `(yaw / 90°) · noise_std`.
    fn loadings(&self, domain: Domain) -> Vec<f64> {
        let mut chunk_load = alloc::vec![0.0; self.layout.n_chunks()];
        for &c in &self.planted_chunks {
            chunk_load[c] += self.effect_size;
        }
        for n in &self.nuisance {
            let corr = match domain {
                Domain::Train => n.train_corr,
                Domain::Test => n.test_corr,
            };
            for &c in &n.chunks {
                chunk_load[c] += corr;
            }
        }
        let cs = self.layout.chunk_size();
        chunk_load.iter().flat_map(|&l| core::iter::repeat_n(l, cs)).collect()
    }

    fn offsets(&self) -> Vec<f64> {
        let d = self.layout.total_dims();
        if self.offset_std == 0.0 {
            return alloc::vec![0.0; d];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(OFFSET_STREAM);
        let scale = self.offset_std * self.noise_std;
        (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    }
}

/// Draws a dataset using the nuisance coefficients of `domain`.
pub fn generate_for(spec: &SynthSpec, domain: Domain) -> Result<LatentDataset> {
    spec.validate()?;
    let loadings = spec.loadings(domain);
    let offsets = spec.offsets();
    let sigma = spec.noise_std;
    let mut ds = LatentDataset::new(spec.layout);
    for i in 0..spec.n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64);
        let yaw = rng.random_range(spec.yaw_range[0]..=spec.yaw_range[1]);
        let pitch = rng.random_range(spec.pitch_range[0]..=spec.pitch_range[1]);
        let signal = yaw / 90.0 * sigma;
        let values = loadings
            .iter()
            .zip(&offsets)
            .map(|(&load, &off)| sigma * rng.sample::<f64, _>(StandardNormal) + load * signal + off)
            .collect();
        ds.push(Sample {
            id: format!("{i:06}"),
            code: LatentCode::new(spec.layout, values)?,
            label: GazeLabel::new(yaw, pitch)?,
        })?;
    }
    Ok(ds)
}

/// Draws a training-domain dataset.
pub fn generate(spec: &SynthSpec) -> Result<LatentDataset> {
    generate_for(spec, Domain::Train)
}

/// Source and target specs sharing the gaze signal.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DomainPairSpec {
    pub source: SynthSpec,
    pub target: SynthSpec,
}

impl DomainPairSpec {
    /// Target = `source` re-seeded with `target_seed` and shifted by an
    /// offset of standard deviation `offset_std`.
    pub fn from_source(source: SynthSpec, target_seed: u64, offset_std: f64) -> Self {
        let target = SynthSpec { seed: target_seed, offset_std, ..source.clone() };
        Self { source, target }
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.target.validate()?;
        if self.source.layout != self.target.layout {
            bail!(Config, "source and target layouts differ");
        }
        if self.source.planted_chunks != self.target.planted_chunks || self.source.effect_size != self.target.effect_size {
            bail!(Config, "source and target must share planted chunks and effect size");
        }
        Ok(())
    }
}

/// Source drawn with train-domain nuisance coefficients, target with
/// test-domain ones.
pub fn generate_domain_pair(spec: &DomainPairSpec) -> Result<(LatentDataset, LatentDataset)> {
    spec.validate()?;
    Ok((generate_for(&spec.source, Domain::Train)?, generate_for(&spec.target, Domain::Test)?))
}

/// Randomly permutes labels across samples, breaking any code/label link.
pub fn shuffle_labels(dataset: &mut LatentDataset, seed: u64) -> Result<()> {
    let mut perm: Vec<usize> = (0..dataset.len()).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    dataset.permute_labels(&perm)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OracleReport {
    pub precision: f64,
    pub recall: f64,
    pub true_positives: usize,
    pub selected: usize,
    pub planted: usize,
}

/// Precision and recall of `mask` against the planted chunks. An empty mask
/// has precision 1 by convention; an empty planted set has recall 1.
pub fn oracle_report(spec: &SynthSpec, mask: &SelectionMask) -> Result<OracleReport> {
    if mask.layout() != &spec.layout {
        bail!(Structural, "mask and spec layouts differ");
    }
    let tp = spec.planted_chunks.iter().filter(|&&c| mask.contains(c)).count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    Ok(OracleReport {
        precision: ratio(tp, mask.len()),
        recall: ratio(tp, spec.planted_chunks.len()),
        true_positives: tp,
        selected: mask.len(),
        planted: spec.planted_chunks.len(),
    })
}
