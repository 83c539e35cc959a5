//! Latent layouts, latent codes and chunk arithmetic.
//!
//! A latent code is a flat vector organised as `n_layers` style layers of
//! `layer_dim` elements each. Consecutive runs of `chunk_size` elements form
//! chunks, the unit every statistic in this crate operates on. Chunks never
//! straddle a layer boundary because `chunk_size` must divide `layer_dim`.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{bail, Result};
use crate::gaze::GazeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawLayout"))]
pub struct LatentLayout {
    n_layers: usize,
    layer_dim: usize,
    chunk_size: usize,
}

impl LatentLayout {
    pub const DEFAULT_CHUNK_SIZE: usize = 16;

    pub fn new(n_layers: usize, layer_dim: usize, chunk_size: usize) -> Result<Self> {
        if n_layers == 0 || layer_dim == 0 || chunk_size == 0 {
            bail!(Structural, "layout dimensions must be positive ({n_layers}, {layer_dim}, {chunk_size})");
        }
        if !layer_dim.is_multiple_of(chunk_size) {
            bail!(Structural, "chunk size {chunk_size} does not divide layer dimension {layer_dim}");
        }
        Ok(Self { n_layers, layer_dim, chunk_size })
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn layer_dim(&self) -> usize {
        self.layer_dim
    }

    pub fn chunk_size(&self) -> usize {
        self.chunk_size
    }

    pub fn total_dims(&self) -> usize {
        self.n_layers * self.layer_dim
    }

    pub fn n_chunks(&self) -> usize {
        self.total_dims() / self.chunk_size
    }

    pub fn chunks_per_layer(&self) -> usize {
        self.layer_dim / self.chunk_size
    }

    /// Layer (0-based) that holds chunk `chunk`.
    pub fn layer_of_chunk(&self, chunk: usize) -> usize {
        chunk / self.chunks_per_layer()
    }

    /// Element range covered by chunk `chunk`.
    pub fn chunk_range(&self, chunk: usize) -> Range<usize> {
        let start = chunk * self.chunk_size;
        start..start + self.chunk_size
    }

    /// All chunk indices belonging to `layer`.
    pub fn layer_chunks(&self, layer: usize) -> Range<usize> {
        let per = self.chunks_per_layer();
        layer * per..(layer + 1) * per
    }
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawLayout {
    n_layers: usize,
    layer_dim: usize,
    chunk_size: usize,
}

#[cfg(feature = "serde")]
impl TryFrom<RawLayout> for LatentLayout {
    type Error = crate::Error;

    fn try_from(r: RawLayout) -> Result<Self> {
        Self::new(r.n_layers, r.layer_dim, r.chunk_size)
    }
}

impl Default for LatentLayout {
    /// 14 layers × 512 dims in chunks of 16, i.e. 448 chunks.
    fn default() -> Self {
        Self { n_layers: 14, layer_dim: 512, chunk_size: Self::DEFAULT_CHUNK_SIZE }
    }
}

/// Mean of every chunk of `values` under `layout`.
pub fn chunk_means(layout: &LatentLayout, values: &[f64]) -> Result<Vec<f64>> {
    if values.len() != layout.total_dims() {
        bail!(
            Structural,
            "latent has {} elements but layout declares {}",
            values.len(),
            layout.total_dims()
        );
    }
    let inv = 1.0 / layout.chunk_size() as f64;
    Ok(values
        .chunks_exact(layout.chunk_size())
        .map(|c| c.iter().sum::<f64>() * inv)
        .collect())
}

/// One sample's latent vector together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    layout: LatentLayout,
    values: Vec<f64>,
}

impl LatentCode {
    pub fn new(layout: LatentLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.total_dims() {
            bail!(
                Structural,
                "latent has {} elements but layout declares {}",
                values.len(),
                layout.total_dims()
            );
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            bail!(Domain, "latent element {i} is not finite");
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: LatentLayout) -> Self {
        Self { layout, values: alloc::vec![0.0; layout.total_dims()] }
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn chunk(&self, chunk: usize) -> &[f64] {
        &self.values[self.layout.chunk_range(chunk)]
    }

    pub fn chunk_means(&self) -> Vec<f64> {
        // the constructor already checked the length
        chunk_means(&self.layout, &self.values).expect("validated layout")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub code: LatentCode,
    pub label: GazeLabel,
}

/// Labelled latent codes sharing one layout, with unique sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    layout: LatentLayout,
    samples: Vec<Sample>,
    ids: BTreeSet<String>,
}

impl LatentDataset {
    pub fn new(layout: LatentLayout) -> Self {
        Self { layout, samples: Vec::new(), ids: BTreeSet::new() }
    }

    pub fn from_samples(layout: LatentLayout, samples: impl IntoIterator<Item = Sample>) -> Result<Self> {
        let mut ds = Self::new(layout);
        for s in samples {
            ds.push(s)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.code.layout != self.layout {
            bail!(Structural, "sample {} has a layout different from the dataset", sample.id);
        }
        if !self.ids.insert(sample.id.clone()) {
            bail!(Structural, "duplicate sample id {}", sample.id);
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &GazeLabel> {
        self.samples.iter().map(|s| &s.label)
    }

    /// Subset of the dataset at `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::from_samples(self.layout, indices.iter().map(|&i| self.samples[i].clone()))
    }

    /// Replaces each sample's label by the label at `perm[i]`.
    pub fn permute_labels(&mut self, perm: &[usize]) -> Result<()> {
        if perm.len() != self.samples.len() {
            bail!(Structural, "permutation length {} != dataset size {}", perm.len(), self.samples.len());
        }
        let labels: Vec<GazeLabel> = perm.iter().map(|&p| self.samples[p].label).collect();
        for (s, l) in self.samples.iter_mut().zip(labels) {
            s.label = l;
        }
        Ok(())
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }
}
