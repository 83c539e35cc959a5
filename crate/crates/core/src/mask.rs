use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::layout::LatentLayout;

/// A set of chunk indices under a layout, kept sorted and unique.
///
/// This is the concrete form of the gaze-relevance operator: every consumer
/// that restricts a latent code to gaze-relevant content takes a mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawMask"))]
pub struct SelectionMask {
    layout: LatentLayout,
    chunks: Vec<usize>,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawMask {
    layout: LatentLayout,
    chunks: Vec<usize>,
}

#[cfg(feature = "serde")]
impl TryFrom<RawMask> for SelectionMask {
    type Error = crate::Error;

    fn try_from(r: RawMask) -> Result<Self> {
        Self::new(r.layout, r.chunks)
    }
}

impl SelectionMask {
    /// Sorts `chunks`; rejects duplicates and out-of-range indices.
    pub fn new(layout: LatentLayout, mut chunks: Vec<usize>) -> Result<Self> {
        chunks.sort_unstable();
        if let Some(w) = chunks.windows(2).find(|w| w[0] == w[1]) {
            bail!(Structural, "duplicate chunk index {}", w[0]);
        }
        if let Some(&last) = chunks.last() {
            if last >= layout.n_chunks() {
                bail!(Structural, "chunk index {last} out of range for {} chunks", layout.n_chunks());
            }
        }
        Ok(Self { layout, chunks })
    }

    pub(crate) fn from_sorted_unchecked(layout: LatentLayout, chunks: Vec<usize>) -> Self {
        debug_assert!(chunks.windows(2).all(|w| w[0] < w[1]));
        Self { layout, chunks }
    }

    pub fn all(layout: LatentLayout) -> Self {
        Self { layout, chunks: (0..layout.n_chunks()).collect() }
    }

    pub fn empty(layout: LatentLayout) -> Self {
        Self { layout, chunks: Vec::new() }
    }

    pub fn layout(&self) -> &LatentLayout {
        &self.layout
    }

    pub fn chunks(&self) -> &[usize] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn contains(&self, chunk: usize) -> bool {
        self.chunks.binary_search(&chunk).is_ok()
    }

    pub fn complement(&self) -> Self {
        let chunks = (0..self.layout.n_chunks()).filter(|c| !self.contains(*c)).collect();
        Self { layout: self.layout, chunks }
    }

    /// Number of latent elements the mask keeps.
    pub fn n_elements(&self) -> usize {
        self.chunks.len() * self.layout.chunk_size()
    }

    /// Per-chunk membership flags, indexed by chunk.
    pub fn membership(&self) -> Vec<bool> {
        let mut m = alloc::vec![false; self.layout.n_chunks()];
        for &c in &self.chunks {
            m[c] = true;
        }
        m
    }

    /// Copies the masked elements of `values` into one contiguous vector,
    /// chunk by chunk in ascending chunk order.
    pub fn gather(&self, values: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_elements());
        for &c in &self.chunks {
            out.extend_from_slice(&values[self.layout.chunk_range(c)]);
        }
        out
    }
}
