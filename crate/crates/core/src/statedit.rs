//! Discovery of gaze-relevant chunks by contrasting left- and right-looking
//! samples.
//!
//! The pipeline is: split samples by yaw into a left group and a right group,
//! compute per-group mean and unbiased variance of every chunk mean, form
//! Welch's statistic per chunk, convert it to a two-sided normal p-value,
//! rank chunks by `|t|`, and select either the best `n` or every chunk whose
//! p-value clears a level.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use libm::{erfc, sqrt};

use crate::error::{bail, Result};
use crate::layout::{LatentDataset, LatentLayout};
use crate::mask::SelectionMask;

/// Added under the square root of the Welch denominator so that two
/// zero-variance groups still give a finite statistic.
pub const T_EPSILON: f64 = 1e-12;

/// Group sizes below this trigger a warning: the normal reference
/// distribution is only justified for reasonably large groups.
pub const CLT_MIN_GROUP: usize = 30;

/// Closed yaw interval in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "RawRange"))]
pub struct YawRange {
    pub lo: f64,
    pub hi: f64,
}

#[cfg(feature = "serde")]
#[derive(serde::Deserialize)]
struct RawRange {
    lo: f64,
    hi: f64,
}

#[cfg(feature = "serde")]
impl TryFrom<RawRange> for YawRange {
    type Error = crate::Error;

    fn try_from(r: RawRange) -> Result<Self> {
        Self::new(r.lo, r.hi)
    }
}

impl YawRange {
    pub const LEFT: YawRange = YawRange { lo: 30.0, hi: 90.0 };
    pub const RIGHT: YawRange = YawRange { lo: -90.0, hi: -30.0 };

    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !Self::ordered(lo, hi) {
            bail!(Config, "yaw range [{lo}, {hi}] is empty");
        }
        Ok(Self { lo, hi })
    }

    fn ordered(lo: f64, hi: f64) -> bool {
        matches!(lo.partial_cmp(&hi), Some(core::cmp::Ordering::Less | core::cmp::Ordering::Equal))
    }

    pub fn contains(&self, yaw: f64) -> bool {
        self.lo <= yaw && yaw <= self.hi
    }

    pub fn overlaps(&self, other: &YawRange) -> bool {
        self.lo.max(other.lo) <= self.hi.min(other.hi)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroupSplit {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub excluded: Vec<usize>,
}

impl GroupSplit {
    /// The same split with the two groups exchanged.
    pub fn swapped(&self) -> Self {
        Self { left: self.right.clone(), right: self.left.clone(), excluded: self.excluded.clone() }
    }
}

/// Assigns every sample to the left group, the right group, or neither, by
/// yaw. Endpoints are inclusive and pitch is ignored.
pub fn split_groups(dataset: &LatentDataset, left: YawRange, right: YawRange) -> Result<GroupSplit> {
    if !YawRange::ordered(left.lo, left.hi) || !YawRange::ordered(right.lo, right.hi) {
        bail!(Config, "yaw ranges must satisfy lo <= hi");
    }
    if left.overlaps(&right) {
        bail!(Config, "left range [{}, {}] overlaps right range [{}, {}]", left.lo, left.hi, right.lo, right.hi);
    }
    let mut split = GroupSplit::default();
    for (i, s) in dataset.samples().iter().enumerate() {
        let yaw = s.label.yaw_deg();
        if left.contains(yaw) {
            split.left.push(i);
        } else if right.contains(yaw) {
            split.right.push(i);
        } else {
            split.excluded.push(i);
        }
    }
    Ok(split)
}

/// Per-chunk moments of the chunk-mean values within each group.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStats {
    pub mean_l: Vec<f64>,
    pub mean_r: Vec<f64>,
    pub var_l: Vec<f64>,
    pub var_r: Vec<f64>,
    pub n_l: usize,
    pub n_r: usize,
}

impl ChunkStats {
    pub fn n_chunks(&self) -> usize {
        self.mean_l.len()
    }

    /// Difference of group means, left minus right.
    pub fn mean_difference(&self) -> Vec<f64> {
        self.mean_l.iter().zip(&self.mean_r).map(|(l, r)| l - r).collect()
    }
}

/// Mean and unbiased variance of each column of `rows`, two passes.
fn column_moments(rows: &[Vec<f64>], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = alloc::vec![0.0; width];
    for r in rows {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = alloc::vec![0.0; width];
    for r in rows {
        for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
            let d = v - m;
            *acc += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n - 1.0);
    (mean, var)
}

pub fn group_chunk_stats(dataset: &LatentDataset, split: &GroupSplit) -> Result<ChunkStats> {
    for (name, g) in [("left", &split.left), ("right", &split.right)] {
        if g.len() < 2 {
            bail!(InsufficientData, "{name} group has {} samples, need at least 2", g.len());
        }
    }
    let n_chunks = dataset.layout().n_chunks();
    let means_of = |group: &[usize]| -> Vec<Vec<f64>> {
        group.iter().map(|&i| dataset.samples()[i].code.chunk_means()).collect()
    };
    let (mean_l, var_l) = column_moments(&means_of(&split.left), n_chunks);
    let (mean_r, var_r) = column_moments(&means_of(&split.right), n_chunks);
    Ok(ChunkStats { mean_l, mean_r, var_l, var_r, n_l: split.left.len(), n_r: split.right.len() })
}

/// Welch's statistic per chunk.
pub fn t_statistic(stats: &ChunkStats) -> Vec<f64> {
    let (nl, nr) = (stats.n_l as f64, stats.n_r as f64);
    (0..stats.n_chunks())
        .map(|i| {
            let se2 = stats.var_l[i] / nl + stats.var_r[i] / nr + T_EPSILON;
            (stats.mean_l[i] - stats.mean_r[i]) / sqrt(se2)
        })
        .collect()
}

/// Two-sided tail probability of `t` under the standard normal,
/// `2 (1 - Φ(|t|)) = erfc(|t| / √2)`.
pub fn p_value(t: f64) -> f64 {
    erfc(t.abs() / core::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// 1-based ranks by descending `|t|`; ties keep chunk-index order.
pub fn rank_chunks(t_stats: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t_stats.len()).collect();
    order.sort_by(|&a, &b| t_stats[b].abs().total_cmp(&t_stats[a].abs()));
    let mut ranks = alloc::vec![0; t_stats.len()];
    for (pos, &chunk) in order.iter().enumerate() {
        ranks[chunk] = pos + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SelectionMode {
    /// The `n` best-ranked chunks.
    TopN(usize),
    /// Every chunk with p-value strictly below the level.
    Alpha(f64),
}

impl SelectionMode {
    fn validate(&self, n_chunks: usize) -> Result<()> {
        match *self {
            SelectionMode::TopN(n) if n > n_chunks => {
                bail!(Config, "top-n {n} exceeds the {n_chunks} available chunks")
            }
            SelectionMode::Alpha(a) if !(a > 0.0 && a < 1.0) => bail!(Config, "alpha {a} outside (0, 1)"),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AnalysisConfig {
    pub left_range: YawRange,
    pub right_range: YawRange,
    pub selection: SelectionMode,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { left_range: YawRange::LEFT, right_range: YawRange::RIGHT, selection: SelectionMode::TopN(64) }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChunkRecord {
    pub index: usize,
    pub layer: usize,
    #[cfg_attr(feature = "serde", serde(rename = "mean_L"))]
    pub mean_l: f64,
    #[cfg_attr(feature = "serde", serde(rename = "mean_R"))]
    pub mean_r: f64,
    #[cfg_attr(feature = "serde", serde(rename = "var_L"))]
    pub var_l: f64,
    #[cfg_attr(feature = "serde", serde(rename = "var_R"))]
    pub var_r: f64,
    pub t: f64,
    pub p: f64,
    pub rank: usize,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub layout: LatentLayout,
    pub config: AnalysisConfig,
    pub n_left: usize,
    pub n_right: usize,
    pub n_excluded: usize,
    /// One record per chunk, ordered by chunk index.
    pub chunks: Vec<ChunkRecord>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    /// Builds a report from raw statistics; nothing is selected yet.
    pub fn from_stats(layout: LatentLayout, config: AnalysisConfig, stats: &ChunkStats, n_excluded: usize) -> Self {
        let t = t_statistic(stats);
        let ranks = rank_chunks(&t);
        let chunks = (0..stats.n_chunks())
            .map(|i| ChunkRecord {
                index: i,
                layer: layout.layer_of_chunk(i),
                mean_l: stats.mean_l[i],
                mean_r: stats.mean_r[i],
                var_l: stats.var_l[i],
                var_r: stats.var_r[i],
                t: t[i],
                p: p_value(t[i]),
                rank: ranks[i],
                selected: false,
            })
            .collect();
        let mut warnings = Vec::new();
        for (name, n) in [("left", stats.n_l), ("right", stats.n_r)] {
            if n < CLT_MIN_GROUP {
                warnings.push(format!(
                    "{name} group has {n} samples (< {CLT_MIN_GROUP}); normal critical values may be inaccurate"
                ));
            }
        }
        Self { layout, config, n_left: stats.n_l, n_right: stats.n_r, n_excluded, chunks, warnings }
    }

    pub fn t_stats(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.t).collect()
    }

    pub fn mean_difference(&self) -> Vec<f64> {
        self.chunks.iter().map(|c| c.mean_l - c.mean_r).collect()
    }

    /// Chunk indices in rank order.
    pub fn ranked_chunks(&self) -> Vec<usize> {
        let mut order = alloc::vec![0; self.chunks.len()];
        for c in &self.chunks {
            order[c.rank - 1] = c.index;
        }
        order
    }

    pub fn selected_mask(&self) -> SelectionMask {
        SelectionMask::from_sorted_unchecked(
            self.layout,
            self.chunks.iter().filter(|c| c.selected).map(|c| c.index).collect(),
        )
    }
}

/// Chunks chosen from `report` under `mode`.
pub fn select_chunks(report: &AnalysisReport, mode: SelectionMode) -> Result<SelectionMask> {
    mode.validate(report.chunks.len())?;
    let chunks = match mode {
        SelectionMode::TopN(n) => report.chunks.iter().filter(|c| c.rank <= n).map(|c| c.index).collect(),
        SelectionMode::Alpha(a) => report.chunks.iter().filter(|c| c.p < a).map(|c| c.index).collect(),
    };
    SelectionMask::new(report.layout, chunks)
}

/// Runs split, statistics, ranking and selection over `dataset`.
pub fn analyze(dataset: &LatentDataset, config: &AnalysisConfig) -> Result<AnalysisReport> {
    if dataset.is_empty() {
        bail!(InsufficientData, "dataset is empty");
    }
    config.selection.validate(dataset.layout().n_chunks())?;
    let split = split_groups(dataset, config.left_range, config.right_range)?;
    let stats = group_chunk_stats(dataset, &split)?;
    let mut report = AnalysisReport::from_stats(*dataset.layout(), *config, &stats, split.excluded.len());
    let mask = select_chunks(&report, config.selection)?;
    for &i in mask.chunks() {
        report.chunks[i].selected = true;
    }
    Ok(report)
}
