//! The JSON analysis report.

use std::fs;
use std::path::Path;

use latentgaze::statedit::{AnalysisConfig, AnalysisReport, ChunkRecord, SelectionMode};
use latentgaze::LatentLayout;
use serde::{Deserialize, Serialize};

use crate::error::{input_err, CliError, Result};
use crate::format::write_atomic;

pub const TOOL_NAME: &str = "latentgaze";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The schema every report validates against.
pub const REPORT_SCHEMA: &str = include_str!("../schemas/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportInputs {
    pub latents: String,
    pub labels: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub n_left: usize,
    pub n_right: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub tool: String,
    pub tool_version: String,
    pub seed: u64,
    pub inputs: ReportInputs,
    pub config: AnalysisConfig,
    pub selection_mode: String,
    pub layout: LatentLayout,
    pub split: SplitSizes,
    pub selected: Vec<usize>,
    pub chunks: Vec<ChunkRecord>,
    pub warnings: Vec<String>,
}

pub fn mode_name(mode: &SelectionMode) -> &'static str {
    match mode {
        SelectionMode::TopN(_) => "top_n",
        SelectionMode::Alpha(_) => "alpha",
    }
}

impl ReportFile {
    pub fn from_report(report: &AnalysisReport, inputs: ReportInputs, seed: u64) -> Self {
        Self {
            tool: TOOL_NAME.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            inputs,
            config: report.config,
            selection_mode: mode_name(&report.config.selection).into(),
            layout: report.layout,
            split: SplitSizes { n_left: report.n_left, n_right: report.n_right, n_excluded: report.n_excluded },
            selected: report.selected_mask().chunks().to_vec(),
            chunks: report.chunks.clone(),
            warnings: report.warnings.clone(),
        }
    }

    /// Rebuilds the in-memory report, checking that chunk records are
    /// complete and ordered by index.
    pub fn to_report(&self) -> Result<AnalysisReport> {
        if self.chunks.len() != self.layout.n_chunks() {
            return Err(input_err!("report has {} chunk records, layout has {} chunks", self.chunks.len(), self.layout.n_chunks()));
        }
        if let Some(c) = self.chunks.iter().enumerate().find(|(i, c)| c.index != *i) {
            return Err(input_err!("chunk record {} is out of order", c.0));
        }
        let mut ranks: Vec<usize> = self.chunks.iter().map(|c| c.rank).collect();
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(i, &r)| r != i + 1) {
            return Err(input_err!("chunk ranks are not a permutation of 1..={}", self.chunks.len()));
        }
        Ok(AnalysisReport {
            layout: self.layout,
            config: self.config,
            n_left: self.split.n_left,
            n_right: self.split.n_right,
            n_excluded: self.split.n_excluded,
            chunks: self.chunks.clone(),
            warnings: self.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| input_err!("cannot encode report: {e}"))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| input_err!("{}: {e}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}
