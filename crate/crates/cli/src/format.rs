//! On-disk formats: the binary latent file, the label table and the paired
//! dataset loader.
//!
//! A latent file is a 24-byte header (`LGZ1`, then version, sample count,
//! layer count, layer width and chunk size as little-endian `u32`) followed
//! by every sample's values as little-endian `f32`, row-major by sample.

use std::fs;
use std::io::Write;
use std::path::Path;

use latentgaze::{GazeLabel, LatentCode, LatentDataset, LatentLayout, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{input_err, CliError, Result};

pub const LATENT_MAGIC: &[u8; 4] = b"LGZ1";
pub const LATENT_VERSION: u32 = 1;
const HEADER_LEN: usize = 24;

pub const LATENTS_FILE: &str = "latents.lgz";
pub const LABELS_FILE: &str = "labels.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct LatentFile {
    pub layout: LatentLayout,
    /// One row of `layout.total_dims()` values per sample.
    pub rows: Vec<Vec<f32>>,
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| input_err!("{what} {v} does not fit in a u32"))
}

impl LatentFile {
    pub fn new(layout: LatentLayout, rows: Vec<Vec<f32>>) -> Result<Self> {
        let d = layout.total_dims();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(input_err!("row {i} has {} values, layout declares {d}", rows[i].len()));
        }
        Ok(Self { layout, rows })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = self.layout.total_dims();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * d * self.rows.len());
        out.extend_from_slice(LATENT_MAGIC);
        for v in [
            LATENT_VERSION,
            to_u32(self.rows.len(), "sample count")?,
            to_u32(self.layout.n_layers(), "layer count")?,
            to_u32(self.layout.layer_dim(), "layer dimension")?,
            to_u32(self.layout.chunk_size(), "chunk size")?,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for row in &self.rows {
            for v in row {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(input_err!("latent file is {} bytes, shorter than its header", bytes.len()));
        }
        if &bytes[..4] != LATENT_MAGIC {
            return Err(input_err!("latent file does not start with LGZ1"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let version = word(0);
        if version != LATENT_VERSION as usize {
            return Err(input_err!("unsupported latent file version {version}"));
        }
        let (n, layers, width, chunk) = (word(1), word(2), word(3), word(4));
        let layout = LatentLayout::new(layers, width, chunk)?;
        let d = layout.total_dims();
        let expected = n.checked_mul(d).and_then(|v| v.checked_mul(4));
        let payload = &bytes[HEADER_LEN..];
        if expected != Some(payload.len()) {
            return Err(input_err!(
                "header declares {n} samples of {d} values but the payload has {} bytes",
                payload.len()
            ));
        }
        let rows = if d == 0 {
            vec![Vec::new(); n]
        } else {
            payload
                .chunks_exact(4 * d)
                .map(|row| row.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
                .collect()
        };
        Ok(Self { layout, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| input_err!("{}: {e}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub sample_id: String,
    pub yaw_deg: f64,
    pub pitch_deg: f64,
}

pub fn labels_to_bytes(rows: &[LabelRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| input_err!("cannot encode label row: {e}"))?;
    }
    w.into_inner().map_err(|e| input_err!("cannot encode labels: {e}"))
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| input_err!("{}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| input_err!("{}: {e}", path.display()))?;
    if header != vec!["sample_id", "yaw_deg", "pitch_deg"] {
        return Err(input_err!("{}: header must be sample_id,yaw_deg,pitch_deg", path.display()));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| input_err!("{}: row {}: {e}", path.display(), i + 1)))
        .collect()
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<()> {
    write_atomic(path, &labels_to_bytes(rows)?)
}

/// Pairs a latent file with its label table into a dataset.
pub fn load_dataset(latents: &Path, labels: &Path) -> Result<LatentDataset> {
    let file = LatentFile::read(latents)?;
    let rows = read_labels(labels)?;
    if rows.len() != file.rows.len() {
        return Err(input_err!(
            "{} holds {} samples but {} has {} labels",
            latents.display(),
            file.rows.len(),
            labels.display(),
            rows.len()
        ));
    }
    let samples = file.rows.into_iter().zip(rows).map(|(values, row)| {
        Ok(Sample {
            code: LatentCode::new(file.layout, values.into_iter().map(f64::from).collect())?,
            label: GazeLabel::new(row.yaw_deg, row.pitch_deg)?,
            id: row.sample_id,
        })
    });
    Ok(LatentDataset::from_samples(file.layout, samples.collect::<Result<Vec<_>>>()?)?)
}

/// The latent file and label table for `dataset`. Values are narrowed to `f32`.
pub fn dataset_files(dataset: &LatentDataset) -> Result<(LatentFile, Vec<LabelRow>)> {
    let rows = dataset.samples().iter().map(|s| s.code.values().iter().map(|&v| v as f32).collect()).collect();
    let labels = dataset
        .samples()
        .iter()
        .map(|s| LabelRow { sample_id: s.id.clone(), yaw_deg: s.label.yaw_deg(), pitch_deg: s.label.pitch_deg() })
        .collect();
    Ok((LatentFile::new(*dataset.layout(), rows)?, labels))
}

/// Writes `latents.lgz` and `labels.csv` into `dir`, creating it if needed.
pub fn save_dataset(dataset: &LatentDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let (file, labels) = dataset_files(dataset)?;
    file.write(&dir.join(LATENTS_FILE))?;
    write_labels(&dir.join(LABELS_FILE), &labels)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}
