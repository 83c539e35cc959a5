//! Binary formats for trained parameters.
//!
//! Both formats start with a 4-byte magic and a little-endian `u32` version,
//! followed by little-endian `u32` shape fields and `f64` tensors.
//!
//! Regressor (`LGZR`): n_layers, layer_dim, chunk_size, hidden, mask length,
//! the mask's chunk indices, then attention logits, w1, b1, w2, b2.
//!
//! Toy pipeline (`LGZP`): image dim, latent dim, extractor-trained flag, then
//! encoder, generator and extractor, each as weight followed by bias.

use std::fs;
use std::path::Path;

use latentgaze::regressor::RegressorParams;
use latentgaze::shiftsim::{Affine, ToyPipelineParams};
use latentgaze::{LatentLayout, SelectionMask};

use crate::error::{input_err, CliError, Result};
use crate::format::write_atomic;

pub const REGRESSOR_MAGIC: &[u8; 4] = b"LGZR";
pub const PIPELINE_MAGIC: &[u8; 4] = b"LGZP";
pub const MODEL_VERSION: u32 = 1;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| input_err!("value {v} does not fit in a u32"))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|v| self.0.extend_from_slice(&v.to_le_bytes()));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], magic: &[u8; 4]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != magic {
            return Err(input_err!("not a {} file", String::from_utf8_lossy(magic)));
        }
        let mut r = Self { bytes, pos: 4 };
        let version = r.u32()?;
        if version != MODEL_VERSION as usize {
            return Err(input_err!("unsupported model version {version}"));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| input_err!("model file is truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| input_err!("model file is truncated"))?;
        Ok(self.take(len)?.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(input_err!("model file has {} trailing bytes", self.bytes.len() - self.pos));
        }
        Ok(())
    }
}

/// A trained regressor together with the mask it reads.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressorModel {
    pub mask: SelectionMask,
    pub params: RegressorParams,
}

impl RegressorModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.0.extend_from_slice(REGRESSOR_MAGIC);
        let l = self.mask.layout();
        for v in [MODEL_VERSION as usize, l.n_layers(), l.layer_dim(), l.chunk_size(), self.params.hidden(), self.mask.len()] {
            w.u32(v)?;
        }
        for &c in self.mask.chunks() {
            w.u32(c)?;
        }
        for t in self.params.tensors() {
            w.f64s(t);
        }
        Ok(w.0)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, REGRESSOR_MAGIC)?;
        let layout = LatentLayout::new(r.u32()?, r.u32()?, r.u32()?)?;
        let hidden = r.u32()?;
        let n_mask = r.u32()?;
        let chunks = (0..n_mask).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let mask = SelectionMask::new(layout, chunks)?;
        let d = mask.n_elements();
        let logits = r.f64s(layout.n_chunks())?;
        let w1 = r.f64s(hidden * d)?;
        let b1 = r.f64s(hidden)?;
        let w2 = r.f64s(2 * hidden)?;
        let b2 = r.f64s(2)?;
        r.finish()?;
        Ok(Self { mask, params: RegressorParams::from_parts(logits, w1, b1, w2, b2)? })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| input_err!("{}: {e}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }
}

pub fn pipeline_to_bytes(p: &ToyPipelineParams) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.0.extend_from_slice(PIPELINE_MAGIC);
    for v in [MODEL_VERSION as usize, p.image_dim(), p.latent_dim(), p.extractor_trained() as usize] {
        w.u32(v)?;
    }
    for a in [&p.encoder, p.generator(), &p.extractor] {
        w.f64s(a.weight());
        w.f64s(a.bias());
    }
    Ok(w.0)
}

pub fn pipeline_from_bytes(bytes: &[u8]) -> Result<ToyPipelineParams> {
    let mut r = Reader::new(bytes, PIPELINE_MAGIC)?;
    let (m, d, trained) = (r.u32()?, r.u32()?, r.u32()?);
    if trained > 1 {
        return Err(input_err!("invalid extractor-trained flag {trained}"));
    }
    let mut affine = |outputs: usize, inputs: usize| -> Result<Affine> {
        let w = r.f64s(outputs * inputs)?;
        let b = r.f64s(outputs)?;
        Ok(Affine::new(outputs, inputs, w, b)?)
    };
    let encoder = affine(d, m)?;
    let generator = affine(m, d)?;
    let extractor = affine(2, m)?;
    r.finish()?;
    Ok(ToyPipelineParams::new(encoder, generator, extractor, trained == 1)?)
}

pub fn read_pipeline(path: &Path) -> Result<ToyPipelineParams> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    pipeline_from_bytes(&bytes).map_err(|e| input_err!("{}: {e}", path.display()))
}

pub fn write_pipeline(path: &Path, p: &ToyPipelineParams) -> Result<()> {
    write_atomic(path, &pipeline_to_bytes(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regressor_round_trip() {
        let layout = LatentLayout::new(2, 8, 4).unwrap();
        let mask = SelectionMask::new(layout, vec![1, 3]).unwrap();
        let model = RegressorModel { params: RegressorParams::init(&mask, 5, 7), mask };
        let bytes = model.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"LGZR");
        assert_eq!(RegressorModel::from_bytes(&bytes).unwrap(), model);
        assert!(RegressorModel::from_bytes(&bytes[..bytes.len() - 8]).is_err());
    }

    #[test]
    fn pipeline_round_trip() {
        let images: Vec<Vec<f64>> = (0..10).map(|i| (0..6).map(|j| ((i * 7 + j * 3) % 5) as f64).collect()).collect();
        let p = ToyPipelineParams::from_source(&images, 2, 3).unwrap();
        let bytes = pipeline_to_bytes(&p).unwrap();
        assert_eq!(pipeline_from_bytes(&bytes).unwrap(), p);
        let mut extra = bytes;
        extra.extend_from_slice(&[0; 8]);
        assert!(pipeline_from_bytes(&extra).is_err());
    }
}
