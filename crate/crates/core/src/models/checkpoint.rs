//! Versioned binary checkpoint container.
//!
//! Layout (little-endian): magic `SPDRCKPT`, format version `u32`, seed
//! `u64`, config JSON (`u64` length + bytes), layer kind tags (`u32` count +
//! one byte each), then named tensors (`u32` count; each a `u16`-length
//! name, `u32` rows, `u32` cols and column-major `f64` entries). Trainable
//! parameters come first in canonical order, followed by RBN running means.

use std::path::Path;

use super::network::{ParamKind, SpdModel};
use super::{build_model, ModelConfig};
use crate::error::{Error, Result};
use crate::spd::Mat;

pub const MAGIC: &[u8; 8] = b"SPDRCKPT";
pub const FORMAT_VERSION: u32 = 1;

pub fn to_bytes(model: &SpdModel, seed: u64) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    let cfg = serde_json::to_vec(&model.config)?;
    out.extend_from_slice(&(cfg.len() as u64).to_le_bytes());
    out.extend_from_slice(&cfg);
    let kinds = model.layer_kinds();
    out.extend_from_slice(&(kinds.len() as u32).to_le_bytes());
    out.extend(kinds.iter().map(|k| k.tag()));

    let mut m = model.clone();
    let mut tensors: Vec<(String, Mat)> = m
        .params_mut()
        .into_iter()
        .enumerate()
        .map(|(i, (kind, p))| {
            let k = match kind {
                ParamKind::Stiefel => "stiefel",
                ParamKind::Euclidean => "euclidean",
            };
            (format!("param{i:03}.{k}"), p.clone())
        })
        .collect();
    tensors.extend(
        m.running_means_mut()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (format!("rbn{i:03}.running_mean"), r.clone())),
    );
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in &tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.ncols() as u32).to_le_bytes());
        for v in t.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Rebuilds the model and returns it with its seed.
pub fn from_bytes(buf: &[u8]) -> Result<(SpdModel, u64)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let seed = r.u64()?;
    let len = r.u64()? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(len)?)?;
    let mut model = build_model(&config, seed)?;
    let n_kinds = r.u32()? as usize;
    let tags = r.take(n_kinds)?;
    let expected: Vec<u8> = model.layer_kinds().iter().map(|k| k.tag()).collect();
    if tags != expected.as_slice() {
        return Err(Error::Format("layer kinds do not match the configuration".into()));
    }
    let n_tensors = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.u16()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(r.f64()?);
        }
        tensors.push((name, Mat::from_vec(rows, cols, data)));
    }
    if r.pos != buf.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    let mut it = tensors.into_iter();
    let mut assign = |dst: &mut Mat| -> Result<()> {
        let (name, t) = it
            .next()
            .ok_or_else(|| Error::Format("checkpoint has too few tensors".into()))?;
        if t.shape() != dst.shape() {
            return Err(Error::Format(format!(
                "tensor {name} is {:?}, model expects {:?}",
                t.shape(),
                dst.shape()
            )));
        }
        *dst = t;
        Ok(())
    };
    for (_, p) in model.params_mut() {
        assign(p)?;
    }
    for m in model.running_means_mut() {
        assign(m)?;
    }
    if it.next().is_some() {
        return Err(Error::Format("checkpoint has extra tensors".into()));
    }
    Ok((model, seed))
}

pub fn save(model: &SpdModel, seed: u64, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model, seed)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(SpdModel, u64)> {
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
