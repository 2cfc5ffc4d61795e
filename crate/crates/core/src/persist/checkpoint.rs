//! `MWCK` checkpoint files.
//!
//! ```text
//! "MWCK"  u32 version
//! u32 meta_len, meta_len bytes of JSON (architecture, seed, regime, note)
//! u32 tensor_count, then per tensor:
//!     u32 name_len, name, u32 ndim, ndim × u32 dims, u64 payload offset
//! u64 payload_len, payload of little-endian f32
//! ```
//! Offsets are relative to the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bytes::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{Model, TransformerConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MWCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub arch: TransformerConfig,
    pub seed: u64,
    /// How the weights were produced (`init`, `pretrain`, `finetune`, ...).
    pub regime: String,
    #[serde(default)]
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore,
}

impl Checkpoint {
    /// Dense weights of `model`; masked models are materialized first.
    pub fn from_model(model: &Model, seed: u64, regime: &str) -> Result<Self> {
        let dense = if model.is_masked() {
            model.materialized()?
        } else {
            model.clone()
        };
        Ok(Checkpoint {
            meta: CheckpointMeta {
                arch: dense.config.clone(),
                seed,
                regime: regime.to_string(),
                note: String::new(),
            },
            params: dense.params,
        })
    }

    pub fn into_model(self) -> Result<Model> {
        Model::from_parts(self.meta.arch, self.params)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        w.str(&meta)?;
        w.len_u32(self.params.len())?;
        let mut offset = 0u64;
        for (name, p) in self.params.iter() {
            w.str(name)?;
            w.len_u32(p.value.ndim())?;
            for &d in p.value.shape() {
                w.len_u32(d)?;
            }
            w.u64(offset);
            offset += 4 * p.value.len() as u64;
        }
        w.u64(offset);
        for (_, p) in self.params.iter() {
            w.f32s(p.value.data());
        }
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.magic(CHECKPOINT_MAGIC)?;
        r.version(CHECKPOINT_VERSION)?;
        let meta_at = r.pos();
        let meta_json = r.str("checkpoint metadata")?;
        let meta: CheckpointMeta = serde_json::from_str(&meta_json)
            .map_err(|e| Error::format(meta_at, format!("bad checkpoint metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let at = r.pos();
            let name = r.str("tensor name")?;
            let ndim = r.u32()? as usize;
            if ndim > 8 {
                return Err(Error::format(at, format!("tensor `{name}` has {ndim} dimensions")));
            }
            let shape: Vec<usize> = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
            let offset = r.u64()?;
            manifest.push((at, name, shape, offset));
        }
        let payload_len = r.u64()?;
        let payload_at = r.pos();
        if (r.remaining() as u64) < payload_len {
            return Err(Error::Truncated {
                expected: payload_at + payload_len,
                actual: data.len() as u64,
            });
        }
        let payload = r.take(payload_len as usize)?;
        r.finish()?;

        let mut spans: Vec<(u64, u64, u64)> = Vec::with_capacity(manifest.len());
        let mut params = ParamStore::new();
        for (at, name, shape, offset) in manifest {
            let numel = shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d as u64));
            let bytes = numel
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| Error::format(at, format!("tensor `{name}` is too large")))?;
            let end = offset.checked_add(bytes).filter(|&e| e <= payload_len).ok_or_else(|| {
                Error::format(
                    at,
                    format!("tensor `{name}` [{offset}, +{bytes}) exceeds payload of {payload_len} bytes"),
                )
            })?;
            if offset % 4 != 0 {
                return Err(Error::format(
                    at,
                    format!("tensor `{name}` offset {offset} is not 4-aligned"),
                ));
            }
            if params.contains(&name) {
                return Err(Error::format(at, format!("duplicate tensor `{name}`")));
            }
            spans.push((offset, end, at));
            let floats = payload[offset as usize..end as usize]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(shape, floats).map_err(|e| Error::format(at, format!("tensor `{name}`: {e}")))?;
            params.insert(name, t, true);
        }
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::format(pair[1].2, "overlapping tensor payloads"));
            }
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_model(model: &Model, seed: u64, regime: &str, path: &Path) -> Result<()> {
    Checkpoint::from_model(model, seed, regime)?.save(path)
}

pub fn load_model(path: &Path) -> Result<Model> {
    Checkpoint::load(path)?.into_model()
}
