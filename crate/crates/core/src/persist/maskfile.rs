//! `MSKB` mask files: the binarized masks of one task plus the frozen
//! classifier needed to rebuild the task model on top of a pretrained
//! checkpoint.
//!
//! ```text
//! "MSKB"  u32 version  f32 threshold
//! u32 plan_len, plan_len bytes of JSON (plan, architecture, masking config, seed, dev metric)
//! u32 layer_count, then per layer:
//!     u32 name_len, name, u32 rows, u32 cols, ceil(rows·cols/8) bytes
//!     (row-major, least significant bit first, zero padded)
//! u32 rows, u32 cols, rows·cols little-endian f32 classifier weights
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bytes::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::masking::{binarize, init_scores, BinaryMask, MaskingConfig};
use crate::model::{weight_name, MaskPlan, Model, TransformerConfig, CLASSIFIER};
use crate::tensor::Tensor;

pub const MASK_MAGIC: &[u8; 4] = b"MSKB";
pub const MASK_VERSION: u32 = 1;

/// Bytes of packed payload for a `rows × cols` mask.
pub fn mask_payload_bytes(rows: usize, cols: usize) -> usize {
    (rows * cols).div_ceil(8)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub plan: MaskPlan,
    pub arch: TransformerConfig,
    pub masking: MaskingConfig,
    /// Seed of the training run (classifier draw, batch order).
    pub seed: u64,
    pub metric: Option<String>,
    pub dev_metric: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskFile {
    pub tau: f32,
    pub meta: MaskMeta,
    pub layers: Vec<(String, BinaryMask)>,
    pub classifier: Tensor,
}

impl MaskFile {
    /// Captures the current binary masks and classifier of a mask-trained model.
    pub fn from_model(model: &Model, masking: &MaskingConfig, plan: &MaskPlan, seed: u64) -> Result<Self> {
        if !model.is_masked() {
            return Err(Error::Incompatible("model carries no masks".into()));
        }
        Ok(MaskFile {
            tau: model.tau(),
            meta: MaskMeta {
                plan: plan.clone(),
                arch: model.config.clone(),
                masking: masking.clone(),
                seed,
                metric: None,
                dev_metric: None,
            },
            layers: model.binary_masks()?,
            classifier: model.params.value(&weight_name(CLASSIFIER))?.clone(),
        })
    }

    pub fn with_dev_metric(mut self, metric: &str, value: f64) -> Self {
        self.meta.metric = Some(metric.to_string());
        self.meta.dev_metric = Some(value);
        self
    }

    /// Rebuilds the task model from the pretrained weights it was trained on.
    pub fn apply(&self, pretrained: &Model) -> Result<Model> {
        let (a, b) = (&pretrained.config, &self.meta.arch);
        if (a.num_blocks, a.hidden, a.ffn, a.heads, a.vocab_size, a.max_len)
            != (b.num_blocks, b.hidden, b.ffn, b.heads, b.vocab_size, b.max_len)
        {
            return Err(Error::Incompatible(
                "mask file was trained on a different architecture".into(),
            ));
        }
        if pretrained.is_masked() {
            return Err(Error::Incompatible("base checkpoint is already masked".into()));
        }
        let mut model = pretrained.clone();
        model.drop_mlm_head();
        model
            .params
            .insert(weight_name(CLASSIFIER), self.classifier.clone(), false);
        model.config.num_labels = self.classifier.shape()[1];
        model.params.set_all_trainable(false);
        model.set_fixed_masks(self.tau, self.layers.clone())?;
        Ok(model)
    }

    /// The binary masks the scores started from, rebuilt from the recorded
    /// masking configuration.
    pub fn initial_masks(&self) -> Result<Vec<(String, BinaryMask)>> {
        let mut arch = self.meta.arch.clone();
        arch.num_labels = self.classifier.shape()[1];
        self.meta
            .plan
            .layers(&arch)
            .into_iter()
            .map(|(layer, stream)| {
                let (rows, cols) = self
                    .layers
                    .iter()
                    .find(|(n, _)| *n == layer)
                    .map(|(_, m)| (m.rows(), m.cols()))
                    .ok_or_else(|| Error::Incompatible(format!("mask file lacks planned layer `{layer}`")))?;
                let scores = init_scores(&[rows, cols], &self.meta.masking, stream)?;
                Ok((layer, binarize(&scores, self.tau)?))
            })
            .collect()
    }

    pub fn mask(&self, layer: &str) -> Option<&BinaryMask> {
        self.layers.iter().find(|(n, _)| n == layer).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.bytes(MASK_MAGIC);
        w.u32(MASK_VERSION);
        w.f32(self.tau);
        let meta = serde_json::to_string(&self.meta).map_err(|e| Error::Config(e.to_string()))?;
        w.str(&meta)?;
        w.len_u32(self.layers.len())?;
        for (name, mask) in &self.layers {
            w.str(name)?;
            w.len_u32(mask.rows())?;
            w.len_u32(mask.cols())?;
            w.bytes(&mask.pack());
        }
        if self.classifier.ndim() != 2 {
            return Err(Error::shape("classifier", self.classifier.shape(), &[0, 0]));
        }
        w.len_u32(self.classifier.shape()[0])?;
        w.len_u32(self.classifier.shape()[1])?;
        w.f32s(self.classifier.data());
        Ok(w.buf)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader::new(data);
        r.magic(MASK_MAGIC)?;
        r.version(MASK_VERSION)?;
        let tau = r.f32()?;
        let meta_at = r.pos();
        let meta: MaskMeta = serde_json::from_str(&r.str("mask plan")?)
            .map_err(|e| Error::format(meta_at, format!("bad mask plan: {e}")))?;
        let count = r.u32()? as usize;
        let mut layers: Vec<(String, BinaryMask)> = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let at = r.pos();
            let name = r.str("layer name")?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::format(at, format!("layer `{name}` is too large")))?;
            let payload_at = r.pos();
            let bytes = r.take(n.div_ceil(8))?;
            if n % 8 != 0 && bytes[bytes.len() - 1] >> (n % 8) != 0 {
                return Err(Error::format(
                    payload_at + bytes.len() as u64 - 1,
                    format!("layer `{name}` has non-zero padding bits"),
                ));
            }
            if layers.iter().any(|(n, _)| *n == name) {
                return Err(Error::format(at, format!("duplicate layer `{name}`")));
            }
            layers.push((name, BinaryMask::unpack(rows, cols, bytes)?));
        }
        let at = r.pos();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format(at, "classifier is too large"))?;
        let floats = r.f32s(n)?;
        let classifier =
            Tensor::new(vec![rows, cols], floats).map_err(|e| Error::format(at, format!("classifier: {e}")))?;
        r.finish()?;
        Ok(MaskFile {
            tau,
            meta,
            layers,
            classifier,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
