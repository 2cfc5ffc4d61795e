//! Post-layernorm transformer encoder with per-layer mask slots.
//!
//! Weights are stored `[in, out]` so a layer is `x · W + b`. Every forward
//! function reads weights through a [`Bound`] view, which lets the same code
//! run a dense model, a masked model (`Ŵ = W ⊙ M_bin`), or weights that are
//! themselves computed on the graph (curve points between two models).

use std::collections::{BTreeSet, HashMap};

use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::masking::{binarize, init_scores, masked_weight, BinaryMask, MaskingConfig};
use crate::params::ParamStore;
use crate::tensor::{Graph, Tensor, Var};

pub const LN_EPS: f32 = 1e-5;
/// Additive attention bias on padded keys; finite so tensors stay finite.
pub const PAD_BIAS: f32 = -1e9;
pub const INIT_STD: f32 = 0.02;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub num_blocks: usize,
    pub hidden: usize,
    pub ffn: usize,
    pub heads: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub num_labels: usize,
    /// Segment (token type) embedding rows; 0 omits the table.
    #[serde(default)]
    pub segment_types: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            num_blocks: 4,
            hidden: 64,
            ffn: 256,
            heads: 4,
            vocab_size: 128,
            max_len: 32,
            num_labels: 2,
            segment_types: 0,
        }
    }
}

impl TransformerConfig {
    /// BERT-base-uncased dimensions.
    pub fn bert_base() -> Self {
        TransformerConfig {
            num_blocks: 12,
            hidden: 768,
            ffn: 3072,
            heads: 12,
            vocab_size: 30522,
            max_len: 512,
            num_labels: 2,
            segment_types: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.max_len == 0 || self.ffn == 0 || self.vocab_size == 0 {
            return bad("max_len, ffn and vocab_size must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    /// Maskable values per block: `4d² + 2·d·d_ff`.
    pub fn block_maskable(&self) -> u64 {
        let (d, f) = (self.hidden as u64, self.ffn as u64);
        4 * d * d + 2 * d * f
    }

    /// All float values of the encoder plus pooler (no task head).
    pub fn pretrained_param_count(&self) -> u64 {
        let (d, f) = (self.hidden as u64, self.ffn as u64);
        let embeddings = (self.vocab_size + self.max_len + self.segment_types) as u64 * d + 2 * d;
        let block = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 4 * d;
        let pooler = d * d + d;
        embeddings + self.num_blocks as u64 * block + pooler
    }
}

/// The six linear layers of a block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockLinear {
    Query,
    Key,
    Value,
    AttnOut,
    Intermediate,
    Output,
}

impl BlockLinear {
    pub const ALL: [BlockLinear; 6] = [
        BlockLinear::Key,
        BlockLinear::Query,
        BlockLinear::Value,
        BlockLinear::AttnOut,
        BlockLinear::Intermediate,
        BlockLinear::Output,
    ];

    fn suffix(self) -> &'static str {
        match self {
            BlockLinear::Query => "attn.query",
            BlockLinear::Key => "attn.key",
            BlockLinear::Value => "attn.value",
            BlockLinear::AttnOut => "attn.output",
            BlockLinear::Intermediate => "ffn.intermediate",
            BlockLinear::Output => "ffn.output",
        }
    }

    fn dims(self, cfg: &TransformerConfig) -> (usize, usize) {
        match self {
            BlockLinear::Intermediate => (cfg.hidden, cfg.ffn),
            BlockLinear::Output => (cfg.ffn, cfg.hidden),
            _ => (cfg.hidden, cfg.hidden),
        }
    }
}

pub fn block_layer(block: usize, kind: BlockLinear) -> String {
    format!("blocks.{block}.{}", kind.suffix())
}

pub const POOLER: &str = "pooler";
pub const CLASSIFIER: &str = "classifier";

pub fn weight_name(layer: &str) -> String {
    format!("{layer}.weight")
}

pub fn bias_name(layer: &str) -> String {
    format!("{layer}.bias")
}

pub fn scores_name(layer: &str) -> String {
    format!("{layer}.scores")
}

/// Which linear layers carry masks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskPlan {
    pub blocks: BTreeSet<usize>,
    pub pooler: bool,
    pub classifier: bool,
}

impl MaskPlan {
    pub fn all(num_blocks: usize) -> Self {
        MaskPlan {
            blocks: (0..num_blocks).collect(),
            pooler: true,
            classifier: true,
        }
    }

    pub fn none() -> Self {
        MaskPlan {
            blocks: BTreeSet::new(),
            pooler: false,
            classifier: false,
        }
    }

    /// The lowest `count` blocks, plus pooler and classifier.
    pub fn bottom_up(count: usize, num_blocks: usize) -> Result<Self> {
        check_count(count, num_blocks)?;
        Ok(MaskPlan {
            blocks: (0..count).collect(),
            ..MaskPlan::all(0)
        })
    }

    /// The highest `count` blocks, plus pooler and classifier.
    pub fn top_down(count: usize, num_blocks: usize) -> Result<Self> {
        check_count(count, num_blocks)?;
        Ok(MaskPlan {
            blocks: (num_blocks - count..num_blocks).collect(),
            ..MaskPlan::all(0)
        })
    }

    /// Parses `all`, `none`, `bottom:C`, `top:C`, `range:A-B` or a comma list
    /// of block indices. Pooler and classifier are masked unless `none`.
    pub fn parse(spec: &str, num_blocks: usize) -> Result<Self> {
        let spec = spec.trim();
        let plan = if spec == "all" {
            MaskPlan::all(num_blocks)
        } else if spec == "none" {
            MaskPlan::none()
        } else if let Some(c) = spec.strip_prefix("bottom:") {
            MaskPlan::bottom_up(parse_usize(c)?, num_blocks)?
        } else if let Some(c) = spec.strip_prefix("top:") {
            MaskPlan::top_down(parse_usize(c)?, num_blocks)?
        } else if let Some(r) = spec.strip_prefix("range:") {
            let (a, b) = r
                .split_once('-')
                .ok_or_else(|| Error::Config(format!("bad block range `{r}`")))?;
            let (a, b) = (parse_usize(a)?, parse_usize(b)?);
            MaskPlan {
                blocks: (a..=b).collect(),
                ..MaskPlan::all(0)
            }
        } else {
            let blocks = spec
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(parse_usize)
                .collect::<Result<_>>()?;
            MaskPlan {
                blocks,
                ..MaskPlan::all(0)
            }
        };
        plan.validate(num_blocks)?;
        Ok(plan)
    }

    pub fn validate(&self, num_blocks: usize) -> Result<()> {
        if let Some(&b) = self.blocks.iter().find(|&&b| b >= num_blocks) {
            return Err(Error::Index {
                what: "mask plan block",
                position: 0,
                value: b,
                limit: num_blocks,
            });
        }
        Ok(())
    }

    /// Masked layer names with their canonical stream index, in model order.
    pub fn layers(&self, cfg: &TransformerConfig) -> Vec<(String, u64)> {
        maskable_layers(cfg)
            .into_iter()
            .enumerate()
            .filter(|(_, (name, _))| self.includes(name))
            .map(|(i, (name, _))| (name, i as u64))
            .collect()
    }

    fn includes(&self, layer: &str) -> bool {
        if layer == POOLER {
            return self.pooler;
        }
        if layer == CLASSIFIER {
            return self.classifier;
        }
        layer
            .strip_prefix("blocks.")
            .and_then(|rest| rest.split('.').next())
            .and_then(|b| b.parse::<usize>().ok())
            .is_some_and(|b| self.blocks.contains(&b))
    }

    /// Mask bits for blocks and pooler (the classifier is counted per task).
    pub fn encoder_mask_bits(&self, cfg: &TransformerConfig) -> u64 {
        let d = cfg.hidden as u64;
        self.blocks.len() as u64 * cfg.block_maskable() + if self.pooler { d * d } else { 0 }
    }

    /// Total number of mask scores, classifier included when planned.
    pub fn maskable_count(&self, cfg: &TransformerConfig) -> u64 {
        maskable_layers(cfg)
            .into_iter()
            .filter(|(name, _)| self.includes(name))
            .map(|(_, (r, c))| (r * c) as u64)
            .sum()
    }

    pub fn describe(&self) -> String {
        let blocks: Vec<String> = self.blocks.iter().map(|b| b.to_string()).collect();
        format!(
            "blocks=[{}] pooler={} classifier={}",
            blocks.join(","),
            self.pooler,
            self.classifier
        )
    }
}

fn check_count(count: usize, num_blocks: usize) -> Result<()> {
    if count > num_blocks {
        return Err(Error::Index {
            what: "mask plan block count",
            position: 0,
            value: count,
            limit: num_blocks + 1,
        });
    }
    Ok(())
}

fn parse_usize(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("expected a non-negative integer, got `{s}`")))
}

/// Names and shapes of the encoder and pooler tensors, in creation order.
pub fn encoder_shapes(cfg: &TransformerConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.hidden;
    let mut out = vec![
        ("embeddings.word".to_string(), vec![cfg.vocab_size, d]),
        ("embeddings.position".to_string(), vec![cfg.max_len, d]),
    ];
    if cfg.segment_types > 0 {
        out.push(("embeddings.segment".to_string(), vec![cfg.segment_types, d]));
    }
    out.push(("embeddings.ln.gain".to_string(), vec![d]));
    out.push(("embeddings.ln.bias".to_string(), vec![d]));
    for b in 0..cfg.num_blocks {
        for kind in BlockLinear::ALL {
            let layer = block_layer(b, kind);
            let (i, o) = kind.dims(cfg);
            out.push((weight_name(&layer), vec![i, o]));
            out.push((bias_name(&layer), vec![o]));
        }
        for ln in ["attn.ln", "ffn.ln"] {
            out.push((format!("blocks.{b}.{ln}.gain"), vec![d]));
            out.push((format!("blocks.{b}.{ln}.bias"), vec![d]));
        }
    }
    out.push((weight_name(POOLER), vec![d, d]));
    out.push((bias_name(POOLER), vec![d]));
    out
}

fn is_encoder_name(name: &str, cfg: &TransformerConfig) -> bool {
    encoder_shapes(cfg).iter().any(|(n, _)| n == name)
}

/// Every mask-eligible layer with its `[in, out]` dims, in canonical order.
pub fn maskable_layers(cfg: &TransformerConfig) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    for b in 0..cfg.num_blocks {
        for kind in BlockLinear::ALL {
            out.push((block_layer(b, kind), kind.dims(cfg)));
        }
    }
    out.push((POOLER.to_string(), (cfg.hidden, cfg.hidden)));
    out.push((CLASSIFIER.to_string(), (cfg.hidden, cfg.num_labels)));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub enum MaskSlot {
    /// Trainable scores stored in the param store under this name.
    Scores(String),
    /// A fixed binary mask (reconstructed from a mask file).
    Fixed(BinaryMask),
}

/// Encoder weights plus optional heads and mask slots.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: TransformerConfig,
    pub params: ParamStore,
    masks: IndexMap<String, MaskSlot>,
    tau: f32,
}

struct Init {
    rng: ChaCha8Rng,
    normal: Normal<f32>,
}

impl Init {
    fn new(seed: u64) -> Self {
        Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
            normal: Normal::new(0.0, INIT_STD).expect("valid std"),
        }
    }

    fn normal(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.normal.sample(&mut self.rng)).collect();
        Tensor::from_parts(shape.to_vec(), data)
    }
}

impl Model {
    /// Randomly initialized encoder and pooler, all trainable, no heads.
    pub fn init(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = Init::new(seed);
        let mut p = ParamStore::new();
        let d = config.hidden;
        p.insert("embeddings.word", init.normal(&[config.vocab_size, d]), true);
        p.insert("embeddings.position", init.normal(&[config.max_len, d]), true);
        if config.segment_types > 0 {
            p.insert("embeddings.segment", init.normal(&[config.segment_types, d]), true);
        }
        p.insert("embeddings.ln.gain", Tensor::ones(&[d]), true);
        p.insert("embeddings.ln.bias", Tensor::zeros(&[d]), true);
        for b in 0..config.num_blocks {
            for kind in BlockLinear::ALL {
                let layer = block_layer(b, kind);
                let (i, o) = kind.dims(&config);
                p.insert(weight_name(&layer), init.normal(&[i, o]), true);
                p.insert(bias_name(&layer), Tensor::zeros(&[o]), true);
            }
            for ln in ["attn.ln", "ffn.ln"] {
                p.insert(format!("blocks.{b}.{ln}.gain"), Tensor::ones(&[d]), true);
                p.insert(format!("blocks.{b}.{ln}.bias"), Tensor::zeros(&[d]), true);
            }
        }
        p.insert(weight_name(POOLER), init.normal(&[d, d]), true);
        p.insert(bias_name(POOLER), Tensor::zeros(&[d]), true);
        Ok(Model {
            config,
            params: p,
            masks: IndexMap::new(),
            tau: MaskingConfig::default().tau,
        })
    }

    /// Wraps loaded parameters, checking them against the architecture.
    /// Everything is marked trainable and no masks are attached.
    pub fn from_parts(mut config: TransformerConfig, mut params: ParamStore) -> Result<Self> {
        config.validate()?;
        for (name, shape) in encoder_shapes(&config) {
            let v = params.value(&name)?;
            if v.shape() != shape.as_slice() {
                return Err(Error::shape("checkpoint tensor", v.shape(), &shape));
            }
        }
        let d = config.hidden;
        if let Ok(c) = params.value(&weight_name(CLASSIFIER)) {
            if c.ndim() != 2 || c.shape()[0] != d {
                return Err(Error::shape("classifier", c.shape(), &[d, config.num_labels]));
            }
            config.num_labels = c.shape()[1];
        }
        if let Some(extra) = params
            .names()
            .find(|n| !n.starts_with("mlm.") && *n != weight_name(CLASSIFIER) && !is_encoder_name(n, &config))
        {
            return Err(Error::Incompatible(format!("unexpected tensor `{extra}`")));
        }
        params.set_all_trainable(true);
        Ok(Model {
            config,
            params,
            masks: IndexMap::new(),
            tau: MaskingConfig::default().tau,
        })
    }

    /// Adds the masked-LM head (transform + tied decoder bias).
    pub fn attach_mlm_head(&mut self, seed: u64) {
        let mut init = Init::new(seed ^ 0x6d6c_6d00);
        let d = self.config.hidden;
        self.params.insert("mlm.transform.weight", init.normal(&[d, d]), true);
        self.params.insert("mlm.transform.bias", Tensor::zeros(&[d]), true);
        self.params.insert("mlm.ln.gain", Tensor::ones(&[d]), true);
        self.params.insert("mlm.ln.bias", Tensor::zeros(&[d]), true);
        self.params
            .insert("mlm.bias", Tensor::zeros(&[self.config.vocab_size]), true);
    }

    pub fn drop_mlm_head(&mut self) {
        let names: Vec<String> = self
            .params
            .names()
            .filter(|n| n.starts_with("mlm."))
            .map(String::from)
            .collect();
        for n in names {
            self.params.remove(&n);
        }
    }

    /// Draws a fresh `[d, k]` task classifier (normal, std 0.02, no bias).
    /// The draw depends only on `(seed, d, k)`.
    pub fn attach_classifier(&mut self, num_labels: usize, seed: u64) -> Result<()> {
        if num_labels < 1 {
            return Err(Error::Config("classifier needs at least one output".into()));
        }
        self.config.num_labels = num_labels;
        let w = classifier_init(self.config.hidden, num_labels, seed);
        self.params.insert(weight_name(CLASSIFIER), w, true);
        Ok(())
    }

    pub fn has_classifier(&self) -> bool {
        self.params.contains(&weight_name(CLASSIFIER))
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }

    pub fn masks(&self) -> &IndexMap<String, MaskSlot> {
        &self.masks
    }

    pub fn is_masked(&self) -> bool {
        !self.masks.is_empty()
    }

    /// Turns the planned layers into masked layers with fresh scores and
    /// freezes everything else; afterwards the trainable set is exactly the
    /// planned scores.
    pub fn apply_mask_plan(&mut self, plan: &MaskPlan, cfg: &MaskingConfig) -> Result<()> {
        cfg.validate()?;
        plan.validate(self.config.num_blocks)?;
        if plan.classifier && !self.has_classifier() {
            return Err(Error::Config("plan masks the classifier but none is attached".into()));
        }
        self.params.set_all_trainable(false);
        self.masks.clear();
        for (layer, stream) in plan.layers(&self.config) {
            let w = self.params.value(&weight_name(&layer))?;
            let scores = init_scores(w.shape(), cfg, stream)?;
            let name = scores_name(&layer);
            self.params.insert(name.clone(), scores, true);
            self.masks.insert(layer, MaskSlot::Scores(name));
        }
        self.tau = cfg.tau;
        Ok(())
    }

    /// Replaces the mask slots with fixed masks (used when loading mask files).
    pub fn set_fixed_masks(&mut self, tau: f32, masks: Vec<(String, BinaryMask)>) -> Result<()> {
        self.clear_masks();
        for (layer, mask) in masks {
            let w = self.params.value(&weight_name(&layer))?;
            if w.shape() != [mask.rows(), mask.cols()] {
                return Err(Error::shape("fixed mask", w.shape(), &[mask.rows(), mask.cols()]));
            }
            self.masks.insert(layer, MaskSlot::Fixed(mask));
        }
        self.tau = tau;
        Ok(())
    }

    fn clear_masks(&mut self) {
        for slot in self.masks.values() {
            if let MaskSlot::Scores(name) = slot {
                self.params.remove(name);
            }
        }
        self.masks.clear();
    }

    /// Current binary mask of every masked layer.
    pub fn binary_masks(&self) -> Result<Vec<(String, BinaryMask)>> {
        self.masks
            .iter()
            .map(|(layer, slot)| {
                let mask = match slot {
                    MaskSlot::Scores(name) => binarize(self.params.value(name)?, self.tau)?,
                    MaskSlot::Fixed(m) => m.clone(),
                };
                Ok((layer.clone(), mask))
            })
            .collect()
    }

    /// Realized sparsity per masked layer.
    pub fn mask_sparsities(&self) -> Result<Vec<(String, f64)>> {
        Ok(self
            .binary_masks()?
            .into_iter()
            .map(|(l, m)| (l, m.sparsity()))
            .collect())
    }

    /// Dense copy with `Ŵ = W ⊙ M_bin` written into every masked weight.
    pub fn materialized(&self) -> Result<Model> {
        let mut out = self.clone();
        for (layer, mask) in self.binary_masks()? {
            let wn = weight_name(&layer);
            let w = self.params.value(&wn)?;
            out.params.get_mut(&wn)?.value = w.zip_map(&mask.to_tensor(), |w, m| w * m)?;
        }
        out.clear_masks();
        Ok(out)
    }

    /// Names of the parameters a task model consists of (no MLM head, no scores).
    pub fn weight_names(&self) -> Vec<String> {
        self.params
            .names()
            .filter(|n| !n.starts_with("mlm.") && !n.ends_with(".scores"))
            .map(String::from)
            .collect()
    }

    /// Puts every parameter on the graph and builds the masked weights.
    pub fn bind(&self, g: &mut Graph) -> Result<Bound> {
        let mut bound = Bound::default();
        for (name, p) in self.params.iter() {
            let v = g.leaf(p.value.clone(), p.trainable);
            bound.leaves.push((name.to_string(), v));
            bound.vars.insert(name.to_string(), v);
        }
        for (layer, slot) in &self.masks {
            let wn = weight_name(layer);
            let w = bound.get(&wn)?;
            let masked = match slot {
                MaskSlot::Scores(s) => {
                    let scores = bound.get(s)?;
                    masked_weight(g, w, scores, self.tau)?
                }
                MaskSlot::Fixed(mask) => {
                    let m = g.constant(mask.to_tensor());
                    g.mul(w, m)?
                }
            };
            bound.vars.insert(wn, masked);
        }
        Ok(bound)
    }
}

/// Classifier draw shared by finetuning and masking so that tasks with the
/// same output size can share one frozen classifier.
pub fn classifier_init(hidden: usize, num_labels: usize, seed: u64) -> Tensor {
    let mut init = Init::new(seed ^ 0xc1a5_5000 ^ ((num_labels as u64) << 32));
    init.normal(&[hidden, num_labels])
}

/// Name → graph variable view of a model's weights.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: HashMap<String, Var>,
    /// Parameter leaves, for flushing gradients back into a [`ParamStore`].
    pub leaves: Vec<(String, Var)>,
}

impl Bound {
    pub fn from_vars(vars: HashMap<String, Var>) -> Self {
        Bound {
            vars,
            leaves: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("weight `{name}` is not bound")))
    }
}

/// Padded token batch. Row `b` holds `lengths[b]` real tokens, then PAD.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub batch: usize,
    pub seq_len: usize,
    pub lengths: Vec<usize>,
    /// Sequences that had to be cut to fit `max_len`.
    pub truncated: usize,
}

pub const PAD_ID: usize = 0;

impl Batch {
    /// Pads to the longest sequence, truncating anything longer than `max_len`.
    pub fn new(seqs: &[&[u32]], max_len: usize) -> Result<Self> {
        if seqs.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let mut truncated = 0;
        let lengths: Vec<usize> = seqs
            .iter()
            .map(|s| {
                if s.len() > max_len {
                    truncated += 1;
                }
                s.len().min(max_len).max(1)
            })
            .collect();
        let seq_len = *lengths.iter().max().expect("non-empty");
        let mut ids = vec![PAD_ID; seqs.len() * seq_len];
        for (b, s) in seqs.iter().enumerate() {
            for (t, &id) in s.iter().take(lengths[b]).enumerate() {
                ids[b * seq_len + t] = id as usize;
            }
        }
        Ok(Batch {
            ids,
            batch: seqs.len(),
            seq_len,
            lengths,
            truncated,
        })
    }

    /// `[B, 1, 1, T]` additive bias: 0 on real keys, [`PAD_BIAS`] on padding.
    pub fn attention_bias(&self) -> Tensor {
        let mut data = vec![0.0; self.batch * self.seq_len];
        for (b, &len) in self.lengths.iter().enumerate() {
            for t in len..self.seq_len {
                data[b * self.seq_len + t] = PAD_BIAS;
            }
        }
        Tensor::from_parts(vec![self.batch, 1, 1, self.seq_len], data)
    }

    pub fn is_real(&self, b: usize, t: usize) -> bool {
        t < self.lengths[b]
    }
}

/// Graph handles of one attention sublayer.
#[derive(Clone, Copy, Debug)]
pub struct AttentionOut {
    pub output: Var,
    /// `[B, h, T, T]` attention weights.
    pub probs: Var,
}

fn linear(g: &mut Graph, w: &Bound, layer: &str, x: Var) -> Result<Var> {
    let y = g.matmul(x, w.get(&weight_name(layer))?)?;
    g.add(y, w.get(&bias_name(layer))?)
}

/// Multi-head self attention over `x: [B, T, d]`, followed by `W_AO`.
pub fn attention(
    g: &mut Graph,
    w: &Bound,
    cfg: &TransformerConfig,
    block: usize,
    x: Var,
    bias: Var,
) -> Result<AttentionOut> {
    let shape = g.shape(x).to_vec();
    let [bsz, t, d] = shape[..] else {
        return Err(Error::shape("attention input", &shape, &[cfg.hidden]));
    };
    if d != cfg.hidden {
        return Err(Error::shape("attention input", &shape, &[cfg.hidden]));
    }
    let (h, dh) = (cfg.heads, cfg.head_dim());
    let q = linear(g, w, &block_layer(block, BlockLinear::Query), x)?;
    let k = linear(g, w, &block_layer(block, BlockLinear::Key), x)?;
    let v = linear(g, w, &block_layer(block, BlockLinear::Value), x)?;
    let q = g.reshape(q, &[bsz, t, h, dh])?;
    let q = g.permute(q, &[0, 2, 1, 3])?;
    let k = g.reshape(k, &[bsz, t, h, dh])?;
    let kt = g.permute(k, &[0, 2, 3, 1])?;
    let v = g.reshape(v, &[bsz, t, h, dh])?;
    let v = g.permute(v, &[0, 2, 1, 3])?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (dh as f32).sqrt());
    let scores = g.add(scores, bias)?;
    let probs = g.softmax(scores, 3)?;
    let ctx = g.matmul(probs, v)?;
    let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = g.reshape(ctx, &[bsz, t, d])?;
    let output = linear(g, w, &block_layer(block, BlockLinear::AttnOut), ctx)?;
    Ok(AttentionOut { output, probs })
}

/// Hidden states `[B, T, d]` of the topmost block.
pub fn encode(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<Var> {
    Ok(encode_traced(g, w, cfg, batch)?.0)
}

/// Like [`encode`], also returning every block's attention weights.
pub fn encode_traced(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<(Var, Vec<Var>)> {
    let (bsz, t) = (batch.batch, batch.seq_len);
    if t > cfg.max_len {
        return Err(Error::shape("encode", &[bsz, t], &[cfg.max_len]));
    }
    let mut x = g.embedding(w.get("embeddings.word")?, &batch.ids, &[bsz, t])?;
    let positions: Vec<usize> = (0..t).collect();
    let pos = g.embedding(w.get("embeddings.position")?, &positions, &[t])?;
    x = g.add(x, pos)?;
    if cfg.segment_types > 0 {
        let seg = g.embedding(w.get("embeddings.segment")?, &[0], &[1])?;
        x = g.add(x, seg)?;
    }
    x = g.layer_norm(x, w.get("embeddings.ln.gain")?, w.get("embeddings.ln.bias")?, LN_EPS)?;
    let bias = g.constant(batch.attention_bias());
    let mut probs = Vec::with_capacity(cfg.num_blocks);
    for b in 0..cfg.num_blocks {
        let att = attention(g, w, cfg, b, x, bias)?;
        probs.push(att.probs);
        let h = g.add(x, att.output)?;
        let h = g.layer_norm(
            h,
            w.get(&format!("blocks.{b}.attn.ln.gain"))?,
            w.get(&format!("blocks.{b}.attn.ln.bias"))?,
            LN_EPS,
        )?;
        let f = linear(g, w, &block_layer(b, BlockLinear::Intermediate), h)?;
        let f = g.gelu(f);
        let f = linear(g, w, &block_layer(b, BlockLinear::Output), f)?;
        let out = g.add(h, f)?;
        x = g.layer_norm(
            out,
            w.get(&format!("blocks.{b}.ffn.ln.gain"))?,
            w.get(&format!("blocks.{b}.ffn.ln.bias"))?,
            LN_EPS,
        )?;
    }
    Ok((x, probs))
}

/// Position-0 vectors `[B, d]` of the topmost block.
pub fn cls_embedding(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<Var> {
    let h = encode(g, w, cfg, batch)?;
    g.select(h, 1, 0)
}

/// Sequence logits `[B, k] = tanh(h₀·W_P + b_P)·W_T`.
pub fn classify_sequence(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<Var> {
    let h0 = cls_embedding(g, w, cfg, batch)?;
    let pooled = linear(g, w, POOLER, h0)?;
    let pooled = g.tanh(pooled);
    g.matmul(pooled, w.get(&weight_name(CLASSIFIER))?)
}

/// Per-position logits `[B, T, k]`.
pub fn tag_tokens(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<Var> {
    let h = encode(g, w, cfg, batch)?;
    g.matmul(h, w.get(&weight_name(CLASSIFIER))?)
}

/// Masked-LM logits `[B, T, vocab]` through the tied decoder.
pub fn mlm_logits(g: &mut Graph, w: &Bound, cfg: &TransformerConfig, batch: &Batch) -> Result<Var> {
    let h = encode(g, w, cfg, batch)?;
    let t = linear(g, w, "mlm.transform", h)?;
    let t = g.gelu(t);
    let t = g.layer_norm(t, w.get("mlm.ln.gain")?, w.get("mlm.ln.bias")?, LN_EPS)?;
    let emb_t = g.permute(w.get("embeddings.word")?, &[1, 0])?;
    let logits = g.matmul(t, emb_t)?;
    g.add(logits, w.get("mlm.bias")?)
}
