//! The three training regimes, evaluation and the learning-rate protocol.

mod adam;
mod grid;
mod metrics;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, BETA1, BETA2, EPS};
pub use grid::{ladder_down, ladder_up, lr_grid_search, GridResult, FINETUNE_GRID, MASK_GRID};
pub use metrics::{accuracy, mcc, micro_f1, ConfusionMatrix, Metric};

use crate::data::{mlm_corrupt, Example, Target, TaskDataset, TaskKind, Vocab};
use crate::error::{Error, Result};
use crate::masking::MaskingConfig;
use crate::model::{classify_sequence, mlm_logits, tag_tokens, Batch, Bound, MaskPlan, Model, TransformerConfig};
use crate::tensor::{Graph, Var, IGNORE_INDEX};

/// Examples per forward pass during evaluation.
pub const EVAL_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Pretrain,
    Finetune,
    Mask,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Pretrain => "pretrain",
            Regime::Finetune => "finetune",
            Regime::Mask => "mask",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pretrain" => Ok(Regime::Pretrain),
            "finetune" => Ok(Regime::Finetune),
            "mask" => Ok(Regime::Mask),
            other => Err(Error::Config(format!("unknown regime `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping; 0 disables early stopping.
    pub patience: usize,
    pub seed: u64,
    /// Dev metric; `None` picks the task default.
    pub metric: Option<Metric>,
    pub masking: MaskingConfig,
    /// Masked layers in the mask regime; `None` masks everything maskable.
    pub plan: Option<MaskPlan>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Finetune,
            lr: 5e-5,
            batch_size: 16,
            max_epochs: 10,
            patience: 2,
            seed: 0,
            metric: None,
            masking: MaskingConfig::default(),
            plan: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.regime == Regime::Mask {
            self.masking.validate()?;
        }
        Ok(())
    }

    pub fn plan_for(&self, cfg: &TransformerConfig) -> MaskPlan {
        self.plan.clone().unwrap_or_else(|| MaskPlan::all(cfg.num_blocks))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub regime: Regime,
    pub lr: f64,
    pub seed: u64,
    pub metric: String,
    pub higher_is_better: bool,
    /// Dev metric before the first update.
    pub initial_dev_metric: f64,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub early_stopped: bool,
    pub test_metric: Option<f64>,
    pub wall_clock_secs: f64,
    pub mask_sparsities: Vec<(String, f64)>,
    /// Additional named scalars (e.g. MLM accuracy).
    pub extra: Vec<(String, f64)>,
    pub truncated: usize,
}

impl RunResult {
    pub fn best_dev_metric(&self) -> f64 {
        self.epochs
            .iter()
            .find(|e| e.epoch == self.best_epoch)
            .map_or(f64::NAN, |e| e.dev_metric)
    }

    /// Mean realized sparsity over all masked entries' layers (unweighted).
    pub fn mean_sparsity(&self) -> Option<f64> {
        if self.mask_sparsities.is_empty() {
            return None;
        }
        Some(self.mask_sparsities.iter().map(|(_, s)| s).sum::<f64>() / self.mask_sparsities.len() as f64)
    }
}

// ---------------------------------------------------------------- evaluation

/// Default dev metric for a task: accuracy for sequences, micro-F1 for tags.
pub fn default_metric(kind: TaskKind) -> Result<Metric> {
    match kind {
        TaskKind::Classification { .. } => Ok(Metric::Accuracy),
        TaskKind::Tagging { .. } => Ok(Metric::MicroF1),
        TaskKind::MlmCorpus => Err(Error::Incompatible("a pretraining corpus has no task metric".into())),
    }
}

fn check_metric(metric: Metric, kind: TaskKind) -> Result<()> {
    let ok = match (metric, kind) {
        (_, TaskKind::MlmCorpus) => false,
        (Metric::MicroF1, TaskKind::Classification { .. }) => false,
        (Metric::Mcc, TaskKind::Tagging { .. }) => false,
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "metric {metric} does not apply to {kind:?} tasks"
        )))
    }
}

/// Logits for every scored item: one row per example for classification, one
/// row per tagged position for tagging.
#[derive(Clone, Debug, PartialEq)]
pub struct ItemLogits {
    pub num_labels: usize,
    pub logits: Vec<Vec<f32>>,
    pub gold: Vec<usize>,
}

impl ItemLogits {
    pub fn predictions(&self) -> Vec<usize> {
        self.logits.iter().map(|row| argmax(row)).collect()
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn batch_of(model: &Model, examples: &[&Example]) -> Result<Batch> {
    let seqs: Vec<&[u32]> = examples.iter().map(|e| e.ids.as_slice()).collect();
    Batch::new(&seqs, model.config.max_len)
}

fn num_labels(kind: TaskKind) -> Result<usize> {
    kind.num_labels()
        .ok_or_else(|| Error::Incompatible("a pretraining corpus has no labels".into()))
}

fn check_head(model: &Model, kind: TaskKind) -> Result<usize> {
    let k = num_labels(kind)?;
    if !model.has_classifier() {
        return Err(Error::Incompatible("model has no task classifier".into()));
    }
    if model.config.num_labels != k {
        return Err(Error::Incompatible(format!(
            "model predicts {} labels, task has {k}",
            model.config.num_labels
        )));
    }
    Ok(k)
}

/// Padded per-position tag targets for a batch.
fn tag_targets(examples: &[&Example], batch: &Batch) -> Vec<usize> {
    let mut labels = vec![IGNORE_INDEX; batch.batch * batch.seq_len];
    for (b, ex) in examples.iter().enumerate() {
        if let Target::Tags(tags) = &ex.target {
            for (t, &tag) in tags.iter().take(batch.lengths[b]).enumerate() {
                labels[b * batch.seq_len + t] = tag;
            }
        }
    }
    labels
}

pub fn item_logits(model: &Model, examples: &[Example], kind: TaskKind) -> Result<ItemLogits> {
    let k = check_head(model, kind)?;
    let mut out = ItemLogits {
        num_labels: k,
        logits: Vec::new(),
        gold: Vec::new(),
    };
    let refs: Vec<&Example> = examples.iter().collect();
    for chunk in refs.chunks(EVAL_BATCH) {
        let batch = batch_of(model, chunk)?;
        let mut g = Graph::new();
        let w = model.bind(&mut g)?;
        match kind {
            TaskKind::Classification { .. } => {
                let logits = classify_sequence(&mut g, &w, &model.config, &batch)?;
                let data = g.value(logits).data();
                for (b, ex) in chunk.iter().enumerate() {
                    out.logits.push(data[b * k..(b + 1) * k].to_vec());
                    out.gold.push(
                        ex.class()
                            .ok_or_else(|| Error::Incompatible("example without a class label".into()))?,
                    );
                }
            }
            TaskKind::Tagging { .. } => {
                let logits = tag_tokens(&mut g, &w, &model.config, &batch)?;
                let data = g.value(logits).data();
                let targets = tag_targets(chunk, &batch);
                for (i, &tag) in targets.iter().enumerate() {
                    if tag != IGNORE_INDEX {
                        out.logits.push(data[i * k..(i + 1) * k].to_vec());
                        out.gold.push(tag);
                    }
                }
            }
            TaskKind::MlmCorpus => unreachable!("rejected by check_head"),
        }
    }
    Ok(out)
}

/// Scores `model` on `examples`. The examples may come from a different task
/// than the model was trained on as long as the label spaces agree.
pub fn evaluate(model: &Model, examples: &[Example], kind: TaskKind, metric: Metric) -> Result<f64> {
    check_metric(metric, kind)?;
    let items = item_logits(model, examples, kind)?;
    Ok(metric.compute(&items.predictions(), &items.gold, items.num_labels))
}

/// Mean per-item cross-entropy of `model` on `examples`.
pub fn mean_loss(model: &Model, examples: &[Example], kind: TaskKind) -> Result<f64> {
    check_head(model, kind)?;
    let refs: Vec<&Example> = examples.iter().collect();
    let (mut sum, mut count) = (0.0f64, 0usize);
    for chunk in refs.chunks(EVAL_BATCH) {
        let mut g = Graph::new();
        let w = model.bind(&mut g)?;
        let n = match kind {
            TaskKind::Tagging { .. } => {
                let batch = batch_of(model, chunk)?;
                tag_targets(chunk, &batch)
                    .iter()
                    .filter(|&&t| t != IGNORE_INDEX)
                    .count()
            }
            _ => chunk.len(),
        };
        let loss = task_loss(&mut g, &w, model, chunk, kind)?;
        sum += f64::from(g.value(loss).item()) * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(Error::Undefined("no scored items".into()));
    }
    Ok(sum / count as f64)
}

/// Mean masked-token loss and accuracy under a fixed corruption.
pub fn mlm_eval(model: &Model, examples: &[Example], seed: u64) -> Result<(f64, f64)> {
    let vocab = Vocab::new(model.config.vocab_size)?;
    let (mut loss_sum, mut correct, mut count) = (0.0f64, 0usize, 0usize);
    for (i, chunk) in examples.chunks(EVAL_BATCH).enumerate() {
        let seqs: Vec<Vec<u32>> = chunk.iter().map(|e| e.ids.clone()).collect();
        let (inputs, targets) = mlm_corrupt(&seqs, vocab, mix(seed, i as u64));
        let mut g = Graph::new();
        let w = model.bind(&mut g)?;
        let (logits, labels) = mlm_forward(&mut g, &w, model, &inputs, &targets)?;
        let n = labels.iter().filter(|&&l| l != IGNORE_INDEX).count();
        if n == 0 {
            continue;
        }
        let loss = g.cross_entropy(logits, &labels)?;
        loss_sum += f64::from(g.value(loss).item()) * n as f64;
        let v = model.config.vocab_size;
        let data = g.value(logits).data();
        for (r, &l) in labels.iter().enumerate() {
            if l != IGNORE_INDEX && argmax(&data[r * v..(r + 1) * v]) == l {
                correct += 1;
            }
        }
        count += n;
    }
    if count == 0 {
        return Err(Error::Undefined("no masked positions to score".into()));
    }
    Ok((loss_sum / count as f64, correct as f64 / count as f64))
}

fn mlm_forward(
    g: &mut Graph,
    w: &Bound,
    model: &Model,
    inputs: &[Vec<u32>],
    targets: &[Vec<usize>],
) -> Result<(Var, Vec<usize>)> {
    let seqs: Vec<&[u32]> = inputs.iter().map(Vec::as_slice).collect();
    let batch = Batch::new(&seqs, model.config.max_len)?;
    let logits = mlm_logits(g, w, &model.config, &batch)?;
    let v = model.config.vocab_size;
    let logits = g.reshape(logits, &[batch.batch * batch.seq_len, v])?;
    let mut labels = vec![IGNORE_INDEX; batch.batch * batch.seq_len];
    for (b, tgt) in targets.iter().enumerate() {
        for (t, &l) in tgt.iter().take(batch.lengths[b]).enumerate() {
            labels[b * batch.seq_len + t] = l;
        }
    }
    Ok((logits, labels))
}

/// Training loss of one batch on the graph.
pub fn task_loss(g: &mut Graph, w: &Bound, model: &Model, examples: &[&Example], kind: TaskKind) -> Result<Var> {
    let batch = batch_of(model, examples)?;
    match kind {
        TaskKind::Classification { .. } => {
            let logits = classify_sequence(g, w, &model.config, &batch)?;
            let labels: Vec<usize> = examples
                .iter()
                .map(|e| {
                    e.class()
                        .ok_or_else(|| Error::Incompatible("example without a class label".into()))
                })
                .collect::<Result<_>>()?;
            g.cross_entropy(logits, &labels)
        }
        TaskKind::Tagging { num_labels } => {
            let logits = tag_tokens(g, w, &model.config, &batch)?;
            let logits = g.reshape(logits, &[batch.batch * batch.seq_len, num_labels])?;
            g.cross_entropy(logits, &tag_targets(examples, &batch))
        }
        TaskKind::MlmCorpus => Err(Error::Incompatible("use pretraining for a corpus".into())),
    }
}

// ------------------------------------------------------------------ training

/// SplitMix-style combination of a seed with a counter.
pub fn mix(seed: u64, n: u64) -> u64 {
    let mut z = seed ^ n.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

struct Objective<'a> {
    name: String,
    higher_is_better: bool,
    dev: Box<dyn Fn(&Model) -> Result<f64> + 'a>,
}

impl Objective<'_> {
    fn improves(&self, new: f64, old: f64) -> bool {
        if self.higher_is_better {
            new > old
        } else {
            new < old
        }
    }
}

/// Shared epoch loop: seeded reshuffle, Adam on the trainable set, early
/// stopping on the dev objective, best-epoch weights restored at the end.
fn fit(
    model: &mut Model,
    train: &[Example],
    cfg: &TrainConfig,
    objective: Objective<'_>,
    mut batch_loss: impl FnMut(&mut Graph, &Bound, &Model, &[&Example], u64) -> Result<Var>,
) -> Result<RunResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let trainable = model.params.trainable_names();
    let mut adam = Adam::new();
    let lr = cfg.lr as f32;

    let initial = (objective.dev)(model)?;
    let mut best: Option<(usize, f64, Vec<(String, crate::tensor::Tensor)>)> = None;
    let mut epochs = Vec::new();
    let mut stale = 0;
    let mut early_stopped = false;
    let mut step: u64 = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let examples: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::new();
            let w = model.bind(&mut g)?;
            let loss = batch_loss(&mut g, &w, model, &examples, step)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            g.backward(loss)?;
            model.params.accumulate_grads(&g, &w.leaves)?;
            adam.step(&mut model.params, lr)?;
            model.params.zero_grads();
            loss_sum += f64::from(value);
            batches += 1;
            step += 1;
        }
        let dev = (objective.dev)(model)?;
        epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / batches as f64,
            dev_metric: dev,
        });
        let improved = match &best {
            None => true,
            Some((_, b, _)) => objective.improves(dev, *b),
        };
        if improved {
            best = Some((epoch, dev, model.params.snapshot(&trainable)?));
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                early_stopped = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    let (best_epoch, _, snapshot) = best.expect("at least one epoch");
    model.params.restore(&snapshot)?;
    Ok(RunResult {
        regime: cfg.regime,
        lr: cfg.lr,
        seed: cfg.seed,
        metric: objective.name,
        higher_is_better: objective.higher_is_better,
        initial_dev_metric: initial,
        epochs,
        best_epoch,
        early_stopped,
        test_metric: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        mask_sparsities: Vec::new(),
        extra: Vec::new(),
        truncated: 0,
    })
}

/// Seed of the fixed dev-set corruption used to compare pretraining epochs.
fn dev_corruption_seed(seed: u64) -> u64 {
    mix(seed, u64::MAX)
}

/// Trains a fresh encoder with an MLM head on `corpus`.
pub fn pretrain(arch: &TransformerConfig, corpus: &TaskDataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    if corpus.kind != TaskKind::MlmCorpus {
        return Err(Error::Incompatible("pretraining needs an MLM corpus".into()));
    }
    if corpus.vocab_size > arch.vocab_size {
        return Err(Error::Incompatible(format!(
            "corpus vocabulary {} exceeds model vocabulary {}",
            corpus.vocab_size, arch.vocab_size
        )));
    }
    let mut model = Model::init(arch.clone(), cfg.seed)?;
    model.attach_mlm_head(cfg.seed);
    let vocab = Vocab::new(arch.vocab_size)?;
    let dev_seed = dev_corruption_seed(cfg.seed);
    let objective = Objective {
        name: "mlm-loss".into(),
        higher_is_better: false,
        dev: Box::new(|m: &Model| mlm_eval(m, &corpus.dev, dev_seed).map(|(l, _)| l)),
    };
    let seed = cfg.seed;
    let mut result = fit(&mut model, &corpus.train, cfg, objective, |g, w, m, exs, step| {
        let seqs: Vec<Vec<u32>> = exs.iter().map(|e| e.ids.clone()).collect();
        let (inputs, targets) = mlm_corrupt(&seqs, vocab, mix(seed, step));
        let (logits, labels) = mlm_forward(g, w, m, &inputs, &targets)?;
        g.cross_entropy(logits, &labels)
    })?;
    let (_, acc) = mlm_eval(&model, &corpus.dev, dev_seed)?;
    result.extra.push(("dev_mlm_accuracy".into(), acc));
    if !corpus.test.is_empty() {
        result.test_metric = Some(mlm_eval(&model, &corpus.test, dev_seed)?.0);
    }
    result.truncated = corpus.truncated;
    Ok((model, result))
}

fn task_model(pretrained: &Model, task: &TaskDataset, seed: u64) -> Result<Model> {
    if pretrained.is_masked() {
        return Err(Error::Incompatible(
            "start from an unmasked pretrained checkpoint".into(),
        ));
    }
    if task.vocab_size > pretrained.config.vocab_size {
        return Err(Error::Incompatible(format!(
            "task vocabulary {} exceeds model vocabulary {}",
            task.vocab_size, pretrained.config.vocab_size
        )));
    }
    let mut model = pretrained.clone();
    model.drop_mlm_head();
    model.attach_classifier(num_labels(task.kind)?, seed)?;
    Ok(model)
}

fn run_task(mut model: Model, task: &TaskDataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    let metric = match cfg.metric {
        Some(m) => m,
        None => default_metric(task.kind)?,
    };
    check_metric(metric, task.kind)?;
    let kind = task.kind;
    let objective = Objective {
        name: metric.to_string(),
        higher_is_better: metric.higher_is_better(),
        dev: Box::new(move |m: &Model| evaluate(m, &task.dev, kind, metric)),
    };
    let mut result = fit(&mut model, &task.train, cfg, objective, |g, w, m, exs, _| {
        task_loss(g, w, m, exs, kind)
    })?;
    if !task.test.is_empty() {
        result.test_metric = Some(evaluate(&model, &task.test, kind, metric)?);
    }
    result.truncated = task.truncated;
    Ok((model, result))
}

/// Full finetuning: fresh classifier, every parameter trainable.
pub fn finetune(pretrained: &Model, task: &TaskDataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    let mut model = task_model(pretrained, task, cfg.seed)?;
    model.params.set_all_trainable(true);
    let cfg = TrainConfig {
        regime: Regime::Finetune,
        ..cfg.clone()
    };
    run_task(model, task, &cfg)
}

/// Mask training: the pretrained weights and a fresh random classifier are
/// frozen; only the planned mask scores are learned.
pub fn train_masks(pretrained: &Model, task: &TaskDataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    let mut model = task_model(pretrained, task, cfg.seed)?;
    let plan = cfg.plan_for(&model.config);
    model.apply_mask_plan(&plan, &cfg.masking)?;
    let cfg = TrainConfig {
        regime: Regime::Mask,
        ..cfg.clone()
    };
    let (model, mut result) = run_task(model, task, &cfg)?;
    result.mask_sparsities = model.mask_sparsities()?;
    Ok((model, result))
}

/// Trains a task model in the configured regime.
pub fn train_task(pretrained: &Model, task: &TaskDataset, cfg: &TrainConfig) -> Result<(Model, RunResult)> {
    match cfg.regime {
        Regime::Finetune => finetune(pretrained, task, cfg),
        Regime::Mask => train_masks(pretrained, task, cfg),
        Regime::Pretrain => Err(Error::Config("use pretrain() for the pretraining regime".into())),
    }
}

/// Grid search over learning rates with one fixed-seed run per value. Returns
/// the table and every run keyed by its learning rate.
pub fn grid_search(
    pretrained: &Model,
    task: &TaskDataset,
    base: &TrainConfig,
    grid: &[f64],
    max_extensions: usize,
) -> Result<(GridResult, Vec<(f64, RunResult)>)> {
    let mut runs = Vec::new();
    let mut sign = 1.0;
    let result = lr_grid_search(grid, max_extensions, |lr| {
        let cfg = TrainConfig { lr, ..base.clone() };
        let (_, r) = train_task(pretrained, task, &cfg)?;
        sign = if r.higher_is_better { 1.0 } else { -1.0 };
        let score = sign * r.best_dev_metric();
        runs.push((lr, r));
        Ok(score)
    })?;
    runs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let result = GridResult {
        best_metric: sign * result.best_metric,
        table: result.table.into_iter().map(|(lr, m)| (lr, sign * m)).collect(),
        ..result
    };
    Ok((result, runs))
}

/// Majority-class dev accuracy (the trivial baseline).
pub fn majority_baseline(examples: &[Example]) -> f64 {
    let mut counts = std::collections::BTreeMap::new();
    for ex in examples {
        if let Some(c) = ex.class() {
            *counts.entry(c).or_insert(0usize) += 1;
        }
    }
    let total: usize = counts.values().sum();
    if total == 0 {
        return 0.0;
    }
    *counts.values().max().expect("non-empty") as f64 / total as f64
}
