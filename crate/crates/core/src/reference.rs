//! The desk-scale reference setup: a fixed synthetic language, its MLM
//! corpus, the pretrained toy encoder and the reference classification task.

use crate::data::{gen_classification_task, gen_corpus, Language, SplitSizes, TaskDataset, Variant, Vocab};
use crate::error::Result;
use crate::model::{Model, TransformerConfig};
use crate::training::{pretrain, Regime, RunResult, TrainConfig};

pub const LANGUAGE_SEED: u64 = 7;
pub const CORPUS_SEED: u64 = 1;
pub const CORPUS_SIZES: SplitSizes = SplitSizes {
    train: 2000,
    dev: 200,
    test: 200,
};
pub const CORPUS_LEN: usize = 12;

pub const TASK_SEED: u64 = 2;
pub const TASK_LABELS: usize = 4;
pub const TASK_LEN: usize = 16;
pub const TASK_SIZES: SplitSizes = SplitSizes {
    train: 400,
    dev: 200,
    test: 200,
};

/// File name of the shipped pretrained checkpoint (under `assets/`).
pub const PRETRAINED_FILE: &str = "reference-pretrained.mwck";

pub fn arch() -> TransformerConfig {
    TransformerConfig::default()
}

pub fn language() -> Language {
    Language::new(
        Vocab::new(arch().vocab_size).expect("reference vocabulary"),
        LANGUAGE_SEED,
    )
}

pub fn corpus() -> TaskDataset {
    gen_corpus(&language(), CORPUS_SEED, CORPUS_SIZES, CORPUS_LEN)
}

/// The reference task; variant B uses the twin trigger tokens and serves as a
/// related second task.
pub fn task(variant: Variant) -> TaskDataset {
    gen_classification_task(&language(), TASK_SEED, TASK_LABELS, TASK_SIZES, TASK_LEN, variant)
        .expect("reference task parameters are valid")
}

pub fn pretrain_config() -> TrainConfig {
    TrainConfig {
        regime: Regime::Pretrain,
        lr: 1e-3,
        batch_size: 32,
        max_epochs: 30,
        patience: 2,
        seed: 0,
        ..TrainConfig::default()
    }
}

/// Recreates the shipped checkpoint from scratch.
pub fn pretrained() -> Result<(Model, RunResult)> {
    pretrain(&arch(), &corpus(), &pretrain_config())
}
