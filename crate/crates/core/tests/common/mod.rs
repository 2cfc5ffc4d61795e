#![allow(dead_code)]

use masklm::data::{gen_classification_task, Language, SplitSizes, TaskDataset, Variant, Vocab};
use masklm::masking::MaskingConfig;
use masklm::model::{MaskPlan, Model, TransformerConfig};
use masklm::training::{Regime, TrainConfig};

pub fn tiny_arch() -> TransformerConfig {
    TransformerConfig {
        num_blocks: 2,
        hidden: 16,
        ffn: 32,
        heads: 2,
        vocab_size: 64,
        max_len: 16,
        num_labels: 2,
        segment_types: 0,
    }
}

pub fn tiny_pretrained() -> Model {
    Model::init(tiny_arch(), 5).unwrap()
}

pub fn tiny_task() -> TaskDataset {
    let lang = Language::new(Vocab::new(64).unwrap(), 1);
    let sizes = SplitSizes {
        train: 48,
        dev: 24,
        test: 24,
    };
    gen_classification_task(&lang, 3, 2, sizes, 8, Variant::A).unwrap()
}

pub fn mask_config(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        regime: Regime::Mask,
        lr: 1e-2,
        batch_size: 8,
        max_epochs: epochs,
        patience: 0,
        seed,
        metric: None,
        masking: MaskingConfig {
            seed,
            ..MaskingConfig::default()
        },
        plan: Some(MaskPlan::all(2)),
    }
}
