mod common;

use masklm::masking::init_scores;
use masklm::model::{scores_name, MaskPlan};
use masklm::training::{finetune, train_masks, Regime, TrainConfig};

use common::*;

#[test]
fn mask_training_leaves_pretrained_tensors_untouched() {
    let pre = tiny_pretrained();
    let task = tiny_task();
    let mut cfg = mask_config(2, 3);
    cfg.plan = Some(MaskPlan::parse("1", 2).unwrap());
    let plan = cfg.plan_for(&pre.config);
    let (model, result) = train_masks(&pre, &task, &cfg).unwrap();
    assert_eq!(result.epochs.len(), 3);

    for (name, p) in pre.params.iter().filter(|(n, _)| !n.starts_with("mlm.")) {
        assert_eq!(model.params.value(name).unwrap().bits(), p.value.bits(), "{name} moved");
    }
    let mut expected: Vec<String> = plan
        .layers(&pre.config)
        .into_iter()
        .map(|(l, _)| scores_name(&l))
        .collect();
    expected.sort();
    let mut trainable = model.params.trainable_names();
    trainable.sort();
    assert_eq!(trainable, expected);
    // the scores did move away from their initialization
    let moved = plan.layers(&pre.config).iter().any(|(layer, stream)| {
        let trained = model.params.value(&scores_name(layer)).unwrap();
        init_scores(trained.shape(), &cfg.masking, *stream).unwrap().bits() != trained.bits()
    });
    assert!(moved);
}

#[test]
fn finetuning_trains_every_tensor() {
    let pre = tiny_pretrained();
    let task = tiny_task();
    let cfg = TrainConfig {
        regime: Regime::Finetune,
        lr: 1e-3,
        batch_size: 8,
        max_epochs: 1,
        patience: 0,
        ..TrainConfig::default()
    };
    let (model, _) = finetune(&pre, &task, &cfg).unwrap();
    assert!(!model.is_masked());
    assert_eq!(model.params.trainable_names().len(), model.params.len());
    let changed = pre
        .params
        .iter()
        .filter(|(n, p)| {
            model
                .params
                .value(n)
                .map(|v| v.bits() != p.value.bits())
                .unwrap_or(false)
        })
        .count();
    assert!(changed > 0);
}

#[test]
fn training_is_deterministic() {
    let pre = tiny_pretrained();
    let task = tiny_task();
    let cfg = mask_config(3, 2);
    let (a, ra) = train_masks(&pre, &task, &cfg).unwrap();
    let (b, rb) = train_masks(&pre, &task, &cfg).unwrap();
    assert_eq!(ra.epochs, rb.epochs);
    for (name, p) in a.params.iter() {
        assert_eq!(p.value.bits(), b.params.value(name).unwrap().bits(), "{name}");
    }
}
