//! Binary artifact formats and text reports.

mod bytes;
mod checkpoint;
mod maskfile;
mod report;

pub use bytes::write_atomic;
pub use checkpoint::{load_model, save_model, Checkpoint, CheckpointMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use maskfile::{mask_payload_bytes, MaskFile, MaskMeta, MASK_MAGIC, MASK_VERSION};
pub use report::{Report, Table};

use crate::training::RunResult;

/// Standard report body for a training run.
pub fn run_report(title: &str, r: &RunResult) -> Report {
    let mut rep = Report::new(title);
    rep.set("regime", r.regime)
        .set("lr", r.lr)
        .set("seed", r.seed)
        .set("lr_schedule", "constant")
        .set("metric", &r.metric)
        .set("initial_dev_metric", r.initial_dev_metric)
        .set("best_epoch", r.best_epoch)
        .set("best_dev_metric", r.best_dev_metric())
        .set("epochs_run", r.epochs.len())
        .set("early_stopped", r.early_stopped)
        .set("truncated_sequences", r.truncated);
    if let Some(t) = r.test_metric {
        rep.set("test_metric", t);
    }
    if let Some(s) = r.mean_sparsity() {
        rep.set("mean_mask_sparsity", s);
    }
    for (k, v) in &r.extra {
        rep.set(k, v);
    }
    let mut epochs = crate::persist::Table::new("epochs", &["epoch", "train_loss", "dev_metric"]);
    for e in &r.epochs {
        epochs.row(vec![
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.dev_metric.to_string(),
        ]);
    }
    rep.add_table(epochs);
    if !r.mask_sparsities.is_empty() {
        let mut t = Table::new("mask_sparsity", &["layer", "sparsity"]);
        for (l, s) in &r.mask_sparsities {
            t.row(vec![l.clone(), s.to_string()]);
        }
        rep.add_table(t);
    }
    rep
}
