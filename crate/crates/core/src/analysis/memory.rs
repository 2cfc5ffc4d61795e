//! Storage accounting for serving many tasks: finetuning keeps a float copy
//! of the model per task, masking keeps one shared copy plus per-task bits.
//! A kilobyte is 1000 bytes; floats are 32 bits.

use std::collections::BTreeSet;

use crate::model::{MaskPlan, TransformerConfig};
use crate::persist::{Report, Table};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: String,
    pub num_labels: usize,
}

impl TaskSpec {
    pub fn new(name: &str, num_labels: usize) -> Self {
        TaskSpec {
            name: name.to_string(),
            num_labels,
        }
    }
}

/// Storage added by one task, and running totals (in bits).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryRow {
    pub task: String,
    pub num_labels: usize,
    pub classifier_floats: u64,
    /// Floats finetuning adds: the classifier, plus a full model after the first task.
    pub finetune_floats: u64,
    /// Floats masking adds: the classifier, unless one of the same size exists.
    pub mask_floats: u64,
    /// Encoder mask bits plus classifier mask bits.
    pub mask_bits: u64,
    pub cumulative_finetune_bits: u128,
    pub cumulative_mask_bits: u128,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryReport {
    pub pretrained_params: u64,
    pub encoder_mask_bits: u64,
    pub block_maskable: u64,
    pub rows: Vec<MemoryRow>,
}

/// Exact decimal kilobytes for a bit count (`bits / 8000`), without
/// trailing zeros.
pub fn format_kb(bits: u128) -> String {
    // 1 bit = 125 micro-kilobytes.
    let micro = bits * 125;
    let whole = micro / 1_000_000;
    let frac = micro % 1_000_000;
    if frac == 0 {
        return whole.to_string();
    }
    let frac = format!("{frac:06}");
    format!("{whole}.{}", frac.trim_end_matches('0'))
}

pub fn memory_report(arch: &TransformerConfig, plan: &MaskPlan, tasks: &[TaskSpec]) -> MemoryReport {
    let pretrained = arch.pretrained_param_count();
    let encoder_bits = plan.encoder_mask_bits(arch);
    let d = arch.hidden as u64;
    let mut seen = BTreeSet::new();
    let mut cum_ft = u128::from(pretrained) * 32;
    let mut cum_mask = cum_ft;
    let rows = tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let cls = d * t.num_labels as u64;
            let finetune_floats = cls + if i == 0 { 0 } else { pretrained };
            let mask_floats = if seen.insert(t.num_labels) { cls } else { 0 };
            let mask_bits = encoder_bits + if plan.classifier { cls } else { 0 };
            cum_ft += u128::from(finetune_floats) * 32;
            cum_mask += u128::from(mask_floats) * 32 + u128::from(mask_bits);
            MemoryRow {
                task: t.name.clone(),
                num_labels: t.num_labels,
                classifier_floats: cls,
                finetune_floats,
                mask_floats,
                mask_bits,
                cumulative_finetune_bits: cum_ft,
                cumulative_mask_bits: cum_mask,
            }
        })
        .collect();
    MemoryReport {
        pretrained_params: pretrained,
        encoder_mask_bits: encoder_bits,
        block_maskable: arch.block_maskable(),
        rows,
    }
}

impl MemoryReport {
    pub fn pretrained_kb(&self) -> String {
        format_kb(u128::from(self.pretrained_params) * 32)
    }

    pub fn encoder_mask_kb(&self) -> String {
        format_kb(u128::from(self.encoder_mask_bits))
    }

    pub fn to_report(&self) -> Report {
        let mut r = Report::new("memory");
        r.set("kilobyte_bytes", 1000)
            .set("float_bits", 32)
            .set("pretrained_params", self.pretrained_params)
            .set("pretrained_kb", self.pretrained_kb())
            .set("block_maskable_params", self.block_maskable)
            .set("encoder_mask_bits", self.encoder_mask_bits)
            .set("encoder_mask_kb", self.encoder_mask_kb());
        let mut t = Table::new(
            "tasks",
            &[
                "task",
                "num_labels",
                "finetune_floats",
                "finetune_kb",
                "mask_floats",
                "mask_float_kb",
                "mask_bits",
                "mask_bit_kb",
                "cumulative_finetune_kb",
                "cumulative_mask_kb",
            ],
        );
        for row in &self.rows {
            t.row(vec![
                row.task.clone(),
                row.num_labels.to_string(),
                row.finetune_floats.to_string(),
                format_kb(u128::from(row.finetune_floats) * 32),
                row.mask_floats.to_string(),
                format_kb(u128::from(row.mask_floats) * 32),
                row.mask_bits.to_string(),
                format_kb(u128::from(row.mask_bits)),
                format_kb(row.cumulative_finetune_bits),
                format_kb(row.cumulative_mask_bits),
            ]);
        }
        r.add_table(t);
        r
    }
}
