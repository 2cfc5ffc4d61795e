//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export returns a flat `Float64Array`; the layouts are documented per
//! function.

use masklm::analysis::{bernstein_weights, memory_report, TaskSpec};
use masklm::masking::{binarize, init_scores, MaskingConfig};
use masklm::model::{MaskPlan, TransformerConfig};
use wasm_bindgen::prelude::*;

fn js_err(e: masklm::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Draws initial scores for a `rows × cols` layer and binarizes them.
///
/// Layout: `[realized_sparsity, min, max, count_0, .., count_{bins-1}]`, the
/// histogram spanning `[min, max]` of the drawn scores.
#[wasm_bindgen]
pub fn score_histogram(
    rows: usize,
    cols: usize,
    init_sparsity: f64,
    halfwidth: f32,
    tau: f32,
    seed: u64,
    bins: usize,
) -> Result<Vec<f64>, JsError> {
    let cfg = MaskingConfig {
        tau,
        init_sparsity,
        init_halfwidth: halfwidth,
        seed,
    };
    let scores = init_scores(&[rows, cols], &cfg, 0).map_err(js_err)?;
    let mask = binarize(&scores, tau).map_err(js_err)?;
    let bins = bins.max(1);
    let (lo, hi) = scores
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let width = f64::from(hi - lo).max(f64::MIN_POSITIVE);
    let mut counts = vec![0.0; bins];
    for &v in scores.data() {
        let b = ((f64::from(v - lo) / width) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1.0;
    }
    let mut out = vec![mask.sparsity(), f64::from(lo), f64::from(hi)];
    out.extend(counts);
    Ok(out)
}

fn arch_named(name: &str) -> Result<TransformerConfig, JsError> {
    match name {
        "bert-base" => Ok(TransformerConfig::bert_base()),
        "toy" => Ok(TransformerConfig::default()),
        other => Err(JsError::new(&format!("unknown architecture `{other}`"))),
    }
}

/// Cumulative storage in kilobytes after each of `tasks` tasks with
/// `num_labels` classes each.
///
/// Layout: `[finetune_1, mask_1, finetune_2, mask_2, ..]`.
#[wasm_bindgen]
pub fn memory_curve(arch: &str, plan: &str, tasks: usize, num_labels: usize) -> Result<Vec<f64>, JsError> {
    let arch = arch_named(arch)?;
    let plan = MaskPlan::parse(plan, arch.num_blocks).map_err(js_err)?;
    let specs: Vec<TaskSpec> = (0..tasks)
        .map(|i| TaskSpec::new(&format!("t{i}"), num_labels))
        .collect();
    let report = memory_report(&arch, &plan, &specs);
    Ok(report
        .rows
        .iter()
        .flat_map(|r| {
            [
                r.cumulative_finetune_bits as f64 / 8000.0,
                r.cumulative_mask_bits as f64 / 8000.0,
            ]
        })
        .collect())
}

/// Bernstein weights of a curve with `bends` interior control points, sampled
/// at `samples` evenly spaced positions.
///
/// Layout: row-major `samples × (bends + 2)`.
#[wasm_bindgen]
pub fn curve_weights(bends: usize, samples: usize) -> Vec<f64> {
    let samples = samples.max(2);
    (0..samples)
        .flat_map(|i| bernstein_weights(bends, i as f64 / (samples - 1) as f64))
        .collect()
}
