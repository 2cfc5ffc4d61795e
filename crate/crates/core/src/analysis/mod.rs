//! Diagnostics over trained artifacts: mask dissimilarity, memory
//! accounting, ensembles, embedding dumps and mode connectivity.

mod connect;
mod memory;

use std::fmt;
use std::str::FromStr;

pub use connect::{
    bernstein_weights, check_manifest, eval_path, interpolate_linear, train_bezier, BezierCurve, CurveTrainConfig,
    PathPoint,
};
pub use memory::{format_kb, memory_report, MemoryReport, MemoryRow, TaskSpec};

use crate::data::{Example, TaskKind};
use crate::error::{Error, Result};
use crate::masking::BinaryMask;
use crate::model::{cls_embedding, Batch, Model};
use crate::tensor::Graph;
use crate::training::{argmax, item_logits, EVAL_BATCH};

/// `‖tr1 − tr2‖₁ / (‖tr1 − init1‖₁ + ‖tr2 − init2‖₁)` over binary masks.
pub fn dissimilarity_s(init1: &BinaryMask, tr1: &BinaryMask, init2: &BinaryMask, tr2: &BinaryMask) -> Result<f64> {
    let (num, den) = dissimilarity_parts(init1, tr1, init2, tr2)?;
    if den == 0 {
        return Err(Error::Undefined("neither mask changed during training".into()));
    }
    Ok(num as f64 / den as f64)
}

fn dissimilarity_parts(
    init1: &BinaryMask,
    tr1: &BinaryMask,
    init2: &BinaryMask,
    tr2: &BinaryMask,
) -> Result<(usize, usize)> {
    let num = tr1.l1_distance(tr2)?;
    let den = tr1.l1_distance(init1)? + tr2.l1_distance(init2)?;
    Ok((num, den))
}

/// Per-layer and pooled dissimilarity between two mask sets.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskSetDiff {
    /// `None` where neither run changed the layer.
    pub layers: Vec<(String, Option<f64>)>,
    /// Ratio of summed numerators to summed denominators.
    pub overall: f64,
}

type MaskSet = [(String, BinaryMask)];

fn lookup<'a>(set: &'a MaskSet, name: &str, what: &str) -> Result<&'a BinaryMask> {
    set.iter()
        .find(|(n, _)| n == name)
        .map(|(_, m)| m)
        .ok_or_else(|| Error::Incompatible(format!("{what} has no mask for `{name}`")))
}

pub fn mask_set_diff(init1: &MaskSet, tr1: &MaskSet, init2: &MaskSet, tr2: &MaskSet) -> Result<MaskSetDiff> {
    let (mut num, mut den) = (0usize, 0usize);
    let mut layers = Vec::new();
    for (name, t1) in tr1 {
        let t2 = lookup(tr2, name, "second run")?;
        let i1 = lookup(init1, name, "first init")?;
        let i2 = lookup(init2, name, "second init")?;
        let (n, d) = dissimilarity_parts(i1, t1, i2, t2)?;
        layers.push((name.clone(), (d > 0).then(|| n as f64 / d as f64)));
        num += n;
        den += d;
    }
    if den == 0 {
        return Err(Error::Undefined("neither mask set changed during training".into()));
    }
    Ok(MaskSetDiff {
        layers,
        overall: num as f64 / den as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnsembleMode {
    Labels,
    Logits,
    Probs,
}

impl fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnsembleMode::Labels => "labels",
            EnsembleMode::Logits => "logits",
            EnsembleMode::Probs => "probs",
        })
    }
}

impl FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(EnsembleMode::Labels),
            "logits" => Ok(EnsembleMode::Logits),
            "probs" => Ok(EnsembleMode::Probs),
            other => Err(Error::Config(format!("unknown ensemble mode `{other}`"))),
        }
    }
}

fn softmax64(row: &[f32]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(f64::from(x)));
    let exps: Vec<f64> = row.iter().map(|&x| (f64::from(x) - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn argmax64(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Combines per-member logits `members[m][item][class]`.
pub fn ensemble_predict(members: &[Vec<Vec<f32>>], mode: EnsembleMode) -> Result<Vec<usize>> {
    if members.len() < 2 {
        return Err(Error::Config(format!(
            "an ensemble needs at least 2 members, got {}",
            members.len()
        )));
    }
    let items = members[0].len();
    let k = members[0].first().map_or(0, Vec::len);
    for (m, member) in members.iter().enumerate() {
        if member.len() != items {
            return Err(Error::Incompatible(format!(
                "member {m} scored {} items, member 0 scored {items}",
                member.len()
            )));
        }
        if let Some(row) = member.iter().find(|r| r.len() != k) {
            return Err(Error::Incompatible(format!(
                "member {m} has {} outputs, member 0 has {k}",
                row.len()
            )));
        }
    }
    let out = (0..items)
        .map(|i| match mode {
            EnsembleMode::Labels => {
                let mut votes = vec![0usize; k];
                for member in members {
                    votes[argmax(&member[i])] += 1;
                }
                let mut best = 0;
                for (c, &v) in votes.iter().enumerate() {
                    if v > votes[best] {
                        best = c;
                    }
                }
                best
            }
            EnsembleMode::Logits | EnsembleMode::Probs => {
                let mut acc = vec![0.0f64; k];
                for member in members {
                    let row: Vec<f64> = match mode {
                        EnsembleMode::Probs => softmax64(&member[i]),
                        _ => member[i].iter().map(|&x| f64::from(x)).collect(),
                    };
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += x;
                    }
                }
                for a in &mut acc {
                    *a /= members.len() as f64;
                }
                argmax64(&acc)
            }
        })
        .collect();
    Ok(out)
}

/// Ensemble predictions of several task models plus the gold labels.
pub fn ensemble_models(
    models: &[Model],
    examples: &[Example],
    kind: TaskKind,
    mode: EnsembleMode,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut members = Vec::with_capacity(models.len());
    let mut gold = None;
    for m in models {
        let items = item_logits(m, examples, kind)?;
        gold.get_or_insert(items.gold);
        members.push(items.logits);
    }
    let pred = ensemble_predict(&members, mode)?;
    Ok((pred, gold.unwrap_or_default()))
}

/// One line per example: the class label (or `-`) and the `d` floats of the
/// topmost position-0 vector, tab-separated.
pub fn dump_cls_embeddings(model: &Model, examples: &[Example]) -> Result<String> {
    let d = model.config.hidden;
    let mut out = String::new();
    for chunk in examples.chunks(EVAL_BATCH) {
        let seqs: Vec<&[u32]> = chunk.iter().map(|e| e.ids.as_slice()).collect();
        let batch = Batch::new(&seqs, model.config.max_len)?;
        let mut g = Graph::new();
        let w = model.bind(&mut g)?;
        let h = cls_embedding(&mut g, &w, &model.config, &batch)?;
        let data = g.value(h).data();
        for (b, ex) in chunk.iter().enumerate() {
            match ex.class() {
                Some(c) => out.push_str(&c.to_string()),
                None => out.push('-'),
            }
            for x in &data[b * d..(b + 1) * d] {
                out.push('\t');
                out.push_str(&x.to_string());
            }
            out.push('\n');
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(bits: &[u8]) -> BinaryMask {
        BinaryMask::new(1, bits.len(), bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn dissimilarity_hand_examples() {
        let init = m(&[0, 0, 0, 0]);
        assert_eq!(
            dissimilarity_s(&init, &m(&[1, 1, 0, 0]), &init, &m(&[1, 0, 1, 0])).unwrap(),
            0.5
        );
        let init = m(&[0, 0]);
        assert_eq!(dissimilarity_s(&init, &m(&[1, 0]), &init, &m(&[0, 1])).unwrap(), 1.0);
        let tr = m(&[1, 0, 1, 1]);
        assert_eq!(dissimilarity_s(&m(&[0; 4]), &tr, &m(&[0; 4]), &tr).unwrap(), 0.0);
    }

    #[test]
    fn unchanged_masks_are_undefined() {
        let a = m(&[1, 0, 1]);
        assert!(matches!(dissimilarity_s(&a, &a, &a, &a), Err(Error::Undefined(_))));
    }

    #[test]
    fn ensemble_votes_and_ties() {
        let one_hot = |c: usize| {
            let mut v = vec![0.0; 3];
            v[c] = 1.0;
            vec![v]
        };
        let members: Vec<_> = [1, 1, 2, 0].iter().map(|&c| one_hot(c)).collect();
        assert_eq!(ensemble_predict(&members, EnsembleMode::Labels).unwrap(), [1]);
        let members: Vec<_> = [0, 0, 1, 1].iter().map(|&c| one_hot(c)).collect();
        assert_eq!(ensemble_predict(&members, EnsembleMode::Labels).unwrap(), [0]);
    }

    #[test]
    fn ensemble_rejects_mismatched_members() {
        let a = vec![vec![0.0, 1.0]];
        let b = vec![vec![0.0, 1.0, 2.0]];
        assert!(ensemble_predict(&[a.clone(), b], EnsembleMode::Logits).is_err());
        assert!(ensemble_predict(&[a], EnsembleMode::Logits).is_err());
    }
}
