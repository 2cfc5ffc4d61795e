//! Evaluation metrics over predicted and gold class indices.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Accuracy,
    ErrorRate,
    /// Matthews correlation coefficient (multi-class form for k > 2).
    Mcc,
    /// Token-level micro-F1 with tag 0 treated as "outside".
    MicroF1,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::ErrorRate)
    }

    pub fn compute(self, pred: &[usize], gold: &[usize], num_labels: usize) -> f64 {
        match self {
            Metric::Accuracy => accuracy(pred, gold),
            Metric::ErrorRate => 1.0 - accuracy(pred, gold),
            Metric::Mcc => mcc(pred, gold, num_labels),
            Metric::MicroF1 => micro_f1(pred, gold, Some(0)),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Accuracy => "accuracy",
            Metric::ErrorRate => "error-rate",
            Metric::Mcc => "mcc",
            Metric::MicroF1 => "micro-f1",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "accuracy" | "acc" => Ok(Metric::Accuracy),
            "error-rate" | "error" => Ok(Metric::ErrorRate),
            "mcc" => Ok(Metric::Mcc),
            "micro-f1" | "f1" => Ok(Metric::MicroF1),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> f64 {
    assert_eq!(pred.len(), gold.len());
    if gold.is_empty() {
        return 0.0;
    }
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    correct as f64 / gold.len() as f64
}

/// `k × k` counts, rows = gold, columns = predicted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(pred: &[usize], gold: &[usize], k: usize) -> Self {
        let mut counts = vec![0; k * k];
        for (&p, &g) in pred.iter().zip(gold) {
            counts[g * k + p] += 1;
        }
        ConfusionMatrix { k, counts }
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.k + pred]
    }

    /// Gorodkin's multi-class MCC; equals the binary formula for k = 2 and is
    /// 0 when the denominator vanishes.
    pub fn mcc(&self) -> f64 {
        let k = self.k;
        let s: f64 = self.counts.iter().sum::<u64>() as f64;
        let c: f64 = (0..k).map(|i| self.get(i, i)).sum::<u64>() as f64;
        let t: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.get(i, j)).sum::<u64>() as f64)
            .collect();
        let p: Vec<f64> = (0..k)
            .map(|j| (0..k).map(|i| self.get(i, j)).sum::<u64>() as f64)
            .collect();
        let tp: f64 = t.iter().zip(&p).map(|(a, b)| a * b).sum();
        let pp: f64 = p.iter().map(|x| x * x).sum();
        let tt: f64 = t.iter().map(|x| x * x).sum();
        let denom = ((s * s - pp) * (s * s - tt)).sqrt();
        if denom == 0.0 {
            0.0
        } else {
            (c * s - tp) / denom
        }
    }
}

pub fn mcc(pred: &[usize], gold: &[usize], num_labels: usize) -> f64 {
    let k = num_labels
        .max(pred.iter().copied().max().map_or(0, |m| m + 1))
        .max(gold.iter().copied().max().map_or(0, |m| m + 1));
    ConfusionMatrix::new(pred, gold, k).mcc()
}

/// Micro-averaged F1 over all classes except `outside`. With nothing to score
/// (no non-outside gold or predicted items) it is 1.0.
pub fn micro_f1(pred: &[usize], gold: &[usize], outside: Option<usize>) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.iter().zip(gold) {
        let p_in = Some(p) != outside;
        let g_in = Some(g) != outside;
        if p == g {
            if g_in {
                tp += 1;
            }
        } else {
            if p_in {
                fp += 1;
            }
            if g_in {
                fn_ += 1;
            }
        }
    }
    if tp + fp + fn_ == 0 {
        return 1.0;
    }
    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
}
