//! Paths between two task models: straight lines and Bézier curves with
//! trainable bends.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Example, TaskKind};
use crate::error::{Error, Result};
use crate::model::{Bound, Model};
use crate::params::ParamStore;
use crate::tensor::{Graph, Var};
use crate::training::{evaluate, mean_loss, task_loss, Adam, Metric};

/// Both endpoints must be dense and carry the same tensors.
pub fn check_manifest(a: &Model, b: &Model) -> Result<()> {
    if a.is_masked() || b.is_masked() {
        return Err(Error::Incompatible(
            "materialize masked endpoints before connecting them".into(),
        ));
    }
    let names_a: Vec<&str> = a.params.names().collect();
    let names_b: Vec<&str> = b.params.names().collect();
    if names_a != names_b {
        let missing = names_a
            .iter()
            .find(|n| !names_b.contains(n))
            .or_else(|| names_b.iter().find(|n| !names_a.contains(n)));
        return Err(Error::Incompatible(format!(
            "endpoint manifests differ (first difference: `{}`)",
            missing.unwrap_or(&"<order>")
        )));
    }
    for (name, p) in a.params.iter() {
        let q = b.params.value(name)?;
        if p.value.shape() != q.shape() {
            return Err(Error::shape("endpoint tensor", p.value.shape(), q.shape()));
        }
    }
    Ok(())
}

fn combine(stores: &[&ParamStore], weights: &[f64], template: &Model) -> Result<Model> {
    let mut out = template.clone();
    for (name, p) in out.params.iter_mut() {
        let mut acc = vec![0.0f64; p.value.len()];
        for (store, &w) in stores.iter().zip(weights) {
            for (a, &x) in acc.iter_mut().zip(store.value(name)?.data()) {
                *a += w * f64::from(x);
            }
        }
        for (dst, a) in p.value.data_mut().iter_mut().zip(acc) {
            *dst = a as f32;
        }
    }
    Ok(out)
}

/// `W(γ) = (1 − γ)·W0 + γ·W1` over every tensor, computed in f64.
pub fn interpolate_linear(w0: &Model, w1: &Model, gamma: f64) -> Result<Model> {
    check_manifest(w0, w1)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("γ must lie in [0, 1], got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(w0.clone());
    }
    if gamma == 1.0 {
        return Ok(w1.clone());
    }
    combine(&[&w0.params, &w1.params], &[1.0 - gamma, gamma], w0)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein weights of a curve with `bends` interior control points at `t`.
pub fn bernstein_weights(bends: usize, t: f64) -> Vec<f64> {
    let n = bends + 1;
    (0..=n)
        .map(|i| binomial(n, i) * (1.0 - t).powi((n - i) as i32) * t.powi(i as i32))
        .collect()
}

#[derive(Clone, Debug)]
pub struct BezierCurve {
    pub start: Model,
    pub end: Model,
    pub bends: Vec<ParamStore>,
}

impl BezierCurve {
    /// Bends evenly spaced on the segment, which traces the straight line.
    pub fn straight(start: Model, end: Model, bends: usize) -> Result<Self> {
        check_manifest(&start, &end)?;
        let bends = (1..=bends)
            .map(|j| Ok(interpolate_linear(&start, &end, j as f64 / (bends + 1) as f64)?.params))
            .collect::<Result<_>>()?;
        Ok(BezierCurve { start, end, bends })
    }

    pub fn degree(&self) -> usize {
        self.bends.len() + 1
    }

    pub fn point(&self, t: f64) -> Result<Model> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Config(format!("t must lie in [0, 1], got {t}")));
        }
        if t == 0.0 {
            return Ok(self.start.clone());
        }
        if t == 1.0 {
            return Ok(self.end.clone());
        }
        let mut stores: Vec<&ParamStore> = vec![&self.start.params];
        stores.extend(self.bends.iter());
        stores.push(&self.end.params);
        combine(&stores, &bernstein_weights(self.bends.len(), t), &self.start)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveTrainConfig {
    pub steps: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for CurveTrainConfig {
    fn default() -> Self {
        CurveTrainConfig {
            steps: 200,
            lr: 1e-3,
            batch_size: 16,
            seed: 0,
        }
    }
}

fn bend_name(j: usize, name: &str) -> String {
    format!("bend{j}/{name}")
}

/// Minimizes the expected loss along the curve with one uniformly drawn `t`
/// per step. Only the bends move. Returns the per-step training losses.
pub fn train_bezier(
    curve: &mut BezierCurve,
    train: &[Example],
    kind: TaskKind,
    cfg: &CurveTrainConfig,
) -> Result<Vec<f64>> {
    if cfg.steps == 0 || curve.bends.is_empty() {
        return Ok(Vec::new());
    }
    if train.is_empty() || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config(
            "curve training needs data, a batch size and a positive lr".into(),
        ));
    }
    let names: Vec<String> = curve.start.params.names().map(String::from).collect();
    let mut store = ParamStore::new();
    for (j, bend) in curve.bends.iter().enumerate() {
        for name in &names {
            store.insert(bend_name(j, name), bend.value(name)?.clone(), true);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut adam = Adam::new();
    let mut losses = Vec::with_capacity(cfg.steps);
    let n = curve.bends.len();

    for _ in 0..cfg.steps {
        if cursor >= order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let end = (cursor + cfg.batch_size).min(order.len());
        let examples: Vec<&Example> = order[cursor..end].iter().map(|&i| &train[i]).collect();
        cursor = end;
        let t: f64 = rng.gen();
        let weights = bernstein_weights(n, t);

        let mut g = Graph::new();
        let mut vars: HashMap<String, Var> = HashMap::new();
        let mut leaves = Vec::new();
        for name in &names {
            let mut terms = Vec::with_capacity(n + 2);
            let c0 = g.constant(curve.start.params.value(name)?.clone());
            terms.push(c0);
            for j in 0..n {
                let bn = bend_name(j, name);
                let v = store.bind(&mut g, &bn)?;
                leaves.push((bn, v));
                terms.push(v);
            }
            terms.push(g.constant(curve.end.params.value(name)?.clone()));
            let mut acc: Option<Var> = None;
            for (term, &w) in terms.into_iter().zip(&weights) {
                let scaled = g.scale(term, w as f32);
                acc = Some(match acc {
                    None => scaled,
                    Some(a) => g.add(a, scaled)?,
                });
            }
            vars.insert(name.clone(), acc.expect("at least two controls"));
        }
        let bound = Bound::from_vars(vars);
        let loss = task_loss(&mut g, &bound, &curve.start, &examples, kind)?;
        losses.push(f64::from(g.value(loss).item()));
        g.backward(loss)?;
        store.accumulate_grads(&g, &leaves)?;
        adam.step(&mut store, cfg.lr as f32)?;
        store.zero_grads();
    }

    for (j, bend) in curve.bends.iter_mut().enumerate() {
        for name in &names {
            bend.get_mut(name)?.value = store.value(&bend_name(j, name))?.clone();
        }
    }
    Ok(losses)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathPoint {
    /// γ for lines, t for curves.
    pub position: f64,
    pub metric: f64,
    pub loss: f64,
}

/// Evaluates `at(position)` on an evenly spaced grid of `points ≥ 2` positions
/// from 0 to 1 inclusive.
pub fn eval_path(
    points: usize,
    examples: &[Example],
    kind: TaskKind,
    metric: Metric,
    at: impl Fn(f64) -> Result<Model>,
) -> Result<Vec<PathPoint>> {
    if points < 2 {
        return Err(Error::Config("a path needs at least 2 points".into()));
    }
    (0..points)
        .map(|i| {
            let position = i as f64 / (points - 1) as f64;
            let model = at(position)?;
            Ok(PathPoint {
                position,
                metric: evaluate(&model, examples, kind, metric)?,
                loss: mean_loss(&model, examples, kind)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_partition_of_unity() {
        for i in 0..=100 {
            let t = i as f64 / 100.0;
            let s: f64 = bernstein_weights(3, t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        let w = bernstein_weights(3, 0.5);
        assert_eq!(w[4], 0.0625);
        assert_eq!(bernstein_weights(3, 0.0), [1.0, 0.0, 0.0, 0.0, 0.0]);
    }
}
