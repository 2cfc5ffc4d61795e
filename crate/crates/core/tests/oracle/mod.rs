//! Independent oracles for the autodiff engine: f64 forward passes of every
//! primitive checked by central finite differences, and the straight-through
//! score gradient of masked layers.

use masklm::masking::{MaskedLinear, MaskingConfig};
use masklm::tensor::{Graph, Tensor, Var, IGNORE_INDEX};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 50;
pub const TOLERANCE: f64 = 1e-4;
const STEP: f64 = 1e-3;

/// A dense f64 array used by the oracle forward passes.
#[derive(Clone)]
struct Arr {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Arr {
    Arr {
        shape: shape.to_vec(),
        // f32-representable so the graph and the oracle see the same inputs
        data: (0..numel(shape))
            .map(|_| f64::from((rng.gen_range(-1.0..1.0) * scale) as f32))
            .collect(),
    }
}

fn to_tensor(a: &Arr) -> Tensor {
    Tensor::new(a.shape.clone(), a.data.iter().map(|&x| x as f32).collect()).unwrap()
}

/// Row-major strides.
fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn unravel(mut i: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for d in (0..shape.len()).rev() {
        idx[d] = i % shape[d];
        i /= shape[d];
    }
    idx
}

/// Offset of output index `idx` in a right-aligned broadcast operand.
fn broadcast_offset(idx: &[usize], shape: &[usize]) -> usize {
    let lead = idx.len() - shape.len();
    let st = strides(shape);
    shape
        .iter()
        .enumerate()
        .map(|(d, &n)| if n == 1 { 0 } else { idx[lead + d] * st[d] })
        .sum()
}

fn broadcast(a: &Arr, b: &Arr, f: impl Fn(f64, f64) -> f64) -> Arr {
    let rank = a.shape.len().max(b.shape.len());
    let dim = |s: &[usize], i: usize| {
        if i + s.len() >= rank {
            s[i + s.len() - rank]
        } else {
            1
        }
    };
    let shape: Vec<usize> = (0..rank).map(|i| dim(&a.shape, i).max(dim(&b.shape, i))).collect();
    let data = (0..numel(&shape))
        .map(|i| {
            let idx = unravel(i, &shape);
            f(
                a.data[broadcast_offset(&idx, &a.shape)],
                b.data[broadcast_offset(&idx, &b.shape)],
            )
        })
        .collect();
    Arr { shape, data }
}

fn matmul(a: &Arr, b: &Arr) -> Arr {
    let (m, k) = (a.shape[a.shape.len() - 2], a.shape[a.shape.len() - 1]);
    let n = b.shape[b.shape.len() - 1];
    let lead_a = &a.shape[..a.shape.len() - 2];
    let lead_b = &b.shape[..b.shape.len() - 2];
    let rank = lead_a.len().max(lead_b.len());
    let dim = |s: &[usize], i: usize| {
        if i + s.len() >= rank {
            s[i + s.len() - rank]
        } else {
            1
        }
    };
    let lead: Vec<usize> = (0..rank).map(|i| dim(lead_a, i).max(dim(lead_b, i))).collect();
    let mut shape = lead.clone();
    shape.extend([m, n]);
    let mut data = vec![0.0; numel(&shape)];
    for o in 0..numel(&lead) {
        let idx = unravel(o, &lead);
        let ia = broadcast_offset(&idx, lead_a);
        let ib = broadcast_offset(&idx, lead_b);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for p in 0..k {
                    acc += a.data[ia * m * k + i * k + p] * b.data[ib * k * n + p * n + j];
                }
                data[o * m * n + i * n + j] = acc;
            }
        }
    }
    Arr { shape, data }
}

fn map(a: &Arr, f: impl Fn(f64) -> f64) -> Arr {
    Arr {
        shape: a.shape.clone(),
        data: a.data.iter().map(|&x| f(x)).collect(),
    }
}

fn gelu(x: f64) -> f64 {
    let u = (2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn softmax(a: &Arr, axis: usize) -> Arr {
    let len = a.shape[axis];
    let inner: usize = a.shape[axis + 1..].iter().product();
    let outer: usize = a.shape[..axis].iter().product();
    let mut out = a.clone();
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| a.data[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = (0..len).map(|j| (a.data[at(j)] - max).exp()).sum();
            for j in 0..len {
                out.data[at(j)] = (a.data[at(j)] - max).exp() / sum;
            }
        }
    }
    out
}

fn layer_norm(x: &Arr, gain: &Arr, bias: &Arr, eps: f64) -> Arr {
    let d = *x.shape.last().unwrap();
    let mut out = x.clone();
    for r in 0..x.data.len() / d {
        let row = &x.data[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        for j in 0..d {
            out.data[r * d + j] = (row[j] - mean) / (var + eps).sqrt() * gain.data[j] + bias.data[j];
        }
    }
    out
}

fn cross_entropy(logits: &Arr, labels: &[usize]) -> Arr {
    let k = logits.shape[1];
    let mut total = 0.0;
    let mut count = 0;
    for (r, &label) in labels.iter().enumerate() {
        if label == IGNORE_INDEX {
            continue;
        }
        let row = &logits.data[r * k..(r + 1) * k];
        let lse = row.iter().map(|v| v.exp()).sum::<f64>().ln();
        total += lse - row[label];
        count += 1;
    }
    Arr {
        shape: vec![],
        data: vec![total / count as f64],
    }
}

fn permute(a: &Arr, axes: &[usize]) -> Arr {
    let shape: Vec<usize> = axes.iter().map(|&ax| a.shape[ax]).collect();
    let st = strides(&a.shape);
    let data = (0..numel(&shape))
        .map(|i| {
            let idx = unravel(i, &shape);
            a.data[axes.iter().zip(&idx).map(|(&ax, &v)| v * st[ax]).sum::<usize>()]
        })
        .collect();
    Arr { shape, data }
}

fn select(a: &Arr, axis: usize, index: usize) -> Arr {
    let mut shape = a.shape.clone();
    shape.remove(axis);
    let st = strides(&a.shape);
    let data = (0..numel(&shape))
        .map(|i| {
            let mut idx = unravel(i, &shape);
            idx.insert(axis, index);
            a.data[idx.iter().zip(&st).map(|(v, s)| v * s).sum::<usize>()]
        })
        .collect();
    Arr { shape, data }
}

/// One primitive under test: input shapes, the graph construction and the f64
/// oracle of the same forward pass.
struct Case {
    name: &'static str,
    inputs: Vec<Vec<usize>>,
    build: Box<dyn Fn(&mut Graph, &[Var]) -> Var>,
    oracle: Box<dyn Fn(&[Arr]) -> Arr>,
}

fn case(
    name: &'static str,
    inputs: &[&[usize]],
    build: impl Fn(&mut Graph, &[Var]) -> Var + 'static,
    oracle: impl Fn(&[Arr]) -> Arr + 'static,
) -> Case {
    Case {
        name,
        inputs: inputs.iter().map(|s| s.to_vec()).collect(),
        build: Box::new(build),
        oracle: Box::new(oracle),
    }
}

fn cases() -> Vec<Case> {
    let ids = [4usize, 0, 5, 4];
    let labels = [2usize, IGNORE_INDEX, 0, 4];
    vec![
        case(
            "matmul",
            &[&[2, 3, 4], &[4, 5]],
            |g, v| g.matmul(v[0], v[1]).unwrap(),
            |x| matmul(&x[0], &x[1]),
        ),
        case(
            "matmul-batched",
            &[&[2, 1, 3, 4], &[3, 4, 2]],
            |g, v| g.matmul(v[0], v[1]).unwrap(),
            |x| matmul(&x[0], &x[1]),
        ),
        case(
            "add",
            &[&[2, 3], &[3]],
            |g, v| g.add(v[0], v[1]).unwrap(),
            |x| broadcast(&x[0], &x[1], |a, b| a + b),
        ),
        case(
            "mul",
            &[&[2, 1, 4], &[3, 1]],
            |g, v| g.mul(v[0], v[1]).unwrap(),
            |x| broadcast(&x[0], &x[1], |a, b| a * b),
        ),
        case(
            "scale",
            &[&[3, 4]],
            |g, v| g.scale(v[0], 0.7),
            |x| map(&x[0], |a| a * f64::from(0.7f32)),
        ),
        case("gelu", &[&[3, 5]], |g, v| g.gelu(v[0]), |x| map(&x[0], gelu)),
        case("tanh", &[&[3, 5]], |g, v| g.tanh(v[0]), |x| map(&x[0], f64::tanh)),
        case(
            "softmax",
            &[&[2, 3, 4]],
            |g, v| g.softmax(v[0], 1).unwrap(),
            |x| softmax(&x[0], 1),
        ),
        case(
            "softmax-last",
            &[&[3, 5]],
            |g, v| g.softmax(v[0], 1).unwrap(),
            |x| softmax(&x[0], 1),
        ),
        case(
            "layer_norm",
            &[&[3, 5], &[5], &[5]],
            |g, v| g.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
            |x| layer_norm(&x[0], &x[1], &x[2], f64::from(1e-5f32)),
        ),
        case(
            "embedding",
            &[&[6, 3]],
            move |g, v| g.embedding(v[0], &ids, &[2, 2]).unwrap(),
            move |x| {
                let d = 3;
                Arr {
                    shape: vec![2, 2, d],
                    data: ids
                        .iter()
                        .flat_map(|&i| x[0].data[i * d..(i + 1) * d].to_vec())
                        .collect(),
                }
            },
        ),
        case(
            "cross_entropy",
            &[&[4, 5]],
            move |g, v| g.cross_entropy(v[0], &labels).unwrap(),
            move |x| cross_entropy(&x[0], &labels),
        ),
        case(
            "reshape",
            &[&[2, 6]],
            |g, v| g.reshape(v[0], &[3, 4]).unwrap(),
            |x| Arr {
                shape: vec![3, 4],
                data: x[0].data.clone(),
            },
        ),
        case(
            "permute",
            &[&[2, 3, 4]],
            |g, v| g.permute(v[0], &[2, 0, 1]).unwrap(),
            |x| permute(&x[0], &[2, 0, 1]),
        ),
        case(
            "select",
            &[&[2, 3, 4]],
            |g, v| g.select(v[0], 1, 2).unwrap(),
            |x| select(&x[0], 1, 2),
        ),
        case(
            "sum",
            &[&[3, 4]],
            |g, v| g.sum(v[0]),
            |x| Arr {
                shape: vec![],
                data: vec![x[0].data.iter().sum()],
            },
        ),
    ]
}

/// Norm-wise relative error between the analytic and numeric gradients.
fn rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale = numeric.iter().map(|b| b * b).sum::<f64>().sqrt().max(1e-6);
    diff / scale
}

fn check(case: &Case, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Arr> = case.inputs.iter().map(|s| random(&mut rng, s, 1.5)).collect();
    let out_shape = (case.oracle)(&inputs).shape;
    let probe = random(&mut rng, &out_shape, 1.0);
    let objective = |xs: &[Arr]| -> f64 {
        let out = (case.oracle)(xs);
        out.data.iter().zip(&probe.data).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|a| g.leaf(to_tensor(a), true)).collect();
    let out = (case.build)(&mut g, &vars);
    assert_eq!(g.shape(out), out_shape.as_slice(), "{}: output shape", case.name);
    let p = g.constant(to_tensor(&probe));
    let weighted = g.mul(out, p).unwrap();
    let loss = g.sum(weighted);
    g.backward(loss).unwrap();

    let mut worst = 0.0f64;
    for (i, v) in vars.iter().enumerate() {
        let analytic: Vec<f64> = g.grad(*v).unwrap().data().iter().map(|&x| f64::from(x)).collect();
        let numeric: Vec<f64> = (0..inputs[i].data.len())
            .map(|j| {
                let mut plus = inputs.clone();
                plus[i].data[j] += STEP;
                let mut minus = inputs.clone();
                minus[i].data[j] -= STEP;
                (objective(&plus) - objective(&minus)) / (2.0 * STEP)
            })
            .collect();
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Worst relative error per primitive over `seeds` seeds.
pub fn primitive_errors(seeds: u64) -> Vec<(&'static str, f64)> {
    cases()
        .iter()
        .map(|case| (case.name, (0..seeds).map(|seed| check(case, seed)).fold(0.0, f64::max)))
        .collect()
}

/// Worst elementwise relative error between the score gradient and
/// `grad_masked ⊙ W` over `layers` random masked layers.
pub fn ste_worst(layers: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for layer in 0..layers {
        let (n, rows, cols) = (rng.gen_range(1..5), rng.gen_range(1..12), rng.gen_range(1..12));
        let weight = to_tensor(&random(&mut rng, &[rows, cols], 1.0));
        let bias = to_tensor(&random(&mut rng, &[cols], 1.0));
        let cfg = MaskingConfig {
            init_sparsity: rng.gen_range(0.0..1.0),
            seed: layer,
            ..MaskingConfig::default()
        };
        let mut lin = MaskedLinear::new(weight.clone(), Some(bias), &cfg, layer).unwrap();
        let mut g = Graph::new();
        let x = g.constant(to_tensor(&random(&mut rng, &[n, rows], 1.0)));
        let fwd = lin.forward(&mut g, x).unwrap();
        let probe = g.constant(to_tensor(&random(&mut rng, &[n, cols], 1.0)));
        let y = g.mul(fwd.output, probe).unwrap();
        let y = g.tanh(y);
        let loss = g.sum(y);
        g.backward(loss).unwrap();

        let grad_scores = g.grad(fwd.scores).unwrap();
        let grad_masked = g.grad(fwd.masked_weight).unwrap();
        for ((&s, &m), &w) in grad_scores.data().iter().zip(grad_masked.data()).zip(weight.data()) {
            let expected = f64::from(m) * f64::from(w);
            if s == 0.0 && expected == 0.0 {
                continue;
            }
            worst = worst.max((f64::from(s) - expected).abs() / expected.abs().max(f64::MIN_POSITIVE));
        }
    }
    worst
}
