use super::kernels::{self, broadcast_shape, for_each_broadcast};
use super::{numel, Tensor};
use crate::error::{Error, Result};

/// Label value skipped by [`Graph::cross_entropy`].
pub const IGNORE_INDEX: usize = usize::MAX;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f32,
    },
    Gelu {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f32>,
        rstd: Vec<f32>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f32>,
        count: usize,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Select {
        x: Var,
        axis: usize,
        index: usize,
    },
    Sum {
        x: Var,
    },
    SteBinarize {
        scores: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// The tape. Nodes are appended in execution order and never removed.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn clear_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ---------------------------------------------------------------- forward

    /// Batched matrix product `[.., m, k] · [.., k, n]`; leading dims broadcast
    /// (equal or 1, right aligned).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let plan = MatmulPlan::new(self.shape(a), self.shape(b))?;
        let mut out = vec![0.0; numel(&plan.out_shape)];
        let (av, bv) = (self.value(a).data(), self.value(b).data());
        let (m, k, n) = (plan.m, plan.k, plan.n);
        for &(o, ia, ib) in &plan.batches {
            kernels::gemm_nn(
                &av[ia * m * k..(ia + 1) * m * k],
                &bv[ib * k * n..(ib + 1) * k * n],
                &mut out[o * m * n..(o + 1) * m * n],
                m,
                k,
                n,
            );
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::from_parts(plan.out_shape, out), Op::MatMul { a, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.broadcast_binary("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    /// Elementwise (Hadamard) product with broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.broadcast_binary("hadamard", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul { a, b }, rg))
    }

    fn broadcast_binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let out_shape =
            broadcast_shape(ta.shape(), tb.shape()).ok_or_else(|| Error::shape(op, ta.shape(), tb.shape()))?;
        let mut out = vec![0.0; numel(&out_shape)];
        let (da, db) = (ta.data(), tb.data());
        for_each_broadcast(&out_shape, ta.shape(), tb.shape(), |i, ia, ib| {
            out[i] = f(da[ia], db[ib]);
        });
        Ok(Tensor::from_parts(out_shape, out))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(kernels::gelu);
        let rg = self.rg(x);
        self.push(value, Op::Gelu { x }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f32::tanh);
        let rg = self.rg(x);
        self.push(value, Op::Tanh { x }, rg)
    }

    /// Softmax along `axis`, max-subtracted.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.ndim() {
            return Err(Error::shape("softmax axis", t.shape(), &[axis]));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * len + j) * inner + i;
                let mut max = f32::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(src[at(j)]);
                }
                let mut sum = 0.0f32;
                for j in 0..len {
                    let e = (src[at(j)] - max).exp();
                    out[at(j)] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[at(j)] /= sum;
                }
            }
        }
        let value = Tensor::from_parts(t.shape().to_vec(), out);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax { x, axis }, rg))
    }

    /// Normalizes over the last axis, then applies `gain` and `bias` (both `[d]`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f32) -> Result<Var> {
        let t = self.value(x);
        let d = *t.shape().last().ok_or_else(|| Error::shape("layer_norm", &[], &[]))?;
        let (g, b) = (self.value(gain), self.value(bias));
        if g.shape() != [d] || b.shape() != [d] {
            return Err(Error::shape("layer_norm", t.shape(), g.shape()));
        }
        let rows = t.len() / d;
        let src = t.data();
        let mut out = vec![0.0; src.len()];
        let mut xhat = vec![0.0; src.len()];
        let mut rstd = vec![0.0; rows];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f32>() / d as f32;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d as f32;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[r * d + j] = h;
                out[r * d + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let value = Tensor::from_parts(t.shape().to_vec(), out);
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// Gathers rows of `table` (`[vocab, d]`); output shape is `ids_shape + [d]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize], ids_shape: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.ndim() != 2 {
            return Err(Error::shape("embedding table", t.shape(), &[]));
        }
        if numel(ids_shape) != ids.len() {
            return Err(Error::shape("embedding ids", ids_shape, &[ids.len()]));
        }
        let (vocab, d) = (t.shape()[0], t.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for (position, &id) in ids.iter().enumerate() {
            if id >= vocab {
                return Err(Error::Index {
                    what: "embedding id",
                    position,
                    value: id,
                    limit: vocab,
                });
            }
            out.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let mut shape = ids_shape.to_vec();
        shape.push(d);
        let rg = self.rg(table);
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    /// Mean negative log-softmax of the true class over rows of `[n, k]` logits.
    /// Rows labelled [`IGNORE_INDEX`] do not count.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.ndim() != 2 || t.shape()[0] != labels.len() {
            return Err(Error::shape("cross_entropy", t.shape(), &[labels.len()]));
        }
        let k = t.shape()[1];
        let mut probs = vec![0.0f32; t.len()];
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (r, &label) in labels.iter().enumerate() {
            let row = &t.data()[r * k..(r + 1) * k];
            let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let mut sum = 0.0f32;
            for (p, &v) in probs[r * k..(r + 1) * k].iter_mut().zip(row) {
                *p = (v - max).exp();
                sum += *p;
            }
            for p in &mut probs[r * k..(r + 1) * k] {
                *p /= sum;
            }
            if label == IGNORE_INDEX {
                continue;
            }
            if label >= k {
                return Err(Error::Index {
                    what: "class label",
                    position: r,
                    value: label,
                    limit: k,
                });
            }
            total += f64::from(max + sum.ln() - row[label]);
            count += 1;
        }
        let loss = if count == 0 { 0.0 } else { (total / count as f64) as f32 };
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
                count,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let mut seen = vec![false; t.ndim()];
        if axes.len() != t.ndim()
            || axes
                .iter()
                .any(|&a| a >= t.ndim() || std::mem::replace(&mut seen[a], true))
        {
            return Err(Error::shape("permute", t.shape(), axes));
        }
        let value = permute_tensor(t, axes);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Permute { x, axes: axes.to_vec() }, rg))
    }

    /// Picks `index` along `axis`, dropping that axis.
    pub fn select(&mut self, x: Var, axis: usize, index: usize) -> Result<Var> {
        let t = self.value(x);
        if axis >= t.ndim() || index >= t.shape()[axis] {
            return Err(Error::shape("select", t.shape(), &[axis, index]));
        }
        let (outer, len, inner) = split_axis(t.shape(), axis);
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let start = (o * len + index) * inner;
            out.extend_from_slice(&t.data()[start..start + inner]);
        }
        let mut shape = t.shape().to_vec();
        shape.remove(axis);
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_parts(shape, out), Op::Select { x, axis, index }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum::<f32>();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    /// Hard threshold `scores >= tau` whose backward passes gradients through
    /// unchanged (straight-through estimator).
    pub fn ste_binarize(&mut self, scores: Var, tau: f32) -> Var {
        let value = self.value(scores).map(|m| if m >= tau { 1.0 } else { 0.0 });
        let rg = self.rg(scores);
        self.push(value, Op::SteBinarize { scores }, rg)
    }

    // --------------------------------------------------------------- backward

    /// Backpropagates from a scalar `loss`. Gradients add onto whatever earlier
    /// passes left behind until [`Graph::clear_grads`] is called.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            for (input, contribution) in self.input_grads(i, &g) {
                accumulate(&mut grads[input.0], contribution);
            }
            accumulate(&mut self.nodes[i].grad, g);
        }
        Ok(())
    }

    /// Gradient contributions of node `i` to its inputs, given its output grad.
    fn input_grads(&self, i: usize, g: &Tensor) -> Vec<(Var, Tensor)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let plan = MatmulPlan::new(ta.shape(), tb.shape()).expect("validated in forward");
                let (m, k, n) = (plan.m, plan.k, plan.n);
                let gd = g.data();
                if self.rg(*a) {
                    let mut ga = vec![0.0; ta.len()];
                    for &(o, ia, ib) in &plan.batches {
                        kernels::gemm_nt(
                            &gd[o * m * n..(o + 1) * m * n],
                            &tb.data()[ib * k * n..(ib + 1) * k * n],
                            &mut ga[ia * m * k..(ia + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    out.push((*a, Tensor::from_parts(ta.shape().to_vec(), ga)));
                }
                if self.rg(*b) {
                    let mut gb = vec![0.0; tb.len()];
                    for &(o, ia, ib) in &plan.batches {
                        kernels::gemm_tn(
                            &ta.data()[ia * m * k..(ia + 1) * m * k],
                            &gd[o * m * n..(o + 1) * m * n],
                            &mut gb[ib * k * n..(ib + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    out.push((*b, Tensor::from_parts(tb.shape().to_vec(), gb)));
                }
            }
            Op::Add { a, b } | Op::Mul { a, b } => {
                let is_mul = matches!(node.op, Op::Mul { .. });
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (ra, rb) = (self.rg(*a), self.rg(*b));
                let mut ga = vec![0.0; if ra { ta.len() } else { 0 }];
                let mut gb = vec![0.0; if rb { tb.len() } else { 0 }];
                let gd = g.data();
                for_each_broadcast(g.shape(), ta.shape(), tb.shape(), |o, ia, ib| {
                    if ra {
                        ga[ia] += if is_mul { gd[o] * tb.data()[ib] } else { gd[o] };
                    }
                    if rb {
                        gb[ib] += if is_mul { gd[o] * ta.data()[ia] } else { gd[o] };
                    }
                });
                if ra {
                    out.push((*a, Tensor::from_parts(ta.shape().to_vec(), ga)));
                }
                if rb {
                    out.push((*b, Tensor::from_parts(tb.shape().to_vec(), gb)));
                }
            }
            Op::Scale { x, factor } => out.push((*x, g.map(|v| v * factor))),
            Op::Gelu { x } => {
                let gx = g
                    .zip_map(self.value(*x), |gv, xv| gv * kernels::gelu_grad(xv))
                    .expect("same shape");
                out.push((*x, gx));
            }
            Op::Tanh { x } => {
                let gx = g.zip_map(&node.value, |gv, y| gv * (1.0 - y * y)).expect("same shape");
                out.push((*x, gx));
            }
            Op::Softmax { x, axis } => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(node.value.shape(), *axis);
                let gd = g.data();
                let mut gx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * len + j) * inner + i;
                        let mut dot = 0.0f32;
                        for j in 0..len {
                            dot += gd[at(j)] * y[at(j)];
                        }
                        for j in 0..len {
                            gx[at(j)] = y[at(j)] * (gd[at(j)] - dot);
                        }
                    }
                }
                out.push((*x, Tensor::from_parts(node.value.shape().to_vec(), gx)));
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = *node.value.shape().last().expect("rank >= 1");
                let gain_v = self.value(*gain).data();
                let gd = g.data();
                let rows = gd.len() / d;
                let mut gx = vec![0.0; gd.len()];
                let mut ggain = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for r in 0..rows {
                    let (gr, hr) = (&gd[r * d..(r + 1) * d], &xhat[r * d..(r + 1) * d]);
                    let (mut mean_dx, mut mean_dxh) = (0.0f32, 0.0f32);
                    for j in 0..d {
                        dxhat[j] = gr[j] * gain_v[j];
                        mean_dx += dxhat[j];
                        mean_dxh += dxhat[j] * hr[j];
                        ggain[j] += gr[j] * hr[j];
                        gbias[j] += gr[j];
                    }
                    mean_dx /= d as f32;
                    mean_dxh /= d as f32;
                    for j in 0..d {
                        gx[r * d + j] = rstd[r] * (dxhat[j] - mean_dx - hr[j] * mean_dxh);
                    }
                }
                if self.rg(*x) {
                    out.push((*x, Tensor::from_parts(node.value.shape().to_vec(), gx)));
                }
                if self.rg(*gain) {
                    out.push((*gain, Tensor::from_parts(vec![d], ggain)));
                }
                if self.rg(*bias) {
                    out.push((*bias, Tensor::from_parts(vec![d], gbias)));
                }
            }
            Op::Embedding { table, ids } => {
                let t = self.value(*table);
                let d = t.shape()[1];
                let mut gt = vec![0.0; t.len()];
                for (p, &id) in ids.iter().enumerate() {
                    for (dst, &src) in gt[id * d..(id + 1) * d].iter_mut().zip(&g.data()[p * d..(p + 1) * d]) {
                        *dst += src;
                    }
                }
                out.push((*table, Tensor::from_parts(t.shape().to_vec(), gt)));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
                count,
            } => {
                let t = self.value(*logits);
                let k = t.shape()[1];
                let mut gl = vec![0.0; t.len()];
                if *count > 0 {
                    let scale = g.item() / *count as f32;
                    for (r, &label) in labels.iter().enumerate() {
                        if label == IGNORE_INDEX {
                            continue;
                        }
                        for j in 0..k {
                            let onehot = if j == label { 1.0 } else { 0.0 };
                            gl[r * k + j] = (probs[r * k + j] - onehot) * scale;
                        }
                    }
                }
                out.push((*logits, Tensor::from_parts(t.shape().to_vec(), gl)));
            }
            Op::Reshape { x } => {
                let shape = self.shape(*x).to_vec();
                out.push((*x, g.clone().reshape(&shape).expect("same numel")));
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                out.push((*x, permute_tensor(g, &inverse)));
            }
            Op::Select { x, axis, index } => {
                let shape = self.shape(*x).to_vec();
                let (outer, len, inner) = split_axis(&shape, *axis);
                let mut gx = vec![0.0; numel(&shape)];
                for o in 0..outer {
                    let start = (o * len + index) * inner;
                    gx[start..start + inner].copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
                out.push((*x, Tensor::from_parts(shape, gx)));
            }
            Op::Sum { x } => out.push((*x, Tensor::full(self.shape(*x), g.item()))),
            Op::SteBinarize { scores } => out.push((*scores, g.clone())),
        }
        out
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => *slot = Some(g),
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    (
        shape[..axis].iter().product(),
        shape[axis],
        shape[axis + 1..].iter().product(),
    )
}

fn permute_tensor(t: &Tensor, axes: &[usize]) -> Tensor {
    let shape = t.shape();
    let rank = shape.len();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let src = t.data();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0; rank];
    let mut off = 0;
    for _ in 0..src.len() {
        out.push(src[off]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            off += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            off -= strides[ax] * out_shape[ax];
            idx[ax] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

/// Batch pairing for a broadcast matmul, in units of whole matrices.
struct MatmulPlan {
    m: usize,
    k: usize,
    n: usize,
    out_shape: Vec<usize>,
    batches: Vec<(usize, usize, usize)>,
}

impl MatmulPlan {
    fn new(a: &[usize], b: &[usize]) -> Result<Self> {
        if a.len() < 2 || b.len() < 2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
        let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
        if k != k2 {
            return Err(Error::shape("matmul", a, b));
        }
        let (ba, bb) = (&a[..a.len() - 2], &b[..b.len() - 2]);
        // A plain matrix on the right: fold all of a's batch dims into its rows.
        if bb.iter().all(|&d| d == 1) && ba.len() >= bb.len() {
            let rows: usize = ba.iter().product::<usize>() * m;
            let mut out_shape = ba.to_vec();
            out_shape.extend([m, n]);
            return Ok(MatmulPlan {
                m: rows,
                k,
                n,
                out_shape,
                batches: vec![(0, 0, 0)],
            });
        }
        let batch = broadcast_shape(ba, bb).ok_or_else(|| Error::shape("matmul", a, b))?;
        let mut batches = Vec::with_capacity(numel(&batch));
        for_each_broadcast(&batch, ba, bb, |o, ia, ib| batches.push((o, ia, ib)));
        let mut out_shape = batch;
        out_shape.extend([m, n]);
        Ok(MatmulPlan {
            m,
            k,
            n,
            out_shape,
            batches,
        })
    }
}
