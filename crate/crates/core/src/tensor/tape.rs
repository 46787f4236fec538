use std::cell::{Ref, RefCell};
use std::sync::Arc;

use super::{Array, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    BroadcastAdd(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Exp(usize),
    Relu(usize, f64),
    MatMul(usize, usize),
    BatchMatMul(usize, usize),
    TransposeLast2(usize),
    Softmax(usize),
    Concat(Vec<usize>),
    Reshape(usize),
    Sum(usize),
    Mean(usize),
    MeanAxis(usize, usize),
    GatherRows(usize, Arc<[usize]>),
    GatherFlat(usize, Arc<[usize]>),
    EdgeAggregate {
        weights: usize,
        input: usize,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
    },
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    requires_grad: bool,
    trainable: bool,
}

/// Record of primitive operations, in creation order.
///
/// Creation order is a topological order of the computation, so walking it
/// backwards visits every node after all of its consumers.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    corrupt_exp_vjp: bool,
}

/// Handle to an array recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

/// Gradients produced by [`Tape::backward`], indexed by trainable leaf.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    /// Gradient of a trainable leaf; `None` for constants and derived values.
    pub fn get(&self, var: Var<'_>) -> Option<&Array> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Array> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tape whose exponential VJP is deliberately wrong. Used by the
    /// self-check to prove that the gradient oracle detects faults.
    pub fn with_corrupted_exp_vjp() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            corrupt_exp_vjp: true,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Trainable leaf: its gradient is always reported by `backward`.
    pub fn param(&self, value: Array) -> Var<'_> {
        self.push_leaf(value, true)
    }

    pub fn constant(&self, value: Array) -> Var<'_> {
        self.push_leaf(value, false)
    }

    fn push_leaf(&self, value: Array, trainable: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: trainable,
            trainable,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn push(&self, value: Array, op: Op, parents: &[usize]) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = parents.iter().any(|&p| nodes[p].requires_grad);
        nodes.push(Node {
            value,
            op,
            requires_grad,
            trainable: false,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn value(&self, var: Var<'_>) -> Ref<'_, Array> {
        Ref::map(self.nodes.borrow(), |n| &n[var.id].value)
    }

    /// Sign pattern (`input > 0`) of every ReLU recorded so far.
    ///
    /// Two evaluations whose patterns differ straddle a kink.
    pub fn relu_signature(&self) -> Vec<bool> {
        let nodes = self.nodes.borrow();
        let mut sig = Vec::new();
        for node in nodes.iter() {
            if let Op::Relu(a, _) = node.op {
                sig.extend(nodes[a].value.data().iter().map(|&x| x > 0.0));
            }
        }
        sig
    }

    /// Reverse pass from a scalar loss.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id];
        if !root.value.shape().is_empty() {
            return Err(TensorError::NonScalarLoss(root.value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array>> = vec![None; nodes.len()];
        if root.requires_grad {
            grads[loss.id] = Some(Array::scalar(1.0));
        }
        for id in (0..=loss.id).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(&nodes, id, &g, &mut grads);
            if node.trainable {
                grads[id] = Some(g);
            }
        }
        for (id, node) in nodes.iter().enumerate() {
            if node.trainable && grads[id].is_none() {
                grads[id] = Some(Array::zeros(node.value.shape().to_vec()));
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, nodes: &[Node], id: usize, g: &Array, grads: &mut [Option<Array>]) {
        let mut acc = |target: usize, contribution: Array| {
            if !nodes[target].requires_grad {
                return;
            }
            match &mut grads[target] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        let out = &nodes[id].value;
        let shaped = |data: Vec<f64>, like: usize| {
            Array::new(nodes[like].value.shape().to_vec(), data).expect("vjp shape")
        };
        match &nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[*a].value.data(), nodes[*b].value.data());
                if nodes[*a].requires_grad {
                    let d = g.data().iter().zip(bv).map(|(g, b)| g * b).collect();
                    acc(*a, shaped(d, *a));
                }
                if nodes[*b].requires_grad {
                    let d = g.data().iter().zip(av).map(|(g, a)| g * a).collect();
                    acc(*b, shaped(d, *b));
                }
            }
            Op::BroadcastAdd(a, b) => {
                acc(*a, g.clone());
                if nodes[*b].requires_grad {
                    let blen = nodes[*b].value.len();
                    let mut d = vec![0.0; blen];
                    for chunk in g.data().chunks(blen) {
                        for (acc, x) in d.iter_mut().zip(chunk) {
                            *acc += x;
                        }
                    }
                    acc(*b, shaped(d, *b));
                }
            }
            Op::Neg(a) => acc(*a, g.map(|x| -x)),
            Op::Scale(a, c) => {
                let c = *c;
                acc(*a, g.map(|x| c * x));
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Exp(a) => {
                let factor = if self.corrupt_exp_vjp { 1.5 } else { 1.0 };
                let d = g
                    .data()
                    .iter()
                    .zip(out.data())
                    .map(|(g, y)| factor * g * y)
                    .collect();
                acc(*a, shaped(d, *a));
            }
            Op::Relu(a, leak) => {
                let d = g
                    .data()
                    .iter()
                    .zip(nodes[*a].value.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { leak * g })
                    .collect();
                acc(*a, shaped(d, *a));
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if nodes[*a].requires_grad {
                    let mut d = vec![0.0; m * k];
                    matmul_nt(g.data(), bv.data(), &mut d, m, n, k);
                    acc(*a, shaped(d, *a));
                }
                if nodes[*b].requires_grad {
                    let mut d = vec![0.0; k * n];
                    matmul_tn(av.data(), g.data(), &mut d, m, k, n);
                    acc(*b, shaped(d, *b));
                }
            }
            Op::BatchMatMul(a, b) => {
                let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
                let (batch, m, k, n) = (av.shape()[0], av.shape()[1], av.shape()[2], bv.shape()[2]);
                if nodes[*a].requires_grad {
                    let mut d = vec![0.0; batch * m * k];
                    for t in 0..batch {
                        matmul_nt(
                            &g.data()[t * m * n..(t + 1) * m * n],
                            &bv.data()[t * k * n..(t + 1) * k * n],
                            &mut d[t * m * k..(t + 1) * m * k],
                            m,
                            n,
                            k,
                        );
                    }
                    acc(*a, shaped(d, *a));
                }
                if nodes[*b].requires_grad {
                    let mut d = vec![0.0; batch * k * n];
                    for t in 0..batch {
                        matmul_tn(
                            &av.data()[t * m * k..(t + 1) * m * k],
                            &g.data()[t * m * n..(t + 1) * m * n],
                            &mut d[t * k * n..(t + 1) * k * n],
                            m,
                            k,
                            n,
                        );
                    }
                    acc(*b, shaped(d, *b));
                }
            }
            Op::TransposeLast2(a) => {
                let shape = nodes[*a].value.shape();
                let (r, c) = (shape[shape.len() - 2], shape[shape.len() - 1]);
                // out has shape [.., c, r]; transposing back restores [.., r, c]
                let d = transpose_last2(g.data(), c, r);
                acc(*a, shaped(d, *a));
            }
            Op::Softmax(a) => {
                let c = *out.shape().last().expect("softmax rank");
                let mut d = vec![0.0; out.len()];
                for ((drow, yrow), grow) in d
                    .chunks_mut(c)
                    .zip(out.data().chunks(c))
                    .zip(g.data().chunks(c))
                {
                    let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                    for ((dx, y), g) in drow.iter_mut().zip(yrow).zip(grow) {
                        *dx = y * (g - dot);
                    }
                }
                acc(*a, shaped(d, *a));
            }
            Op::Concat(parts) => {
                let total = *out.shape().last().expect("concat rank");
                let rows = out.len() / total.max(1);
                let mut offset = 0;
                for &p in parts {
                    let w = *nodes[p].value.shape().last().expect("concat rank");
                    if nodes[p].requires_grad {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, shaped(d, p));
                    }
                    offset += w;
                }
            }
            Op::Reshape(a) => acc(*a, shaped(g.data().to_vec(), *a)),
            Op::Sum(a) => {
                let n = nodes[*a].value.len();
                acc(*a, shaped(vec![g.item(); n], *a));
            }
            Op::Mean(a) => {
                let n = nodes[*a].value.len();
                acc(*a, shaped(vec![g.item() / n as f64; n], *a));
            }
            Op::MeanAxis(a, axis) => {
                let shape = nodes[*a].value.shape();
                let (outer, extent, inner) = axis_split(shape, *axis);
                let mut d = vec![0.0; nodes[*a].value.len()];
                let scale = 1.0 / extent as f64;
                for o in 0..outer {
                    for e in 0..extent {
                        for i in 0..inner {
                            d[(o * extent + e) * inner + i] = g.data()[o * inner + i] * scale;
                        }
                    }
                }
                acc(*a, shaped(d, *a));
            }
            Op::GatherRows(a, idx) => {
                let rows = nodes[*a].value.shape()[0];
                let width = nodes[*a].value.len() / rows.max(1);
                let mut d = vec![0.0; nodes[*a].value.len()];
                for (k, &r) in idx.iter().enumerate() {
                    let src = &g.data()[k * width..(k + 1) * width];
                    for (dst, x) in d[r * width..(r + 1) * width].iter_mut().zip(src) {
                        *dst += x;
                    }
                }
                acc(*a, shaped(d, *a));
            }
            Op::GatherFlat(a, idx) => {
                let mut d = vec![0.0; nodes[*a].value.len()];
                for (k, &i) in idx.iter().enumerate() {
                    d[i] += g.data()[k];
                }
                acc(*a, shaped(d, *a));
            }
            Op::EdgeAggregate {
                weights,
                input,
                src,
                dst,
            } => {
                let h = &nodes[*input].value;
                let w = nodes[*weights].value.data();
                let width = *h.shape().last().expect("aggregate rank");
                if nodes[*weights].requires_grad {
                    let d = src
                        .iter()
                        .zip(dst.iter())
                        .map(|(&s, &t)| {
                            let hs = &h.data()[s * width..(s + 1) * width];
                            let gt = &g.data()[t * width..(t + 1) * width];
                            hs.iter().zip(gt).map(|(a, b)| a * b).sum()
                        })
                        .collect();
                    acc(*weights, shaped(d, *weights));
                }
                if nodes[*input].requires_grad {
                    let mut d = vec![0.0; h.len()];
                    for ((&s, &t), &we) in src.iter().zip(dst.iter()).zip(w) {
                        let gt = &g.data()[t * width..(t + 1) * width];
                        for (dx, gv) in d[s * width..(s + 1) * width].iter_mut().zip(gt) {
                            *dx += we * gv;
                        }
                    }
                    acc(*input, shaped(d, *input));
                }
            }
        }
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let extent = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, extent, inner)
}

/// out[m,n] += a[m,k] * b[k,n]
fn matmul_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// out[m,k] += g[m,n] * b[k,n]^T
fn matmul_nt(g: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
        }
    }
}

/// out[k,n] += a[m,k]^T * g[m,n]
fn matmul_tn(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
}

fn transpose_last2(data: &[f64], r: usize, c: usize) -> Vec<f64> {
    let block = r * c;
    let mut out = vec![0.0; data.len()];
    if block == 0 {
        return out;
    }
    for (src, dst) in data.chunks(block).zip(out.chunks_mut(block)) {
        for i in 0..r {
            for j in 0..c {
                dst[j * r + i] = src[i * c + j];
            }
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn value(&self) -> Ref<'t, Array> {
        self.tape.value(*self)
    }

    pub fn to_array(&self) -> Array {
        self.value().clone()
    }

    pub fn item(&self) -> f64 {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'_>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "operands recorded on different tapes"
        );
    }

    fn elementwise(
        &self,
        other: Var<'t>,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
        make: impl FnOnce(usize, usize) -> Op,
    ) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.value(), other.value());
            if a.shape() != b.shape() {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.shape().to_vec(),
                    rhs: b.shape().to_vec(),
                });
            }
            let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
            Array::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(value, make(self.id, other.id), &[self.id, other.id]))
    }

    fn unary(&self, f: impl Fn(f64) -> f64, op: Op) -> Var<'t> {
        let value = self.value().map(f);
        self.tape.push(value, op, &[self.id])
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "add", |a, b| a + b, Op::Add)
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "sub", |a, b| a - b, Op::Sub)
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.elementwise(other, "mul", |a, b| a * b, Op::Mul)
    }

    /// `self + other` where `other`'s shape is a trailing suffix of `self`'s.
    pub fn broadcast_add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.value(), other.value());
            let (sa, sb) = (a.shape(), b.shape());
            if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb || (b.is_empty() && !a.is_empty()) {
                return Err(TensorError::ShapeMismatch {
                    op: "broadcast_add",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                });
            }
            let blen = b.len();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + b.data()[i % blen])
                .collect();
            Array::new(sa.to_vec(), data)?
        };
        Ok(self
            .tape
            .push(value, Op::BroadcastAdd(self.id, other.id), &[self.id, other.id]))
    }

    pub fn neg(&self) -> Var<'t> {
        self.unary(|x| -x, Op::Neg(self.id))
    }

    pub fn scale(&self, c: f64) -> Var<'t> {
        self.unary(|x| c * x, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> Var<'t> {
        self.unary(|x| x + c, Op::AddScalar(self.id))
    }

    pub fn exp(&self) -> Var<'t> {
        self.unary(f64::exp, Op::Exp(self.id))
    }

    pub fn relu(&self) -> Var<'t> {
        self.leaky_relu(0.0)
    }

    /// `max(x, 0) + leak * min(x, 0)`.
    pub fn leaky_relu(&self, leak: f64) -> Var<'t> {
        self.unary(
            move |x| if x > 0.0 { x } else { leak * x },
            Op::Relu(self.id, leak),
        )
    }

    pub fn square(&self) -> Var<'t> {
        self.mul(*self).expect("same shape")
    }

    /// Matrix product of `[m, k]` and `[k, n]`.
    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.value(), other.value());
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
                return Err(TensorError::ShapeMismatch {
                    op: "matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                });
            }
            let (m, k, n) = (sa[0], sa[1], sb[1]);
            let mut data = vec![0.0; m * n];
            matmul_nn(a.data(), b.data(), &mut data, m, k, n);
            Array::new(vec![m, n], data)?
        };
        Ok(self
            .tape
            .push(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Batched product of `[b, m, k]` and `[b, k, n]`.
    pub fn batch_matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let value = {
            let (a, b) = (self.value(), other.value());
            let (sa, sb) = (a.shape(), b.shape());
            if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
                return Err(TensorError::ShapeMismatch {
                    op: "batch_matmul",
                    lhs: sa.to_vec(),
                    rhs: sb.to_vec(),
                });
            }
            let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
            let mut data = vec![0.0; batch * m * n];
            for t in 0..batch {
                matmul_nn(
                    &a.data()[t * m * k..(t + 1) * m * k],
                    &b.data()[t * k * n..(t + 1) * k * n],
                    &mut data[t * m * n..(t + 1) * m * n],
                    m,
                    k,
                    n,
                );
            }
            Array::new(vec![batch, m, n], data)?
        };
        Ok(self
            .tape
            .push(value, Op::BatchMatMul(self.id, other.id), &[self.id, other.id]))
    }

    /// Swaps the last two axes.
    pub fn transpose(&self) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let s = a.shape();
            if s.len() < 2 {
                return Err(TensorError::InvalidArgument {
                    op: "transpose",
                    detail: format!("rank {} < 2", s.len()),
                });
            }
            let (r, c) = (s[s.len() - 2], s[s.len() - 1]);
            let mut shape = s.to_vec();
            let rank = shape.len();
            shape.swap(rank - 2, rank - 1);
            Array::new(shape, transpose_last2(a.data(), r, c))?
        };
        Ok(self.tape.push(value, Op::TransposeLast2(self.id), &[self.id]))
    }

    /// Softmax along the last axis.
    pub fn softmax(&self) -> Result<Var<'t>> {
        self.softmax_impl(None)
    }

    /// Softmax along the last axis over entries where `mask` is true.
    /// Masked entries are exactly zero; fully masked rows are all zero.
    pub fn masked_softmax(&self, mask: &[bool]) -> Result<Var<'t>> {
        self.softmax_impl(Some(mask))
    }

    fn softmax_impl(&self, mask: Option<&[bool]>) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let c = match a.shape().last() {
                Some(&c) if c > 0 => c,
                _ => return Err(TensorError::EmptySoftmaxAxis(a.shape().to_vec())),
            };
            if let Some(mask) = mask {
                if mask.len() != a.len() {
                    return Err(TensorError::ShapeMismatch {
                        op: "masked_softmax",
                        lhs: a.shape().to_vec(),
                        rhs: vec![mask.len()],
                    });
                }
            }
            let mut data = vec![0.0; a.len()];
            for (r, (orow, xrow)) in data.chunks_mut(c).zip(a.data().chunks(c)).enumerate() {
                let keep = |j: usize| mask.is_none_or(|m| m[r * c + j]);
                let max = (0..c)
                    .filter(|&j| keep(j))
                    .map(|j| xrow[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY {
                    continue;
                }
                let mut total = 0.0;
                for j in 0..c {
                    if keep(j) {
                        orow[j] = (xrow[j] - max).exp();
                        total += orow[j];
                    }
                }
                for o in orow.iter_mut() {
                    *o /= total;
                }
            }
            Array::new(a.shape().to_vec(), data)?
        };
        Ok(self.tape.push(value, Op::Softmax(self.id), &[self.id]))
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshaped(shape)?;
        Ok(self.tape.push(value, Op::Reshape(self.id), &[self.id]))
    }

    /// Collapses all axes into one.
    pub fn flatten(&self) -> Var<'t> {
        let n = self.value().len();
        self.reshape(vec![n]).expect("flatten")
    }

    pub fn sum(&self) -> Var<'t> {
        let value = Array::scalar(self.value().data().iter().sum());
        self.tape.push(value, Op::Sum(self.id), &[self.id])
    }

    pub fn mean(&self) -> Var<'t> {
        let value = {
            let a = self.value();
            Array::scalar(a.data().iter().sum::<f64>() / a.len() as f64)
        };
        self.tape.push(value, Op::Mean(self.id), &[self.id])
    }

    /// Mean over one axis, which is removed from the shape.
    pub fn mean_axis(&self, axis: usize) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let s = a.shape();
            if axis >= s.len() || s[axis] == 0 {
                return Err(TensorError::InvalidArgument {
                    op: "mean_axis",
                    detail: format!("axis {axis} of shape {s:?}"),
                });
            }
            let (outer, extent, inner) = axis_split(s, axis);
            let mut data = vec![0.0; outer * inner];
            for o in 0..outer {
                for e in 0..extent {
                    for i in 0..inner {
                        data[o * inner + i] += a.data()[(o * extent + e) * inner + i];
                    }
                }
            }
            for x in &mut data {
                *x /= extent as f64;
            }
            let mut shape = s.to_vec();
            shape.remove(axis);
            Array::new(shape, data)?
        };
        Ok(self.tape.push(value, Op::MeanAxis(self.id, axis), &[self.id]))
    }

    /// Concatenation along the last axis; all leading axes must agree.
    pub fn concat(parts: &[Var<'t>]) -> Result<Var<'t>> {
        let first = parts.first().ok_or(TensorError::InvalidArgument {
            op: "concat",
            detail: "no operands".into(),
        })?;
        let tape = first.tape;
        let value = {
            let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
            let lead = &values[0].shape()[..values[0].ndim() - 1];
            let mut total = 0;
            for (v, part) in values.iter().zip(parts) {
                first.same_tape(part);
                if v.ndim() != lead.len() + 1 || &v.shape()[..v.ndim() - 1] != lead {
                    return Err(TensorError::ShapeMismatch {
                        op: "concat",
                        lhs: values[0].shape().to_vec(),
                        rhs: v.shape().to_vec(),
                    });
                }
                total += v.shape()[v.ndim() - 1];
            }
            let rows: usize = lead.iter().product();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in &values {
                    let w = v.shape()[v.ndim() - 1];
                    data.extend_from_slice(&v.data()[r * w..(r + 1) * w]);
                }
            }
            let mut shape = lead.to_vec();
            shape.push(total);
            Array::new(shape, data)?
        };
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        Ok(tape.push(value, Op::Concat(ids.clone()), &ids))
    }

    /// Selects rows along axis 0 (rows may repeat).
    pub fn gather_rows(&self, idx: Arc<[usize]>) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let rows = *a.shape().first().ok_or(TensorError::InvalidArgument {
                op: "gather_rows",
                detail: "scalar input".into(),
            })?;
            let width = if rows == 0 { 0 } else { a.len() / rows };
            let mut data = Vec::with_capacity(idx.len() * width);
            for &r in idx.iter() {
                if r >= rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_rows",
                        index: r,
                        extent: rows,
                    });
                }
                data.extend_from_slice(&a.data()[r * width..(r + 1) * width]);
            }
            let mut shape = a.shape().to_vec();
            shape[0] = idx.len();
            Array::new(shape, data)?
        };
        Ok(self.tape.push(value, Op::GatherRows(self.id, idx), &[self.id]))
    }

    /// Selects individual elements of the flattened array.
    pub fn gather_flat(&self, idx: Arc<[usize]>) -> Result<Var<'t>> {
        let value = {
            let a = self.value();
            let mut data = Vec::with_capacity(idx.len());
            for &i in idx.iter() {
                if i >= a.len() {
                    return Err(TensorError::IndexOutOfRange {
                        op: "gather_flat",
                        index: i,
                        extent: a.len(),
                    });
                }
                data.push(a.data()[i]);
            }
            Array::from_vec(data)
        };
        Ok(self.tape.push(value, Op::GatherFlat(self.id, idx), &[self.id]))
    }

    /// Sparse weighted aggregation over an edge list:
    /// `out[dst[e]] += weights[e] * self[src[e]]` with `self` of shape `[rows, d]`.
    pub fn edge_aggregate(
        &self,
        weights: Var<'t>,
        src: Arc<[usize]>,
        dst: Arc<[usize]>,
        out_rows: usize,
    ) -> Result<Var<'t>> {
        self.same_tape(&weights);
        let value = {
            let (h, w) = (self.value(), weights.value());
            if h.ndim() != 2 || w.ndim() != 1 || w.len() != src.len() || src.len() != dst.len() {
                return Err(TensorError::ShapeMismatch {
                    op: "edge_aggregate",
                    lhs: h.shape().to_vec(),
                    rhs: w.shape().to_vec(),
                });
            }
            let (rows, width) = (h.shape()[0], h.shape()[1]);
            let mut data = vec![0.0; out_rows * width];
            for ((&s, &t), &we) in src.iter().zip(dst.iter()).zip(w.data()) {
                if s >= rows || t >= out_rows {
                    return Err(TensorError::IndexOutOfRange {
                        op: "edge_aggregate",
                        index: if s >= rows { s } else { t },
                        extent: if s >= rows { rows } else { out_rows },
                    });
                }
                let hs = &h.data()[s * width..(s + 1) * width];
                for (o, x) in data[t * width..(t + 1) * width].iter_mut().zip(hs) {
                    *o += we * x;
                }
            }
            Array::new(vec![out_rows, width], data)?
        };
        Ok(self.tape.push(
            value,
            Op::EdgeAggregate {
                weights: weights.id,
                input: self.id,
                src,
                dst,
            },
            &[weights.id, self.id],
        ))
    }
}
