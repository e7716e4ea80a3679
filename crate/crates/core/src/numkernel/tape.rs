//! Static operation tape with saved-value reverse-mode differentiation.
//!
//! A [`Tape`] is built once, shape-checked at construction, and then evaluated
//! any number of times against [`Bindings`] for its named inputs. Evaluation
//! stores every intermediate value (no recomputation); [`Evaluation::backward`]
//! walks the records in reverse.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use super::kernels::{self, dot, matmul, matmul_a_bt_acc, matmul_at_b_acc, sigmoid};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug)]
pub enum Op {
    Input { name: String },
    Constant(Tensor),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul(NodeId, NodeId),
    /// Rows of `table` selected by `ids`.
    Gather { table: NodeId, ids: Vec<usize> },
    /// Row-wise softmax over the last dimension.
    Softmax(NodeId),
    RmsNorm { x: NodeId, gain: NodeId, eps: f64 },
    Silu(NodeId),
    /// Causal multi-head scaled dot-product attention over `[T, d]` operands.
    Attention { q: NodeId, k: NodeId, v: NodeId, heads: usize },
    /// Mean token cross-entropy; `None` targets are ignored.
    CrossEntropy { logits: NodeId, targets: Vec<Option<usize>> },
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Constant(_) => "constant",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::MatMul(..) => "matmul",
            Op::Gather { .. } => "gather",
            Op::Softmax(_) => "softmax",
            Op::RmsNorm { .. } => "rmsnorm",
            Op::Silu(_) => "silu",
            Op::Attention { .. } => "attention",
            Op::CrossEntropy { .. } => "cross_entropy",
        }
    }

    fn inputs(&self) -> Vec<NodeId> {
        match *self {
            Op::Input { .. } | Op::Constant(_) => Vec::new(),
            Op::Add(a, b) | Op::Mul(a, b) | Op::MatMul(a, b) => vec![a, b],
            Op::Gather { table, .. } => vec![table],
            Op::Softmax(x) | Op::Silu(x) => vec![x],
            Op::RmsNorm { x, gain, .. } => vec![x, gain],
            Op::Attention { q, k, v, .. } => vec![q, k, v],
            Op::CrossEntropy { logits, .. } => vec![logits],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    shape: Vec<usize>,
}

/// Ordered operation records. Every node's inputs precede it.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    outputs: Vec<(String, NodeId)>,
}

/// Named input tensors for one evaluation.
#[derive(Default)]
pub struct Bindings<'a> {
    map: HashMap<String, &'a Tensor>,
}

impl<'a> Bindings<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, name: impl Into<String>, tensor: &'a Tensor) -> &mut Self {
        self.map.insert(name.into(), tensor);
        self
    }

    pub fn with(mut self, name: impl Into<String>, tensor: &'a Tensor) -> Self {
        self.bind(name, tensor);
        self
    }

    fn get(&self, name: &str) -> Option<&'a Tensor> {
        self.map.get(name).copied()
    }
}

/// Values saved during evaluation for use by the backward pass.
#[derive(Clone, Debug)]
enum Saved {
    None,
    /// Per-row reciprocal RMS.
    InvRms(Vec<f64>),
    /// Attention probabilities, `[heads, T, T]`.
    Probs(Vec<f64>),
    /// Softmax of the logits, `[T, V]`.
    ClassProbs(Vec<f64>),
}

fn shape_err(node: usize, op: &'static str, detail: String) -> Error {
    Error::Shape { node, op, detail }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    pub fn contains(&self, id: NodeId) -> bool {
        id.0 < self.nodes.len()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, id: NodeId) -> Result<&[usize]> {
        self.nodes
            .get(id.0)
            .map(|n| n.shape.as_slice())
            .ok_or(Error::UnknownNode(id.0))
    }

    pub fn input(&mut self, name: impl Into<String>, shape: &[usize]) -> NodeId {
        self.push(Op::Input { name: name.into() }, shape.to_vec())
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        let shape = value.shape().to_vec();
        self.push(Op::Constant(value), shape)
    }

    /// Marks `id` as a named output returned by [`Evaluation::outputs`].
    pub fn mark_output(&mut self, name: impl Into<String>, id: NodeId) {
        self.outputs.push((name.into(), id));
    }

    pub fn output_id(&self, name: &str) -> Option<NodeId> {
        self.outputs.iter().find(|(n, _)| n == name).map(|&(_, id)| id)
    }

    fn elementwise(&mut self, a: NodeId, b: NodeId, op: Op) -> Result<NodeId> {
        let sa = self.check(a)?.to_vec();
        let sb = self.check(b)?;
        if sa != sb {
            return Err(shape_err(
                self.nodes.len(),
                op.name(),
                format!("operands {sa:?} and {sb:?} differ"),
            ));
        }
        Ok(self.push(op, sa))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise(a, b, Op::Mul(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.check(a)?.to_vec();
        let sb = self.check(b)?.to_vec();
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(shape_err(
                self.nodes.len(),
                "matmul",
                format!("cannot multiply {sa:?} by {sb:?}"),
            ));
        }
        Ok(self.push(Op::MatMul(a, b), vec![sa[0], sb[1]]))
    }

    pub fn gather(&mut self, table: NodeId, ids: Vec<usize>) -> Result<NodeId> {
        let st = self.check(table)?.to_vec();
        if st.len() != 2 {
            return Err(shape_err(self.nodes.len(), "gather", format!("table shape {st:?} is not 2-D")));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= st[0]) {
            return Err(shape_err(
                self.nodes.len(),
                "gather",
                format!("row {bad} out of range for table with {} rows", st[0]),
            ));
        }
        let shape = vec![ids.len(), st[1]];
        Ok(self.push(Op::Gather { table, ids }, shape))
    }

    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.check(x)?.to_vec();
        Ok(self.push(Op::Softmax(x), s))
    }

    pub fn silu(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.check(x)?.to_vec();
        Ok(self.push(Op::Silu(x), s))
    }

    pub fn rms_norm(&mut self, x: NodeId, gain: NodeId, eps: f64) -> Result<NodeId> {
        let sx = self.check(x)?.to_vec();
        let sg = self.check(gain)?;
        let width = sx.last().copied().unwrap_or(1);
        if sg != [width] {
            return Err(shape_err(
                self.nodes.len(),
                "rmsnorm",
                format!("gain {sg:?} does not match width {width}"),
            ));
        }
        Ok(self.push(Op::RmsNorm { x, gain, eps }, sx))
    }

    pub fn attention(&mut self, q: NodeId, k: NodeId, v: NodeId, heads: usize) -> Result<NodeId> {
        let sq = self.check(q)?.to_vec();
        let sk = self.check(k)?.to_vec();
        let sv = self.check(v)?.to_vec();
        if sq.len() != 2 || sq != sk || sq != sv || heads == 0 || sq[1] % heads != 0 {
            return Err(shape_err(
                self.nodes.len(),
                "attention",
                format!("q {sq:?}, k {sk:?}, v {sv:?} with {heads} heads"),
            ));
        }
        Ok(self.push(Op::Attention { q, k, v, heads }, sq))
    }

    pub fn cross_entropy(&mut self, logits: NodeId, targets: Vec<Option<usize>>) -> Result<NodeId> {
        let sl = self.check(logits)?.to_vec();
        let here = self.nodes.len();
        if sl.len() != 2 || sl[0] != targets.len() {
            return Err(shape_err(
                here,
                "cross_entropy",
                format!("logits {sl:?} with {} targets", targets.len()),
            ));
        }
        if targets.iter().flatten().any(|&t| t >= sl[1]) {
            return Err(shape_err(here, "cross_entropy", "target class out of range".into()));
        }
        if targets.iter().all(Option::is_none) {
            return Err(shape_err(here, "cross_entropy", "no scored targets".into()));
        }
        Ok(self.push(Op::CrossEntropy { logits, targets }, Vec::new()))
    }

    /// Sum of every element of `x` as a `[1, 1]` node, built from matmuls
    /// against constant ones.
    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.check(x)?.to_vec();
        let (r, c) = match s.len() {
            2 => (s[0], s[1]),
            _ => {
                return Err(shape_err(self.nodes.len(), "matmul", format!("sum_all expects 2-D, got {s:?}")));
            }
        };
        let left = self.constant(Tensor::full(&[1, r], 1.0));
        let right = self.constant(Tensor::full(&[c, 1], 1.0));
        let rows = self.matmul(left, x)?;
        self.matmul(rows, right)
    }

    /// Evaluates the tape.
    pub fn eval<'a>(&'a self, inputs: &Bindings<'a>) -> Result<Evaluation<'a>> {
        self.eval_hooked(inputs, &mut |_, _| {})
    }

    /// Evaluates the tape, letting `hook` edit each computed value before any
    /// downstream node reads it. The backward pass treats every edit as the
    /// addition of a constant.
    pub fn eval_hooked<'a>(
        &'a self,
        inputs: &Bindings<'a>,
        hook: &mut dyn FnMut(NodeId, &mut Tensor),
    ) -> Result<Evaluation<'a>> {
        let mut values: Vec<Cow<'a, Tensor>> = Vec::with_capacity(self.nodes.len());
        let mut saved = Vec::with_capacity(self.nodes.len());
        for (i, node) in self.nodes.iter().enumerate() {
            match &node.op {
                Op::Input { name } => {
                    let t = inputs.get(name).ok_or_else(|| Error::UnboundInput(name.clone()))?;
                    if t.shape() != node.shape.as_slice() {
                        return Err(shape_err(
                            i,
                            "input",
                            format!("`{name}` bound with {:?}, expected {:?}", t.shape(), node.shape),
                        ));
                    }
                    values.push(Cow::Borrowed(t));
                    saved.push(Saved::None);
                }
                Op::Constant(t) => {
                    values.push(Cow::Borrowed(t));
                    saved.push(Saved::None);
                }
                op => {
                    let (mut value, s) = compute(op, &node.shape, |id| values[id.0].as_ref());
                    hook(NodeId(i), &mut value);
                    if !value.all_finite() {
                        return Err(Error::NonFinite { node: i, op: op.name() });
                    }
                    values.push(Cow::Owned(value));
                    saved.push(s);
                }
            }
        }
        Ok(Evaluation { tape: self, values, saved })
    }
}

fn compute<'v>(op: &Op, shape: &[usize], get: impl Fn(NodeId) -> &'v Tensor) -> (Tensor, Saved) {
    let out = |data: Vec<f64>| Tensor::new(shape.to_vec(), data).expect("shape checked at build");
    match op {
        Op::Input { .. } | Op::Constant(_) => unreachable!("leaves are not computed"),
        Op::Add(a, b) => {
            let (a, b) = (get(*a), get(*b));
            let d = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
            (out(d), Saved::None)
        }
        Op::Mul(a, b) => {
            let (a, b) = (get(*a), get(*b));
            let d = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
            (out(d), Saved::None)
        }
        Op::MatMul(a, b) => {
            let (a, b) = (get(*a), get(*b));
            let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
            (out(matmul(a.data(), b.data(), m, k, n)), Saved::None)
        }
        Op::Gather { table, ids } => {
            let t = get(*table);
            let mut d = Vec::with_capacity(ids.len() * t.cols());
            for &i in ids {
                d.extend_from_slice(t.row(i));
            }
            (out(d), Saved::None)
        }
        Op::Softmax(x) => {
            let x = get(*x);
            let w = x.cols();
            let mut d = x.data().to_vec();
            for row in d.chunks_mut(w) {
                kernels::softmax_row(row);
            }
            (out(d), Saved::None)
        }
        Op::Silu(x) => {
            let d = get(*x).data().iter().map(|&v| v * sigmoid(v)).collect();
            (out(d), Saved::None)
        }
        Op::RmsNorm { x, gain, eps } => {
            let (x, g) = (get(*x), get(*gain));
            let w = x.cols();
            let mut d = Vec::with_capacity(x.numel());
            let mut inv = Vec::with_capacity(x.numel() / w);
            for row in x.data().chunks(w) {
                let ms = dot(row, row) / w as f64;
                let r = 1.0 / (ms + eps).sqrt();
                inv.push(r);
                d.extend(row.iter().zip(g.data()).map(|(v, gi)| v * r * gi));
            }
            (out(d), Saved::InvRms(inv))
        }
        Op::Attention { q, k, v, heads } => {
            let (q, k, v) = (get(*q), get(*k), get(*v));
            let (z, probs) = attention_forward(q, k, v, *heads);
            (out(z), Saved::Probs(probs))
        }
        Op::CrossEntropy { logits, targets } => {
            let l = get(*logits);
            let w = l.cols();
            let mut probs = l.data().to_vec();
            let mut total = 0.0;
            let mut count = 0usize;
            for (row, t) in probs.chunks_mut(w).zip(targets) {
                if let Some(t) = t {
                    total += kernels::logsumexp(row) - row[*t];
                    count += 1;
                }
                kernels::softmax_row(row);
            }
            (out(vec![total / count as f64]), Saved::ClassProbs(probs))
        }
    }
}

fn attention_forward(q: &Tensor, k: &Tensor, v: &Tensor, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let (t, d) = (q.shape()[0], q.shape()[1]);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut z = vec![0.0; t * d];
    let mut probs = vec![0.0; heads * t * t];
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let qi = &qd[i * d + off..i * d + off + dh];
            let p = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
            for j in 0..=i {
                p[j] = dot(qi, &kd[j * d + off..j * d + off + dh]) * scale;
            }
            kernels::softmax_row(&mut p[..=i]);
            let zi = &mut z[i * d + off..i * d + off + dh];
            for j in 0..=i {
                kernels::axpy(p[j], &vd[j * d + off..j * d + off + dh], zi);
            }
        }
    }
    (z, probs)
}

/// All values produced by one evaluation of a [`Tape`].
pub struct Evaluation<'a> {
    tape: &'a Tape,
    values: Vec<Cow<'a, Tensor>>,
    saved: Vec<Saved>,
}

impl<'a> Evaluation<'a> {
    pub fn tape(&self) -> &'a Tape {
        self.tape
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn output(&self, name: &str) -> Option<&Tensor> {
        self.tape.output_id(name).map(|id| self.value(id))
    }

    /// All marked outputs by name.
    pub fn outputs(&self) -> BTreeMap<String, Tensor> {
        self.tape
            .outputs
            .iter()
            .map(|(n, id)| (n.clone(), self.value(*id).clone()))
            .collect()
    }

    /// Gradients of the scalar `output` (scaled by `seed`) with respect to
    /// each node in `wanted`, in the same order.
    pub fn backward(&self, output: NodeId, seed: f64, wanted: &[NodeId]) -> Result<Vec<Tensor>> {
        let nodes = &self.tape.nodes;
        for id in wanted.iter().chain(std::iter::once(&output)) {
            if id.0 >= nodes.len() {
                return Err(Error::UnknownNode(id.0));
            }
        }
        let out_val = self.value(output);
        if !out_val.is_scalar() {
            return Err(Error::NonScalarSeed {
                node: output.0,
                shape: out_val.shape().to_vec(),
            });
        }

        // Nodes downstream of something wanted; gradients flow only into those.
        let mut needs = vec![false; nodes.len()];
        for id in wanted {
            needs[id.0] = true;
        }
        for (i, node) in nodes.iter().enumerate() {
            if !needs[i] && node.op.inputs().iter().any(|p| needs[p.0]) {
                needs[i] = true;
            }
        }

        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.0] = Some(Tensor::full(out_val.shape(), seed));
        for i in (0..=output.0).rev() {
            if !needs[i] {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &needs, &mut grads);
            grads[i] = Some(g);
        }

        Ok(wanted
            .iter()
            .map(|id| grads[id.0].clone().unwrap_or_else(|| Tensor::zeros(&nodes[id.0].shape)))
            .collect())
    }

    fn backprop_node(&self, i: usize, g: &Tensor, needs: &[bool], grads: &mut [Option<Tensor>]) {
        let node = &self.tape.nodes[i];
        let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
            if !needs[id.0] {
                return;
            }
            let slot = grads[id.0].get_or_insert_with(|| Tensor::zeros(&self.tape.nodes[id.0].shape));
            f(slot.data_mut());
        };
        let gd = g.data();
        match &node.op {
            Op::Input { .. } | Op::Constant(_) => {}
            Op::Add(a, b) => {
                acc(*a, &mut |s| kernels::axpy(1.0, gd, s));
                acc(*b, &mut |s| kernels::axpy(1.0, gd, s));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |s| {
                    for ((si, gi), bi) in s.iter_mut().zip(gd).zip(vb) {
                        *si += gi * bi;
                    }
                });
                acc(*b, &mut |s| {
                    for ((si, gi), ai) in s.iter_mut().zip(gd).zip(va) {
                        *si += gi * ai;
                    }
                });
            }
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                acc(*a, &mut |s| matmul_a_bt_acc(gd, vb.data(), m, n, k, s));
                acc(*b, &mut |s| matmul_at_b_acc(va.data(), gd, m, k, n, s));
            }
            Op::Gather { table, ids } => {
                let w = node.shape[1];
                acc(*table, &mut |s| {
                    for (r, &id) in ids.iter().enumerate() {
                        kernels::axpy(1.0, &gd[r * w..(r + 1) * w], &mut s[id * w..(id + 1) * w]);
                    }
                });
            }
            Op::Softmax(x) => {
                let y = self.value(NodeId(i)).data();
                let w = node.shape.last().copied().unwrap_or(1);
                acc(*x, &mut |s| {
                    for ((srow, yrow), grow) in s.chunks_mut(w).zip(y.chunks(w)).zip(gd.chunks(w)) {
                        let inner = dot(yrow, grow);
                        for ((si, yi), gi) in srow.iter_mut().zip(yrow).zip(grow) {
                            *si += yi * (gi - inner);
                        }
                    }
                });
            }
            Op::Silu(x) => {
                let xv = self.value(*x).data();
                acc(*x, &mut |s| {
                    for ((si, &xi), gi) in s.iter_mut().zip(xv).zip(gd) {
                        let sg = sigmoid(xi);
                        *si += gi * sg * (1.0 + xi * (1.0 - sg));
                    }
                });
            }
            Op::RmsNorm { x, gain, .. } => {
                let Saved::InvRms(inv) = &self.saved[i] else { unreachable!() };
                let (xv, gv) = (self.value(*x), self.value(*gain).data());
                let w = xv.cols();
                acc(*x, &mut |s| {
                    for (r, ((srow, xrow), grow)) in
                        s.chunks_mut(w).zip(xv.data().chunks(w)).zip(gd.chunks(w)).enumerate()
                    {
                        let rr = inv[r];
                        let mut proj = 0.0;
                        for j in 0..w {
                            proj += grow[j] * gv[j] * xrow[j];
                        }
                        let c = rr * rr * rr * proj / w as f64;
                        for j in 0..w {
                            srow[j] += rr * gv[j] * grow[j] - c * xrow[j];
                        }
                    }
                });
                acc(*gain, &mut |s| {
                    for (r, (xrow, grow)) in xv.data().chunks(w).zip(gd.chunks(w)).enumerate() {
                        let rr = inv[r];
                        for j in 0..w {
                            s[j] += grow[j] * xrow[j] * rr;
                        }
                    }
                });
            }
            Op::Attention { q, k, v, heads } => {
                let Saved::Probs(probs) = &self.saved[i] else { unreachable!() };
                let (dq, dk, dv) = attention_backward(
                    self.value(*q),
                    self.value(*k),
                    self.value(*v),
                    probs,
                    gd,
                    *heads,
                );
                acc(*q, &mut |s| kernels::axpy(1.0, &dq, s));
                acc(*k, &mut |s| kernels::axpy(1.0, &dk, s));
                acc(*v, &mut |s| kernels::axpy(1.0, &dv, s));
            }
            Op::CrossEntropy { logits, targets } => {
                let Saved::ClassProbs(probs) = &self.saved[i] else { unreachable!() };
                let w = self.value(*logits).cols();
                let count = targets.iter().flatten().count() as f64;
                let scale = gd[0] / count;
                acc(*logits, &mut |s| {
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = t else { continue };
                        let srow = &mut s[r * w..(r + 1) * w];
                        kernels::axpy(scale, &probs[r * w..(r + 1) * w], srow);
                        srow[*t] -= scale;
                    }
                });
            }
        }
    }

    /// Re-evaluates every node that depends on `node` with `node`'s value
    /// replaced by `value`, returning the resulting value of `output`.
    /// Nodes that do not depend on `node` keep their recorded values.
    pub fn replay_with(&self, node: NodeId, value: &Tensor, output: NodeId) -> Result<Tensor> {
        let nodes = &self.tape.nodes;
        if node.0 >= nodes.len() || output.0 >= nodes.len() {
            return Err(Error::UnknownNode(node.0.max(output.0)));
        }
        if value.shape() != nodes[node.0].shape.as_slice() {
            return Err(shape_err(node.0, nodes[node.0].op.name(), "replacement shape differs".into()));
        }
        if output.0 < node.0 {
            return Ok(self.value(output).clone());
        }
        let mut overlay: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        overlay[node.0] = Some(value.clone());
        for i in node.0 + 1..=output.0 {
            let n = &nodes[i];
            if !n.op.inputs().iter().any(|p| overlay[p.0].is_some()) {
                continue;
            }
            let (v, _) = compute(&n.op, &n.shape, |id| {
                overlay[id.0].as_ref().unwrap_or_else(|| self.values[id.0].as_ref())
            });
            if !v.all_finite() {
                return Err(Error::NonFinite { node: i, op: n.op.name() });
            }
            overlay[i] = Some(v);
        }
        Ok(overlay[output.0].take().unwrap_or_else(|| self.value(output).clone()))
    }
}

fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    probs: &[f64],
    dz: &[f64],
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (t, d) = (q.shape()[0], q.shape()[1]);
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut dp = vec![0.0; t];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let p = &probs[(h * t + i) * t..(h * t + i + 1) * t];
            let dzi = &dz[i * d + off..i * d + off + dh];
            let mut inner = 0.0;
            for j in 0..=i {
                kernels::axpy(p[j], dzi, &mut dv[j * d + off..j * d + off + dh]);
                dp[j] = dot(dzi, &vd[j * d + off..j * d + off + dh]);
                inner += dp[j] * p[j];
            }
            let qi = &qd[i * d + off..i * d + off + dh];
            for j in 0..=i {
                let ds = p[j] * (dp[j] - inner) * scale;
                if ds == 0.0 {
                    continue;
                }
                kernels::axpy(ds, &kd[j * d + off..j * d + off + dh], &mut dq[i * d + off..i * d + off + dh]);
                kernels::axpy(ds, qi, &mut dk[j * d + off..j * d + off + dh]);
            }
        }
    }
    (dq, dk, dv)
}
