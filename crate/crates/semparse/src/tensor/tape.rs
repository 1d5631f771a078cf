//! The autodiff tape: a growable graph of tensor operations.
//!
//! Nodes are appended in execution order, so parents always precede children
//! and reverse insertion order is a valid reverse topological order for the
//! backward pass. Parameters are bound once per tape (by name) and their
//! gradients are accumulated into a [`Gradients`] map.

use std::collections::{BTreeMap, HashMap};

use super::{Params, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Concat { parts: Vec<NodeId>, axis: usize },
    Slice { input: NodeId, axis: usize, start: usize, len: usize },
    StackRows(Vec<NodeId>),
    Softmax(NodeId),
    LogSumExp(NodeId),
    Gather { input: NodeId, indices: Vec<usize> },
    Row { matrix: NodeId, row: usize },
    Sum(NodeId),
}

struct Node {
    value: Tensor,
    op: Op,
    /// Name of the bound parameter, for leaves created by [`Tape::param`].
    param: Option<String>,
}

/// Gradients keyed by parameter name, as produced by [`Tape::backward`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    map: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.map.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_nodes: HashMap<String, NodeId>,
}

/// Shapes for a matrix product, after promoting 1-D operands.
///
/// A 1-D left operand is read as a row vector, a 1-D right operand as a
/// column vector; promoted axes are squeezed from the result. Two vectors
/// therefore multiply to a one-element tensor (a dot product).
fn matmul_dims(
    left: &[usize],
    right: &[usize],
) -> Result<(usize, usize, usize, Vec<usize>), TensorError> {
    let mismatch = || TensorError::DimensionMismatch {
        op: "matmul",
        left: left.to_vec(),
        right: right.to_vec(),
    };
    let (m, k1, squeeze_m) = match left {
        [k] => (1, *k, true),
        [m, k] => (*m, *k, false),
        _ => return Err(mismatch()),
    };
    let (k2, n, squeeze_n) = match right {
        [k] => (*k, 1, true),
        [k, n] => (*k, *n, false),
        _ => return Err(mismatch()),
    };
    if k1 != k2 {
        return Err(mismatch());
    }
    let mut shape = Vec::new();
    if !squeeze_m {
        shape.push(m);
    }
    if !squeeze_n {
        shape.push(n);
    }
    if shape.is_empty() {
        shape.push(1); // vector · vector
    }
    Ok((m, k1, n, shape))
}

/// `out[m×n] += a[m×k] · b[k×n]`, all flat row-major.
fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// `out[m×n] += a[k×m]ᵀ · b[k×n]`.
fn matmul_at_b_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for l in 0..k {
        for i in 0..m {
            let av = a[l * m + i];
            if av == 0.0 {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
}

/// `out[m×k] += a[m×n] · b[k×n]ᵀ`.
fn matmul_a_bt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, n: usize, k: usize) {
    for i in 0..m {
        for l in 0..k {
            let arow = &a[i * n..(i + 1) * n];
            let brow = &b[l * n..(l + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += arow[j] * brow[j];
            }
            out[i * k + l] += acc;
        }
    }
}

/// Outer stride (elements per index step before `axis`) and inner stride
/// (elements per index step at `axis`) for row-major layout.
fn axis_strides(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner)
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            param: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a leaf that does not receive a gradient entry.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Bind the named parameter from `params` as a leaf. Repeated binds of
    /// the same name return the same node, so gradient contributions from
    /// every use site accumulate in one place.
    pub fn param(&mut self, params: &Params, name: &str) -> Result<NodeId, TensorError> {
        if let Some(&id) = self.param_nodes.get(name) {
            return Ok(id);
        }
        let value = params.get(name)?.clone();
        let id = self.push(value, Op::Leaf);
        self.nodes[id.0].param = Some(name.to_string());
        self.param_nodes.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (m, k, n, shape) = matmul_dims(self.value(a).shape(), self.value(b).shape())?;
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::new(shape, out)?, Op::MatMul(a, b)))
    }

    fn elementwise_pair(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId, TensorError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(TensorError::DimensionMismatch {
                op: op_name,
                left: self.value(a).shape().to_vec(),
                right: self.value(b).shape().to_vec(),
            });
        }
        let data: Vec<f64> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| f(*x, *y))
            .collect();
        let shape = self.value(a).shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, op))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise_pair("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise_pair("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        self.elementwise_pair("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn elementwise_unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let data: Vec<f64> = self.value(x).data().iter().map(|v| f(*v)).collect();
        let shape = self.value(x).shape().to_vec();
        self.push(Tensor { shape, data }, op)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.elementwise_unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.elementwise_unary(x, |v| 1.0 / (1.0 + (-v).exp()), Op::Sigmoid(x))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        self.elementwise_unary(x, f64::exp, Op::Exp(x))
    }

    pub fn log(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        if let Some(&bad) = self.value(x).data().iter().find(|v| **v <= 0.0) {
            return Err(TensorError::LogDomain(bad));
        }
        Ok(self.elementwise_unary(x, f64::ln, Op::Log(x)))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat" });
        }
        let first = self.value(parts[0]).shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::RankMismatch {
                op: "concat",
                expected: axis + 1,
                shape: first,
            });
        }
        let mut axis_total = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != first.len()
                || s.iter()
                    .zip(&first)
                    .enumerate()
                    .any(|(d, (a, b))| d != axis && a != b)
            {
                return Err(TensorError::DimensionMismatch {
                    op: "concat",
                    left: first,
                    right: s.to_vec(),
                });
            }
            axis_total += s[axis];
        }
        let mut shape = first.clone();
        shape[axis] = axis_total;
        let (outer, inner) = axis_strides(&shape, axis);
        let mut data = vec![0.0; shape.iter().product()];
        let out_axis_stride = axis_total * inner;
        let mut offset = 0;
        for &p in parts {
            let s = self.value(p).shape();
            let part_axis = s[axis];
            let src = self.value(p).data();
            for o in 0..outer {
                let dst_base = o * out_axis_stride + offset * inner;
                let src_base = o * part_axis * inner;
                data[dst_base..dst_base + part_axis * inner]
                    .copy_from_slice(&src[src_base..src_base + part_axis * inner]);
            }
            offset += part_axis;
        }
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
        ))
    }

    pub fn slice(
        &mut self,
        input: NodeId,
        axis: usize,
        start: usize,
        len: usize,
    ) -> Result<NodeId, TensorError> {
        let shape = self.value(input).shape().to_vec();
        if axis >= shape.len() {
            return Err(TensorError::RankMismatch {
                op: "slice",
                expected: axis + 1,
                shape,
            });
        }
        if start + len > shape[axis] {
            return Err(TensorError::SliceOutOfBounds {
                op: "slice",
                start,
                len,
                size: shape[axis],
            });
        }
        let (outer, inner) = axis_strides(&shape, axis);
        let src_axis_stride = shape[axis] * inner;
        let mut out_shape = shape.clone();
        out_shape[axis] = len;
        let mut data = vec![0.0; outer * len * inner];
        let src = self.value(input).data();
        for o in 0..outer {
            let src_base = o * src_axis_stride + start * inner;
            let dst_base = o * len * inner;
            data[dst_base..dst_base + len * inner]
                .copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        Ok(self.push(
            Tensor::new(out_shape, data)?,
            Op::Slice {
                input,
                axis,
                start,
                len,
            },
        ))
    }

    /// Stack 1-D tensors of equal length `w` into an `[n, w]` matrix.
    pub fn stack_rows(&mut self, rows: &[NodeId]) -> Result<NodeId, TensorError> {
        if rows.is_empty() {
            return Err(TensorError::EmptyInput { op: "stack_rows" });
        }
        let w = match self.value(rows[0]).shape() {
            [w] => *w,
            other => {
                return Err(TensorError::RankMismatch {
                    op: "stack_rows",
                    expected: 1,
                    shape: other.to_vec(),
                })
            }
        };
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            let s = self.value(r).shape();
            if s != [w] {
                return Err(TensorError::DimensionMismatch {
                    op: "stack_rows",
                    left: vec![w],
                    right: s.to_vec(),
                });
            }
            data.extend_from_slice(self.value(r).data());
        }
        Ok(self.push(
            Tensor::new(vec![rows.len(), w], data)?,
            Op::StackRows(rows.to_vec()),
        ))
    }

    /// Numerically stable softmax over a 1-D tensor.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x);
        if v.rank() != 1 {
            return Err(TensorError::RankMismatch {
                op: "softmax",
                expected: 1,
                shape: v.shape().to_vec(),
            });
        }
        if v.numel() == 0 {
            return Err(TensorError::EmptyInput { op: "softmax" });
        }
        let data = stable_softmax(v.data());
        Ok(self.push(Tensor::vector(data), Op::Softmax(x)))
    }

    /// Numerically stable `log Σ exp(x_i)` of a 1-D tensor, as a scalar.
    pub fn log_sum_exp(&mut self, x: NodeId) -> Result<NodeId, TensorError> {
        let v = self.value(x);
        if v.rank() != 1 {
            return Err(TensorError::RankMismatch {
                op: "log_sum_exp",
                expected: 1,
                shape: v.shape().to_vec(),
            });
        }
        if v.numel() == 0 {
            return Err(TensorError::EmptyInput { op: "log_sum_exp" });
        }
        let max = v.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = v.data().iter().map(|&e| (e - max).exp()).sum();
        Ok(self.push(Tensor::scalar(max + sum.ln()), Op::LogSumExp(x)))
    }

    /// Select entries of a 1-D tensor; indices may repeat.
    pub fn gather(&mut self, input: NodeId, indices: Vec<usize>) -> Result<NodeId, TensorError> {
        let v = self.value(input);
        if v.rank() != 1 {
            return Err(TensorError::RankMismatch {
                op: "gather",
                expected: 1,
                shape: v.shape().to_vec(),
            });
        }
        if indices.is_empty() {
            return Err(TensorError::EmptyInput { op: "gather" });
        }
        let n = v.numel();
        let mut data = Vec::with_capacity(indices.len());
        for &i in &indices {
            if i >= n {
                return Err(TensorError::IndexOutOfBounds {
                    op: "gather",
                    index: i,
                    size: n,
                });
            }
            data.push(v.data()[i]);
        }
        Ok(self.push(Tensor::vector(data), Op::Gather { input, indices }))
    }

    /// Row lookup into a 2-D tensor (an embedding fetch).
    pub fn row(&mut self, matrix: NodeId, row: usize) -> Result<NodeId, TensorError> {
        let v = self.value(matrix);
        if v.rank() != 2 {
            return Err(TensorError::RankMismatch {
                op: "row",
                expected: 2,
                shape: v.shape().to_vec(),
            });
        }
        let (rows, cols) = (v.shape()[0], v.shape()[1]);
        if row >= rows {
            return Err(TensorError::IndexOutOfBounds {
                op: "row",
                index: row,
                size: rows,
            });
        }
        let data = v.data()[row * cols..(row + 1) * cols].to_vec();
        Ok(self.push(Tensor::vector(data), Op::Row { matrix, row }))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    /// Reverse-mode gradient of a scalar `loss` with respect to every bound
    /// parameter. Each node is visited exactly once, in reverse insertion
    /// order.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        if self.value(loss).numel() != 1 {
            return Err(TensorError::NonScalarLoss(self.value(loss).shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }

        let mut map = BTreeMap::new();
        for (name, &NodeId(id)) in &self.param_nodes {
            if id <= loss.0 {
                if let Some(g) = &grads[id] {
                    let shape = self.nodes[id].value.shape().to_vec();
                    map.insert(name.clone(), Tensor::new(shape, g.clone())?);
                }
            }
        }
        Ok(Gradients { map })
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], target: NodeId, size: usize) -> &mut Vec<f64> {
        grads[target.0].get_or_insert_with(|| vec![0.0; size])
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k, n, _) =
                    matmul_dims(self.value(*a).shape(), self.value(*b).shape()).unwrap();
                let (av, bv) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                {
                    let ga = Self::accumulate(grads, *a, m * k);
                    matmul_a_bt_acc(g, &bv, ga, m, n, k); // dA += dC · Bᵀ
                }
                {
                    let gb = Self::accumulate(grads, *b, k * n);
                    matmul_at_b_acc(&av, g, gb, k, m, n); // dB += Aᵀ · dC
                }
            }
            Op::Add(a, b) => {
                for &t in &[*a, *b] {
                    let gt = Self::accumulate(grads, t, g.len());
                    for (o, gi) in gt.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
            }
            Op::Sub(a, b) => {
                {
                    let ga = Self::accumulate(grads, *a, g.len());
                    for (o, gi) in ga.iter_mut().zip(g) {
                        *o += gi;
                    }
                }
                let gb = Self::accumulate(grads, *b, g.len());
                for (o, gi) in gb.iter_mut().zip(g) {
                    *o -= gi;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data().to_vec(), self.value(*b).data().to_vec());
                {
                    let ga = Self::accumulate(grads, *a, g.len());
                    for i in 0..g.len() {
                        ga[i] += g[i] * bv[i];
                    }
                }
                let gb = Self::accumulate(grads, *b, g.len());
                for i in 0..g.len() {
                    gb[i] += g[i] * av[i];
                }
            }
            Op::Tanh(x) => {
                let y = self.nodes[id].value.data();
                let gx = Self::accumulate(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Sigmoid(x) => {
                let y = self.nodes[id].value.data();
                let gx = Self::accumulate(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Exp(x) => {
                let y = self.nodes[id].value.data();
                let gx = Self::accumulate(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] * y[i];
                }
            }
            Op::Log(x) => {
                let xv = self.value(*x).data().to_vec();
                let gx = Self::accumulate(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += g[i] / xv[i];
                }
            }
            Op::Concat { parts, axis } => {
                let shape = self.nodes[id].value.shape();
                let (outer, inner) = axis_strides(shape, *axis);
                let out_axis_stride = shape[*axis] * inner;
                let mut offset = 0;
                for &p in parts {
                    let pshape = self.value(p).shape().to_vec();
                    let part_axis = pshape[*axis];
                    let gp = Self::accumulate(grads, p, self.value(p).numel());
                    for o in 0..outer {
                        let src_base = o * out_axis_stride + offset * inner;
                        let dst_base = o * part_axis * inner;
                        for i in 0..part_axis * inner {
                            gp[dst_base + i] += g[src_base + i];
                        }
                    }
                    offset += part_axis;
                }
            }
            Op::Slice {
                input,
                axis,
                start,
                len,
            } => {
                let in_shape = self.value(*input).shape().to_vec();
                let (outer, inner) = axis_strides(&in_shape, *axis);
                let in_axis_stride = in_shape[*axis] * inner;
                let gi = Self::accumulate(grads, *input, self.value(*input).numel());
                for o in 0..outer {
                    let dst_base = o * in_axis_stride + start * inner;
                    let src_base = o * len * inner;
                    for i in 0..len * inner {
                        gi[dst_base + i] += g[src_base + i];
                    }
                }
            }
            Op::StackRows(rows) => {
                let w = self.value(rows[0]).numel();
                for (r, &row) in rows.iter().enumerate() {
                    let gr = Self::accumulate(grads, row, w);
                    for i in 0..w {
                        gr[i] += g[r * w + i];
                    }
                }
            }
            Op::Softmax(x) => {
                let y = self.nodes[id].value.data();
                let dot: f64 = g.iter().zip(y).map(|(gi, yi)| gi * yi).sum();
                let gx = Self::accumulate(grads, *x, g.len());
                for i in 0..g.len() {
                    gx[i] += y[i] * (g[i] - dot);
                }
            }
            Op::LogSumExp(x) => {
                let p = stable_softmax(self.value(*x).data());
                let gx = Self::accumulate(grads, *x, p.len());
                for i in 0..p.len() {
                    gx[i] += g[0] * p[i];
                }
            }
            Op::Gather { input, indices } => {
                let gi = Self::accumulate(grads, *input, self.value(*input).numel());
                for (j, &i) in indices.iter().enumerate() {
                    gi[i] += g[j];
                }
            }
            Op::Row { matrix, row } => {
                let cols = g.len();
                let gm = Self::accumulate(grads, *matrix, self.value(*matrix).numel());
                for i in 0..cols {
                    gm[row * cols + i] += g[i];
                }
            }
            Op::Sum(x) => {
                let gx = Self::accumulate(grads, *x, self.value(*x).numel());
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
        }
    }
}

/// Max-subtracted softmax over a slice.
pub fn stable_softmax(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tape_with(values: &[Tensor]) -> (Tape, Vec<NodeId>) {
        let mut tape = Tape::new();
        let ids = values.iter().map(|v| tape.constant(v.clone())).collect();
        (tape, ids)
    }

    #[test]
    fn matmul_matches_hand_product() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 2, vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        let (mut tape, ids) = tape_with(&[a, b]);
        let c = tape.matmul(ids[0], ids[1]).unwrap();
        assert_eq!(tape.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
        assert_eq!(tape.value(c).shape(), &[2, 2]);
    }

    #[test]
    fn matmul_rejects_mismatched_inner_dims() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 2]);
        let (mut tape, ids) = tape_with(&[a, b]);
        let err = tape.matmul(ids[0], ids[1]).unwrap_err();
        assert!(matches!(err, TensorError::DimensionMismatch { op: "matmul", .. }));
    }

    #[test]
    fn matmul_vector_promotions() {
        // matrix · vector, vector · matrix, vector · vector
        let m = Tensor::matrix(2, 3, vec![1.0, 0.0, 2.0, 0.0, 1.0, 1.0]).unwrap();
        let v3 = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let v2 = Tensor::vector(vec![10.0, 100.0]);
        let (mut tape, ids) = tape_with(&[m, v3, v2]);
        let mv = tape.matmul(ids[0], ids[1]).unwrap();
        assert_eq!(tape.value(mv).data(), &[7.0, 5.0]);
        assert_eq!(tape.value(mv).shape(), &[2]);
        let vm = tape.matmul(ids[2], ids[0]).unwrap();
        assert_eq!(tape.value(vm).data(), &[10.0, 100.0, 120.0]);
        let dot = tape.matmul(ids[1], ids[1]).unwrap();
        assert_eq!(tape.value(dot).data(), &[14.0]);
    }

    #[test]
    fn softmax_matches_hand_values_and_sums_to_one() {
        // softmax([ln 2, 0]) = [2/3, 1/3]
        let x = Tensor::vector(vec![2.0_f64.ln(), 0.0]);
        let (mut tape, ids) = tape_with(&[x]);
        let y = tape.softmax(ids[0]).unwrap();
        let d = tape.value(y).data();
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((d[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_shift_invariant_under_large_offsets() {
        let x = Tensor::vector(vec![1000.0, 1001.0, 999.0]);
        let y0 = Tensor::vector(vec![0.0, 1.0, -1.0]);
        let (mut tape, ids) = tape_with(&[x, y0]);
        let a = tape.softmax(ids[0]).unwrap();
        let b = tape.softmax(ids[1]).unwrap();
        for (u, v) in tape.value(a).data().iter().zip(tape.value(b).data()) {
            assert!((u - v).abs() < 1e-15);
            assert!(u.is_finite());
        }
    }

    #[test]
    fn concat_and_slice_are_inverses() {
        let a = Tensor::vector(vec![1.0, 2.0]);
        let b = Tensor::vector(vec![3.0, 4.0, 5.0]);
        let (mut tape, ids) = tape_with(&[a, b]);
        let c = tape.concat(&ids, 0).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let s = tape.slice(c, 0, 2, 3).unwrap();
        assert_eq!(tape.value(s).data(), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn concat_rejects_mismatched_off_axis_dims() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[3, 2]);
        let (mut tape, ids) = tape_with(&[a, b]);
        let err = tape.concat(&ids, 1).unwrap_err();
        assert!(matches!(err, TensorError::DimensionMismatch { op: "concat", .. }));
        // same parts concatenated along axis 0 are fine
        assert!(tape.concat(&ids, 0).is_ok());
    }

    #[test]
    fn log_rejects_non_positive_input() {
        let x = Tensor::vector(vec![1.0, 0.0]);
        let (mut tape, ids) = tape_with(&[x]);
        assert!(matches!(tape.log(ids[0]), Err(TensorError::LogDomain(v)) if v == 0.0));
    }

    #[test]
    fn backward_requires_scalar_loss() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let (tape, ids) = tape_with(&[x]);
        assert!(matches!(tape.backward(ids[0]), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn backward_of_dot_product_gives_other_operand() {
        // loss = aᵀ b → dL/da = b, dL/db = a
        let mut params = Params::new();
        params.insert("a", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        params.insert("b", Tensor::vector(vec![4.0, 5.0, 6.0])).unwrap();
        let mut tape = Tape::new();
        let a = tape.param(&params, "a").unwrap();
        let b = tape.param(&params, "b").unwrap();
        let loss = tape.matmul(a, b).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("a").unwrap().data(), &[4.0, 5.0, 6.0]);
        assert_eq!(grads.get("b").unwrap().data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn reused_parameter_accumulates_gradient_once_per_use() {
        // loss = sum(x ⊙ x) → dL/dx = 2x
        let mut params = Params::new();
        params.insert("x", Tensor::vector(vec![1.5, -2.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&params, "x").unwrap();
        let x2 = tape.param(&params, "x").unwrap();
        assert_eq!(x, x2, "same name binds to the same node");
        let sq = tape.mul(x, x2).unwrap();
        let loss = tape.sum(sq);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[3.0, -4.0]);
    }

    #[test]
    fn gather_accumulates_repeated_indices() {
        let mut params = Params::new();
        params.insert("x", Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let mut tape = Tape::new();
        let x = tape.param(&params, "x").unwrap();
        let g = tape.gather(x, vec![1, 1, 2]).unwrap();
        assert_eq!(tape.value(g).data(), &[2.0, 2.0, 3.0]);
        let loss = tape.sum(g);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("x").unwrap().data(), &[0.0, 2.0, 1.0]);
    }

    #[test]
    fn log_sum_exp_is_stable_and_correct() {
        let x = Tensor::vector(vec![1000.0, 1000.0]);
        let (mut tape, ids) = tape_with(&[x]);
        let l = tape.log_sum_exp(ids[0]).unwrap();
        assert!((tape.value(l).item() - (1000.0 + 2.0_f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn row_lookup_routes_gradient_to_one_row() {
        let mut params = Params::new();
        params
            .insert("e", Tensor::matrix(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap())
            .unwrap();
        let mut tape = Tape::new();
        let e = tape.param(&params, "e").unwrap();
        let r = tape.row(e, 1).unwrap();
        assert_eq!(tape.value(r).data(), &[2.0, 3.0]);
        let loss = tape.sum(r);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get("e").unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn unused_parameters_get_no_gradient_entry() {
        let mut params = Params::new();
        params.insert("used", Tensor::vector(vec![1.0])).unwrap();
        params.insert("unused", Tensor::vector(vec![1.0])).unwrap();
        let mut tape = Tape::new();
        let u = tape.param(&params, "used").unwrap();
        let _also_bound = tape.param(&params, "unused").unwrap();
        let loss = tape.sum(u);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get("used").is_some());
        assert!(grads.get("unused").is_none(), "bound but not on the loss path");
    }
}
