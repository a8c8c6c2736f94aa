use std::collections::HashMap;

use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Additive mask value for disallowed attention positions. `exp` of it
/// underflows to exactly zero in `f64`.
pub const MASK_NEG: f64 = -1.0e9;

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    Softmax(Var),
    Sigmoid(Var),
    Relu(Var),
    SumAxis(Var, usize),
    RowSelect(Var, Vec<usize>),
    LayerNorm(Var, Vec<f64>),
    CrossEntropy(Var, Vec<usize>, Vec<f64>),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records a forward computation for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Leaf for a stored parameter. Each parameter is loaded once per tape.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b)))
    }

    /// Elementwise sum with trailing-axis broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise product with trailing-axis broadcasting.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let t = self.value(a);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|x| x * factor).collect(),
        };
        self.push(value, Op::Scale(a, factor))
    }

    fn binary(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = broadcast_shape(ta.shape(), tb.shape())
            .ok_or_else(|| Error::shape(op, ta.shape(), tb.shape()))?;
        let ma = broadcast_map(&shape, ta.shape());
        let mb = broadcast_map(&shape, tb.shape());
        let len: usize = shape.iter().product();
        let data = (0..len)
            .map(|i| f(ta.data[index(&ma, i)], tb.data[index(&mb, i)]))
            .collect();
        Ok(Tensor { shape, data })
    }

    /// Concatenation along the last axis; all leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Argument("concat of zero tensors".into()))?;
        let lead = self.shape(first)[..self.shape(first).len() - 1].to_vec();
        let mut width = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..lead.len()] != lead[..] {
                return Err(Error::shape("concat", self.shape(first), s));
            }
            width += s[s.len() - 1];
        }
        let rows: usize = lead.iter().product();
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            for &p in parts {
                let t = self.value(p);
                let c = t.cols();
                data.extend_from_slice(&t.data[r * c..(r + 1) * c]);
            }
        }
        let mut shape = lead;
        shape.push(width);
        Ok(self.push(Tensor { shape, data }, Op::Concat(parts.to_vec())))
    }

    /// Softmax over the last axis after adding `mask` (use [`MASK_NEG`] for
    /// excluded positions, `0` elsewhere). The mask is not differentiated.
    pub fn softmax(&mut self, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let t = self.value(x);
        if let Some(m) = mask {
            if m.shape() != t.shape() {
                return Err(Error::shape("softmax mask", t.shape(), m.shape()));
            }
        }
        let c = t.cols();
        let mut data = t.data.clone();
        if let Some(m) = mask {
            for (d, mv) in data.iter_mut().zip(m.data()) {
                *d += mv;
            }
        }
        for row in data.chunks_mut(c) {
            softmax_in_place(row);
        }
        let shape = t.shape.clone();
        Ok(self.push(Tensor { shape, data }, Op::Softmax(x)))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| sigmoid(v)).collect(),
        };
        self.push(value, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let value = Tensor {
            shape: t.shape.clone(),
            data: t.data.iter().map(|&v| v.max(0.0)).collect(),
        };
        self.push(value, Op::Relu(x))
    }

    /// Sums over `axis`, removing it. A rank-1 input reduces to shape `[1]`.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let t = self.value(x);
        let shape = t.shape();
        if axis >= shape.len() {
            return Err(Error::Argument(format!("sum over axis {axis} of rank-{} tensor", shape.len())));
        }
        let outer: usize = shape[..axis].iter().product();
        let mid = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for m in 0..mid {
                let src = &t.data[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                for (d, s) in data[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        let mut out_shape: Vec<usize> = shape[..axis].iter().chain(&shape[axis + 1..]).copied().collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(self.push(Tensor { shape: out_shape, data }, Op::SumAxis(x, axis)))
    }

    /// Sum of every element, shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let len = self.value(x).len();
        let flat = self.reshape(x, &[len]).expect("same element count");
        self.sum_axis(flat, 0).expect("rank 1")
    }

    /// Gathers rows of a rank-2 `table` (embedding lookup).
    pub fn row_select(&mut self, table: Var, indices: &[usize]) -> Result<Var> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::shape("row_select", t.shape(), &[indices.len()]));
        }
        if indices.is_empty() {
            return Err(Error::Argument("row_select with no indices".into()));
        }
        let (rows, c) = (t.rows(), t.cols());
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            if i >= rows {
                return Err(Error::Argument(format!("row index {i} outside table of {rows} rows")));
            }
            data.extend_from_slice(t.row(i));
        }
        let value = Tensor {
            shape: vec![indices.len(), c],
            data,
        };
        Ok(self.push(value, Op::RowSelect(table, indices.to_vec())))
    }

    /// Normalizes each last-axis row to zero mean and unit variance.
    pub fn layer_norm(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let c = t.cols();
        let mut data = t.data.clone();
        let mut inv_stds = Vec::with_capacity(data.len() / c);
        for row in data.chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for v in row.iter_mut() {
                *v = (*v - mean) * inv;
            }
            inv_stds.push(inv);
        }
        let shape = t.shape.clone();
        self.push(Tensor { shape, data }, Op::LayerNorm(x, inv_stds))
    }

    /// Per-row negative log-likelihood of `targets` under softmax(`logits`),
    /// shape `[rows]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        if t.rank() != 2 || t.rows() != targets.len() {
            return Err(Error::shape("cross_entropy", t.shape(), &[targets.len()]));
        }
        let c = t.cols();
        let mut probs = t.data.clone();
        let mut nll = Vec::with_capacity(targets.len());
        for (row, &y) in probs.chunks_mut(c).zip(targets) {
            if y >= c {
                return Err(Error::Argument(format!("target class {y} outside {c} classes")));
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            nll.push(lse - row[y]);
            for v in row.iter_mut() {
                *v = (*v - lse).exp();
            }
        }
        let value = Tensor {
            shape: vec![targets.len()],
            data: nll,
        };
        Ok(self.push(value, Op::CrossEntropy(logits, targets.to_vec(), probs)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if shape.iter().product::<usize>() != t.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", t.shape(), shape));
        }
        let value = t.clone().with_shape(shape.to_vec());
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Backpropagates from a single-element `loss` and returns parameter
    /// gradients.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        Ok(self.backward_all(loss)?.1)
    }

    /// Like [`Tape::backward`] but also returns the gradient of every node.
    pub(crate) fn backward_all(&self, loss: Var) -> Result<(Vec<Option<Tensor>>, Gradients)> {
        if self.value(loss).len() != 1 {
            return Err(Error::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        let mut out = Gradients::default();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.insert(*id, g.clone()),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    let mut ga = vec![0.0; m * k];
                    for r in 0..m {
                        for c in 0..k {
                            let brow = &tb.data[c * n..(c + 1) * n];
                            let grow = &g.data[r * n..(r + 1) * n];
                            ga[r * k + c] = dot(grow, brow);
                        }
                    }
                    let mut gb = vec![0.0; k * n];
                    for r in 0..m {
                        let grow = &g.data[r * n..(r + 1) * n];
                        for c in 0..k {
                            let av = ta.data[r * k + c];
                            if av == 0.0 {
                                continue;
                            }
                            for (x, gv) in gb[c * n..(c + 1) * n].iter_mut().zip(grow) {
                                *x += av * gv;
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor { shape: vec![m, k], data: ga });
                    accumulate(&mut grads, *b, Tensor { shape: vec![k, n], data: gb });
                }
                Op::Add(a, b) => {
                    for &x in [a, b] {
                        let reduced = reduce_to(&g, self.shape(x), |_| 1.0);
                        accumulate(&mut grads, x, reduced);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let mb = broadcast_map(g.shape(), tb.shape());
                    let ga = reduce_to(&g, ta.shape(), |i| tb.data[index(&mb, i)]);
                    let ma = broadcast_map(g.shape(), ta.shape());
                    let gb = reduce_to(&g, tb.shape(), |i| ta.data[index(&ma, i)]);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, f) => {
                    let data = g.data.iter().map(|v| v * f).collect();
                    accumulate(&mut grads, *a, Tensor { shape: g.shape.clone(), data });
                }
                Op::Concat(parts) => {
                    let width = g.cols();
                    let rows = g.len() / width;
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.shape(p).to_vec();
                        let c = shape[shape.len() - 1];
                        let mut data = Vec::with_capacity(rows * c);
                        for r in 0..rows {
                            data.extend_from_slice(&g.data[r * width + offset..r * width + offset + c]);
                        }
                        offset += c;
                        accumulate(&mut grads, p, Tensor { shape, data });
                    }
                }
                Op::Softmax(x) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut data = vec![0.0; y.len()];
                    for ((dx, yr), gr) in data.chunks_mut(c).zip(y.data.chunks(c)).zip(g.data.chunks(c)) {
                        let s = dot(yr, gr);
                        for ((d, yv), gv) in dx.iter_mut().zip(yr).zip(gr) {
                            *d = yv * (gv - s);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor { shape: y.shape.clone(), data });
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let data = y.data.iter().zip(&g.data).map(|(yv, gv)| gv * yv * (1.0 - yv)).collect();
                    accumulate(&mut grads, *x, Tensor { shape: y.shape.clone(), data });
                }
                Op::Relu(x) => {
                    let input = self.value(*x);
                    let data = input
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(xv, gv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, *x, Tensor { shape: input.shape.clone(), data });
                }
                Op::SumAxis(x, axis) => {
                    let shape = self.shape(*x).to_vec();
                    let outer: usize = shape[..*axis].iter().product();
                    let mid = shape[*axis];
                    let inner: usize = shape[axis + 1..].iter().product();
                    let mut data = Vec::with_capacity(outer * mid * inner);
                    for o in 0..outer {
                        for _ in 0..mid {
                            data.extend_from_slice(&g.data[o * inner..(o + 1) * inner]);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor { shape, data });
                }
                Op::RowSelect(table, indices) => {
                    let shape = self.shape(*table).to_vec();
                    let c = shape[1];
                    let mut data = vec![0.0; shape[0] * c];
                    for (r, &idx) in indices.iter().enumerate() {
                        for (d, gv) in data[idx * c..(idx + 1) * c].iter_mut().zip(&g.data[r * c..(r + 1) * c]) {
                            *d += gv;
                        }
                    }
                    accumulate(&mut grads, *table, Tensor { shape, data });
                }
                Op::LayerNorm(x, inv_stds) => {
                    let y = &node.value;
                    let c = y.cols();
                    let mut data = vec![0.0; y.len()];
                    for (((dx, yr), gr), inv) in data
                        .chunks_mut(c)
                        .zip(y.data.chunks(c))
                        .zip(g.data.chunks(c))
                        .zip(inv_stds)
                    {
                        let mean_g = gr.iter().sum::<f64>() / c as f64;
                        let mean_gy = dot(gr, yr) / c as f64;
                        for ((d, yv), gv) in dx.iter_mut().zip(yr).zip(gr) {
                            *d = inv * (gv - mean_g - yv * mean_gy);
                        }
                    }
                    accumulate(&mut grads, *x, Tensor { shape: y.shape.clone(), data });
                }
                Op::CrossEntropy(logits, targets, probs) => {
                    let shape = self.shape(*logits).to_vec();
                    let c = shape[1];
                    let mut data = probs.clone();
                    for (r, (row, &y)) in data.chunks_mut(c).zip(targets).enumerate() {
                        row[y] -= 1.0;
                        let gr = g.data[r];
                        row.iter_mut().for_each(|v| *v *= gr);
                    }
                    accumulate(&mut grads, *logits, Tensor { shape, data });
                }
                Op::Reshape(x) => {
                    let shape = self.shape(*x).to_vec();
                    accumulate(&mut grads, *x, g.clone().with_shape(shape));
                }
            }
            grads[i] = Some(g);
        }
        Ok((grads, out))
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot => *slot = Some(g),
    }
}

pub(crate) fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for c in 0..k {
            let av = a[r * k + c];
            if av == 0.0 {
                continue;
            }
            for (o, bv) in orow.iter_mut().zip(&b[c * n..(c + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Flat source index for every flat output index, or `None` when the input
/// already has the output shape.
fn broadcast_map(out: &[usize], input: &[usize]) -> Option<Vec<usize>> {
    if out == input {
        return None;
    }
    let rank = out.len();
    let mut strides = vec![0usize; rank];
    let mut acc = 1;
    for i in (0..input.len()).rev() {
        let o = i + rank - input.len();
        strides[o] = if input[i] == 1 { 0 } else { acc };
        acc *= input[i];
    }
    let len: usize = out.iter().product();
    let mut map = Vec::with_capacity(len);
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    for _ in 0..len {
        map.push(src);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            src += strides[ax];
            if idx[ax] < out[ax] {
                break;
            }
            src -= strides[ax] * out[ax];
            idx[ax] = 0;
        }
    }
    Some(map)
}

#[inline]
fn index(map: &Option<Vec<usize>>, i: usize) -> usize {
    match map {
        Some(m) => m[i],
        None => i,
    }
}

/// Sums `g * factor(i)` over broadcast positions back to `shape`.
fn reduce_to(g: &Tensor, shape: &[usize], factor: impl Fn(usize) -> f64) -> Tensor {
    let map = broadcast_map(g.shape(), shape);
    let len: usize = shape.iter().product();
    let mut data = vec![0.0; len];
    for (i, gv) in g.data.iter().enumerate() {
        data[index(&map, i)] += gv * factor(i);
    }
    Tensor {
        shape: shape.to_vec(),
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 4]));
        let y = tape.softmax(x, None).unwrap();
        assert_eq!(tape.value(y).data(), &[0.25; 4]);
    }

    #[test]
    fn masked_softmax_gives_exact_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 3, vec![0.3, 2.0, -1.0]).unwrap());
        let mask = Tensor::matrix(1, 3, vec![0.0, MASK_NEG, 0.0]).unwrap();
        let y = tape.softmax(x, Some(&mask)).unwrap();
        let v = tape.value(y).data();
        assert_eq!(v[1], 0.0);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let mut eye = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            eye.data_mut()[i * 4] = 1.0;
        }
        let m = Tensor::matrix(3, 2, vec![1.0, -2.0, 3.5, 0.25, 9.0, 7.0]).unwrap();
        let i = tape.constant(eye);
        let mv = tape.constant(m.clone());
        let out = tape.matmul(i, mv).unwrap();
        assert_eq!(tape.value(out), &m);
    }

    #[test]
    fn uniform_cross_entropy_is_ln2() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[1, 2]));
        let l = tape.cross_entropy(x, &[0]).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_errors_report_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        match tape.matmul(a, b) {
            Err(Error::Shape { lhs, rhs, .. }) => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {other:?}"),
        }
        let c = tape.constant(Tensor::zeros(&[4]));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn linear_map_gradient_is_outer_structure() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::matrix(2, 3, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap());
        let unused = store.add("unused", Tensor::scalar(4.0));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![2.0, -1.0]).unwrap());
        let wv = tape.param(&store, w);
        let y = tape.matmul(x, wv).unwrap();
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        // d/dW sum(x W) = x^T 1
        assert_eq!(grads.get(w).unwrap().data(), &[2.0, 2.0, 2.0, -1.0, -1.0, -1.0]);
        assert!(grads.get(unused).is_none());
        store.accumulate(&grads, 1.0).unwrap();
        assert_eq!(store.get(unused).grad.data(), &[0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Argument(_))));
    }

    #[test]
    fn broadcasting_column_and_row() {
        let mut tape = Tape::new();
        let m = tape.constant(Tensor::matrix(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let col = tape.constant(Tensor::matrix(2, 1, vec![10.0, 20.0]).unwrap());
        let row = tape.constant(Tensor::new(vec![3], vec![1.0, 0.0, -1.0]).unwrap());
        let a = tape.add(m, col).unwrap();
        assert!(close(tape.value(a).data(), &[11.0, 12.0, 13.0, 24.0, 25.0, 26.0], 0.0));
        let b = tape.mul(m, row).unwrap();
        assert!(close(tape.value(b).data(), &[1.0, 0.0, -3.0, 4.0, 0.0, -6.0], 0.0));
    }

    #[test]
    fn fan_out_accumulates() {
        let mut store = ParamStore::new();
        let p = store.add("p", Tensor::scalar(3.0));
        let mut tape = Tape::new();
        let v = tape.param(&store, p);
        let sq = tape.mul(v, v).unwrap();
        let both = tape.add(sq, v).unwrap();
        let loss = tape.sum(both);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).unwrap().item(), 7.0);
    }

    #[test]
    fn sum_axis_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(vec![2, 3, 2], (0..12).map(f64::from).collect()).unwrap());
        let s = tape.sum_axis(x, 1).unwrap();
        assert_eq!(tape.shape(s), &[2, 2]);
        assert_eq!(tape.value(s).data(), &[6.0, 9.0, 24.0, 27.0]);
    }
}
