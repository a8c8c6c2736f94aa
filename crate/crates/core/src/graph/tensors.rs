use super::{LabeledGraph, NodeOrdering};
use crate::error::{Error, Result};

/// One-hot node matrix `X` (n x a) and edge tensor `A` (n x n x b) of a graph
/// under an ordering. `A[i][j]` is all-zero when positions `i` and `j` are not
/// adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorPair {
    n: usize,
    a: usize,
    b: usize,
    x: Vec<u8>,
    adj: Vec<u8>,
}

impl TensorPair {
    /// Builds a pair from raw row-major buffers without checking invariants.
    pub fn from_raw(n: usize, a: usize, b: usize, x: Vec<u8>, adj: Vec<u8>) -> Result<Self> {
        if x.len() != n * a || adj.len() != n * n * b {
            return Err(Error::MalformedTensor(format!(
                "buffer sizes {}/{} do not match n={n}, a={a}, b={b}",
                x.len(),
                adj.len()
            )));
        }
        Ok(Self { n, a, b, x, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn node_alphabet(&self) -> usize {
        self.a
    }

    pub fn edge_alphabet(&self) -> usize {
        self.b
    }

    pub fn x(&self, i: usize, k: usize) -> u8 {
        self.x[i * self.a + k]
    }

    pub fn a(&self, i: usize, j: usize, k: usize) -> u8 {
        self.adj[(i * self.n + j) * self.b + k]
    }

    pub fn x_row(&self, i: usize) -> &[u8] {
        &self.x[i * self.a..(i + 1) * self.a]
    }

    pub fn a_entry(&self, i: usize, j: usize) -> &[u8] {
        let o = (i * self.n + j) * self.b;
        &self.adj[o..o + self.b]
    }

    pub fn set_x(&mut self, i: usize, k: usize, v: u8) {
        self.x[i * self.a + k] = v;
    }

    pub fn set_a(&mut self, i: usize, j: usize, k: usize, v: u8) {
        self.adj[(i * self.n + j) * self.b + k] = v;
    }
}

pub fn to_tensors(g: &LabeledGraph, ord: &NodeOrdering) -> Result<TensorPair> {
    let n = g.n();
    if ord.len() != n {
        return Err(Error::Representation(format!(
            "ordering has length {} but graph has {n} nodes",
            ord.len()
        )));
    }
    let (a, b) = (g.node_alphabet(), g.edge_alphabet());
    let pos = ord.positions();
    let mut t = TensorPair {
        n,
        a,
        b,
        x: vec![0; n * a],
        adj: vec![0; n * n * b],
    };
    for (i, &v) in ord.perm().iter().enumerate() {
        let l = g.node_label(v);
        if l >= a {
            return Err(Error::Representation(format!("node label {l} outside alphabet {a}")));
        }
        t.set_x(i, l, 1);
    }
    for (u, v, l) in g.edges() {
        if l >= b {
            return Err(Error::Representation(format!("edge label {l} outside alphabet {b}")));
        }
        let (i, j) = (pos[u], pos[v]);
        t.set_a(i, j, l, 1);
        t.set_a(j, i, l, 1);
    }
    Ok(t)
}

/// Decodes tensors into the position-indexed graph (node `i` is position `i`)
/// paired with the identity ordering.
pub fn from_tensors(t: &TensorPair) -> Result<(LabeledGraph, NodeOrdering)> {
    let n = t.n;
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        labels.push(one_hot_index(t.x_row(i)).ok_or_else(|| {
            Error::MalformedTensor(format!("row {i} of X is not one-hot"))
        })?);
    }
    let mut g = LabeledGraph::new(t.a, t.b, labels)
        .map_err(|e| Error::MalformedTensor(e.to_string()))?;
    for i in 0..n {
        if t.a_entry(i, i).iter().any(|&v| v != 0) {
            return Err(Error::MalformedTensor(format!("A[{i}][{i}] is not zero")));
        }
        for j in i + 1..n {
            let upper = t.a_entry(i, j);
            if upper != t.a_entry(j, i) {
                return Err(Error::MalformedTensor(format!("A[{i}][{j}] differs from A[{j}][{i}]")));
            }
            if upper.iter().all(|&v| v == 0) {
                continue;
            }
            let l = one_hot_index(upper).ok_or_else(|| {
                Error::MalformedTensor(format!("A[{i}][{j}] is neither zero nor one-hot"))
            })?;
            g.add_edge(i, j, l)
                .map_err(|e| Error::MalformedTensor(e.to_string()))?;
        }
    }
    Ok((g, NodeOrdering::identity(n)))
}

fn one_hot_index(row: &[u8]) -> Option<usize> {
    let mut hit = None;
    for (k, &v) in row.iter().enumerate() {
        match v {
            0 => {}
            1 if hit.is_none() => hit = Some(k),
            _ => return None,
        }
    }
    hit
}
