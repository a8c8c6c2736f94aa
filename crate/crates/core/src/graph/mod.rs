//! Labeled undirected graphs and the structural queries the generator needs.
//!
//! Nodes carry a label in `[0, a)` and edges a label in `[0, b)`. Self-loops
//! and multi-edges are rejected at construction, so every `LabeledGraph` in
//! circulation satisfies its invariants.

mod io;
mod iso;
mod ordering;
mod paths;
mod tensors;

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{parse_corpus, read_corpus, write_corpus, write_corpus_to};
pub use iso::{is_isomorphic, wl_fingerprint};
pub use ordering::{bfs_ordering, frontier_nodes, random_bfs_ordering, NodeOrdering};
pub use paths::{graph_statistics, shortest_paths, DistanceMatrix, GraphStats};
pub use tensors::{from_tensors, to_tensors, TensorPair};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledGraph {
    node_alphabet: usize,
    edge_alphabet: usize,
    node_labels: Vec<usize>,
    /// Keyed by `(u, v)` with `u < v`.
    edges: BTreeMap<(usize, usize), usize>,
    adjacency: Vec<Vec<usize>>,
}

impl LabeledGraph {
    /// Edgeless graph with the given node labels.
    pub fn new(node_alphabet: usize, edge_alphabet: usize, node_labels: Vec<usize>) -> Result<Self> {
        if node_alphabet == 0 {
            return Err(Error::InvalidGraph("node alphabet must be non-empty".into()));
        }
        if let Some((v, &l)) = node_labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l >= node_alphabet)
        {
            return Err(Error::InvalidGraph(format!(
                "node {v} has label {l} outside alphabet of size {node_alphabet}"
            )));
        }
        let n = node_labels.len();
        Ok(Self {
            node_alphabet,
            edge_alphabet,
            node_labels,
            edges: BTreeMap::new(),
            adjacency: vec![Vec::new(); n],
        })
    }

    pub fn from_parts(
        node_alphabet: usize,
        edge_alphabet: usize,
        node_labels: Vec<usize>,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let mut g = Self::new(node_alphabet, edge_alphabet, node_labels)?;
        for &(u, v, l) in edges {
            g.add_edge(u, v, l)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, u: usize, v: usize, label: usize) -> Result<()> {
        let n = self.n();
        if u >= n || v >= n {
            return Err(Error::InvalidGraph(format!(
                "edge ({u},{v}) has an endpoint outside 0..{n}"
            )));
        }
        if u == v {
            return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
        }
        if label >= self.edge_alphabet {
            return Err(Error::InvalidGraph(format!(
                "edge ({u},{v}) has label {label} outside alphabet of size {}",
                self.edge_alphabet
            )));
        }
        let key = (u.min(v), u.max(v));
        if self.edges.contains_key(&key) {
            return Err(Error::InvalidGraph(format!("duplicate edge ({},{})", key.0, key.1)));
        }
        self.edges.insert(key, label);
        insert_sorted(&mut self.adjacency[u], v);
        insert_sorted(&mut self.adjacency[v], u);
        Ok(())
    }

    /// Appends a node and returns its index.
    pub fn add_node(&mut self, label: usize) -> Result<usize> {
        if label >= self.node_alphabet {
            return Err(Error::InvalidGraph(format!(
                "label {label} outside alphabet of size {}",
                self.node_alphabet
            )));
        }
        self.node_labels.push(label);
        self.adjacency.push(Vec::new());
        Ok(self.node_labels.len() - 1)
    }

    pub fn n(&self) -> usize {
        self.node_labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn node_alphabet(&self) -> usize {
        self.node_alphabet
    }

    pub fn edge_alphabet(&self) -> usize {
        self.edge_alphabet
    }

    pub fn node_label(&self, v: usize) -> usize {
        self.node_labels[v]
    }

    pub fn node_labels(&self) -> &[usize] {
        &self.node_labels
    }

    pub fn edge_label(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.get(&(u.min(v), u.max(v))).copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_label(u, v).is_some()
    }

    /// Sorted neighbor list.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Edges as `(u, v, label)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.edges.iter().map(|(&(u, v), &l)| (u, v, l))
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = queue.pop_front() {
            for &w in &self.adjacency[u] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == n
    }

    /// Induced subgraph on `nodes`; node `i` of the result is `nodes[i]`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Self {
        let mut index = vec![usize::MAX; self.n()];
        for (i, &v) in nodes.iter().enumerate() {
            index[v] = i;
        }
        let labels = nodes.iter().map(|&v| self.node_labels[v]).collect();
        let mut sub = Self::new(self.node_alphabet, self.edge_alphabet, labels)
            .expect("labels already validated");
        for (i, &v) in nodes.iter().enumerate() {
            for &w in &self.adjacency[v] {
                let j = index[w];
                if j != usize::MAX && i < j {
                    let l = self.edge_label(v, w).expect("adjacent");
                    sub.add_edge(i, j, l).expect("valid edge");
                }
            }
        }
        sub
    }

    /// The subgraph on the first `s` nodes.
    pub fn prefix(&self, s: usize) -> Self {
        let nodes: Vec<usize> = (0..s.min(self.n())).collect();
        self.induced_subgraph(&nodes)
    }

    /// Relabels nodes so that node `i` of the result is `ord.perm()[i]` of `self`.
    pub fn reorder(&self, ord: &NodeOrdering) -> Result<Self> {
        if ord.len() != self.n() {
            return Err(Error::Argument(format!(
                "ordering has length {} but graph has {} nodes",
                ord.len(),
                self.n()
            )));
        }
        Ok(self.induced_subgraph(ord.perm()))
    }

    /// Same topology with every label removed (alphabets of size 1).
    pub fn unlabeled(&self) -> Self {
        let mut g = Self::new(1, 1, vec![0; self.n()]).expect("alphabet 1");
        for (u, v, _) in self.edges() {
            g.add_edge(u, v, 0).expect("valid edge");
        }
        g
    }

    pub fn to_record(&self) -> GraphRecord {
        GraphRecord {
            a: self.node_alphabet,
            b: self.edge_alphabet,
            nodes: self.node_labels.clone(),
            edges: self.edges().map(|(u, v, l)| [u, v, l]).collect(),
        }
    }

    pub fn from_record(record: &GraphRecord) -> Result<Self> {
        let mut g = Self::new(record.a, record.b, record.nodes.clone())?;
        for &[u, v, l] in &record.edges {
            if u >= v {
                return Err(Error::InvalidGraph(format!(
                    "edge [{u},{v},{l}] must satisfy u < v"
                )));
            }
            g.add_edge(u, v, l)?;
        }
        Ok(g)
    }
}

/// Serialized form of one graph: `{"a":..,"b":..,"nodes":[..],"edges":[[u,v,label],..]}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub a: usize,
    pub b: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<[usize; 3]>,
}

fn insert_sorted(list: &mut Vec<usize>, v: usize) {
    let pos = list.binary_search(&v).unwrap_or_else(|p| p);
    list.insert(pos, v);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_edges() {
        let mut g = LabeledGraph::new(2, 2, vec![0, 1, 0]).unwrap();
        assert!(g.add_edge(0, 0, 0).is_err());
        assert!(g.add_edge(0, 3, 0).is_err());
        assert!(g.add_edge(0, 1, 2).is_err());
        g.add_edge(0, 1, 1).unwrap();
        assert!(g.add_edge(1, 0, 0).is_err());
        assert!(LabeledGraph::new(2, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn record_requires_ordered_endpoints() {
        let rec = GraphRecord {
            a: 1,
            b: 1,
            nodes: vec![0, 0],
            edges: vec![[1, 0, 0]],
        };
        assert!(LabeledGraph::from_record(&rec).is_err());
    }

    #[test]
    fn induced_subgraph_keeps_labels() {
        let g = LabeledGraph::from_parts(3, 2, vec![0, 1, 2, 0], &[(0, 1, 0), (1, 2, 1), (2, 3, 0)])
            .unwrap();
        let sub = g.induced_subgraph(&[2, 1]);
        assert_eq!(sub.node_labels(), &[2, 1]);
        assert_eq!(sub.edge_label(0, 1), Some(1));
        assert_eq!(g.prefix(2).num_edges(), 1);
    }
}
