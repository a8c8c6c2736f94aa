use std::collections::VecDeque;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::Rng;

use super::LabeledGraph;
use crate::error::{Error, Result};

/// Position `i` holds the original index of the `i`-th generated node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeOrdering {
    perm: Vec<usize>,
}

impl NodeOrdering {
    pub fn new(perm: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; perm.len()];
        for &p in &perm {
            if p >= perm.len() || seen[p] {
                return Err(Error::Ordering(format!("{perm:?} is not a permutation")));
            }
            seen[p] = true;
        }
        Ok(Self { perm })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            perm: (0..n).collect(),
        }
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// `positions()[v]` is the position of original node `v`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.perm.len()];
        for (i, &v) in self.perm.iter().enumerate() {
            pos[v] = i;
        }
        pos
    }

    pub fn inverse(&self) -> Self {
        Self {
            perm: self.positions(),
        }
    }
}

/// Breadth-first visit order from `start`. Unvisited neighbors of each dequeued
/// node are enqueued in a uniformly shuffled order drawn from `rng`.
pub fn bfs_ordering<R: Rng + ?Sized>(g: &LabeledGraph, start: usize, rng: &mut R) -> Result<NodeOrdering> {
    let n = g.n();
    if start >= n {
        return Err(Error::Argument(format!("start node {start} outside 0..{n}")));
    }
    let mut seen = vec![false; n];
    let mut perm = Vec::with_capacity(n);
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    let mut fresh = Vec::new();
    while let Some(u) = queue.pop_front() {
        perm.push(u);
        fresh.clear();
        fresh.extend(g.neighbors(u).iter().copied().filter(|&w| !seen[w]));
        fresh.shuffle(rng);
        for &w in &fresh {
            seen[w] = true;
            queue.push_back(w);
        }
    }
    if perm.len() != n {
        return Err(Error::Ordering(format!(
            "graph is disconnected: BFS from {start} reached {} of {n} nodes",
            perm.len()
        )));
    }
    Ok(NodeOrdering { perm })
}

/// BFS ordering from a uniformly drawn start node.
pub fn random_bfs_ordering<R: Rng + ?Sized>(g: &LabeledGraph, rng: &mut R) -> Result<NodeOrdering> {
    if g.n() == 0 {
        return Ok(NodeOrdering::identity(0));
    }
    let start = rng.gen_range(0..g.n());
    bfs_ordering(g, start, rng)
}

/// Positions that may connect to the node generated at position `s`: from the
/// earliest neighbor of position `s-1` (within the first `s-1` positions) up to
/// `s-1` itself. Requires `1 <= s <= n`.
pub fn frontier_nodes(g: &LabeledGraph, ord: &NodeOrdering, s: usize) -> Result<Range<usize>> {
    let n = g.n();
    if ord.len() != n {
        return Err(Error::Argument(format!(
            "ordering has length {} but graph has {n} nodes",
            ord.len()
        )));
    }
    if s == 0 || s > n {
        return Err(Error::Argument(format!("step {s} outside 1..={n}")));
    }
    let pos = ord.positions();
    let last = ord.perm[s - 1];
    let start = g
        .neighbors(last)
        .iter()
        .map(|&w| pos[w])
        .filter(|&p| p < s - 1)
        .min()
        .unwrap_or(s - 1);
    Ok(start..s)
}
