//! Exact labeled isomorphism for small graphs and a refinement fingerprint.

use std::collections::BTreeMap;

use super::LabeledGraph;
use crate::hash::{hash_sorted, mix};

/// Exact test for a label-preserving isomorphism. Backtracking with label and
/// degree pruning; intended for graphs of a few dozen nodes.
pub fn is_isomorphic(g: &LabeledGraph, h: &LabeledGraph) -> bool {
    if g.n() != h.n() || g.num_edges() != h.num_edges() {
        return false;
    }
    let n = g.n();
    let signature = |x: &LabeledGraph, v: usize| (x.node_label(v), x.degree(v));
    let mut gs: Vec<_> = (0..n).map(|v| signature(g, v)).collect();
    let mut hs: Vec<_> = (0..n).map(|v| signature(h, v)).collect();
    gs.sort_unstable();
    hs.sort_unstable();
    if gs != hs {
        return false;
    }
    let mut eg: Vec<_> = g.edges().map(|(_, _, l)| l).collect();
    let mut eh: Vec<_> = h.edges().map(|(_, _, l)| l).collect();
    eg.sort_unstable();
    eh.sort_unstable();
    if eg != eh {
        return false;
    }

    // Match nodes of g in BFS-ish order so each new node has mapped neighbors.
    let order = matching_order(g);
    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(g, h, &order, 0, &mut map, &mut used)
}

fn matching_order(g: &LabeledGraph) -> Vec<usize> {
    let n = g.n();
    let mut order = Vec::with_capacity(n);
    let mut placed = vec![false; n];
    while order.len() < n {
        // Prefer the unplaced node with most placed neighbors, then highest degree.
        let next = (0..n)
            .filter(|&v| !placed[v])
            .max_by_key(|&v| {
                let linked = g.neighbors(v).iter().filter(|&&w| placed[w]).count();
                (linked, g.degree(v), std::cmp::Reverse(v))
            })
            .expect("unplaced node");
        placed[next] = true;
        order.push(next);
    }
    order
}

fn extend(
    g: &LabeledGraph,
    h: &LabeledGraph,
    order: &[usize],
    depth: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let v = order[depth];
    for w in 0..h.n() {
        if used[w] || h.node_label(w) != g.node_label(v) || h.degree(w) != g.degree(v) {
            continue;
        }
        let consistent = order[..depth].iter().all(|&u| {
            let mu = map[u];
            g.edge_label(u, v) == h.edge_label(mu, w)
        });
        if !consistent {
            continue;
        }
        map[v] = w;
        used[w] = true;
        if extend(g, h, order, depth + 1, map, used) {
            return true;
        }
        used[w] = false;
        map[v] = usize::MAX;
    }
    false
}

/// Weisfeiler-Lehman style fingerprint with node and edge labels. Colors are
/// refined until the partition stops splitting (at most `n` rounds). Equal
/// graphs up to isomorphism always share a fingerprint; the converse can fail
/// on hard instances such as some regular graphs.
pub fn wl_fingerprint(g: &LabeledGraph) -> u64 {
    let n = g.n();
    let mut colors: Vec<u64> = (0..n).map(|v| mix(0x9e37, g.node_label(v) as u64)).collect();
    let mut classes = count_classes(&colors);
    let mut history = vec![hash_sorted(colors.clone())];
    for _ in 0..n.max(1) {
        let next: Vec<u64> = (0..n)
            .map(|v| {
                let nb: Vec<u64> = g
                    .neighbors(v)
                    .iter()
                    .map(|&w| mix(colors[w], g.edge_label(v, w).unwrap() as u64))
                    .collect();
                mix(colors[v], hash_sorted(nb))
            })
            .collect();
        let next_classes = count_classes(&next);
        colors = next;
        history.push(hash_sorted(colors.clone()));
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    let mut h = mix(n as u64, g.num_edges() as u64);
    for x in history {
        h = mix(h, x);
    }
    h
}

fn count_classes(colors: &[u64]) -> usize {
    let mut m = BTreeMap::new();
    for &c in colors {
        *m.entry(c).or_insert(0usize) += 1;
    }
    m.len()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relabeled_cycle_is_isomorphic() {
        let c = LabeledGraph::from_parts(2, 1, vec![0, 1, 0, 1], &[(0, 1, 0), (1, 2, 0), (2, 3, 0), (0, 3, 0)])
            .unwrap();
        let d = LabeledGraph::from_parts(2, 1, vec![1, 0, 1, 0], &[(0, 1, 0), (1, 2, 0), (2, 3, 0), (0, 3, 0)])
            .unwrap();
        assert!(is_isomorphic(&c, &d));
        assert_eq!(wl_fingerprint(&c), wl_fingerprint(&d));
    }

    #[test]
    fn labels_matter() {
        let g = LabeledGraph::from_parts(2, 2, vec![0, 0], &[(0, 1, 0)]).unwrap();
        let h = LabeledGraph::from_parts(2, 2, vec![0, 0], &[(0, 1, 1)]).unwrap();
        assert!(!is_isomorphic(&g, &h));
        assert_ne!(wl_fingerprint(&g), wl_fingerprint(&h));
    }

    #[test]
    fn path_is_not_star() {
        let p = LabeledGraph::from_parts(1, 1, vec![0; 4], &[(0, 1, 0), (1, 2, 0), (2, 3, 0)]).unwrap();
        let s = LabeledGraph::from_parts(1, 1, vec![0; 4], &[(0, 1, 0), (0, 2, 0), (0, 3, 0)]).unwrap();
        assert!(!is_isomorphic(&p, &s));
    }
}
