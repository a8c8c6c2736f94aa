use std::collections::VecDeque;

use super::LabeledGraph;

/// All-pairs hop distances clipped to `cap + 1`, the shared bucket for
/// "beyond cap" and "unreachable".
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    cap: usize,
    values: Vec<usize>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn get(&self, i: usize, j: usize) -> usize {
        self.values[i * self.n + j]
    }

    pub fn unreachable_bucket(&self) -> usize {
        self.cap + 1
    }
}

pub fn shortest_paths(g: &LabeledGraph, cap: usize) -> DistanceMatrix {
    let n = g.n();
    let far = cap + 1;
    let mut values = vec![far; n * n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        let row = &mut values[src * n..(src + 1) * n];
        row[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            let du = row[u];
            if du >= cap {
                continue;
            }
            for &w in g.neighbors(u) {
                if row[w] == far && w != src {
                    row[w] = du + 1;
                    queue.push_back(w);
                }
            }
        }
    }
    DistanceMatrix { n, cap, values }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphStats {
    pub degrees: Vec<usize>,
    pub clustering: Vec<f64>,
}

pub fn graph_statistics(g: &LabeledGraph) -> GraphStats {
    let n = g.n();
    let degrees: Vec<usize> = (0..n).map(|v| g.degree(v)).collect();
    let clustering = (0..n)
        .map(|v| {
            let nbrs = g.neighbors(v);
            let k = nbrs.len();
            if k < 2 {
                return 0.0;
            }
            let mut links = 0usize;
            for (i, &x) in nbrs.iter().enumerate() {
                for &y in &nbrs[i + 1..] {
                    if g.has_edge(x, y) {
                        links += 1;
                    }
                }
            }
            2.0 * links as f64 / (k * (k - 1)) as f64
        })
        .collect();
    GraphStats { degrees, clustering }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_distances() {
        let g = LabeledGraph::from_parts(1, 1, vec![0; 4], &[(0, 1, 0), (1, 2, 0), (2, 3, 0)]).unwrap();
        let d = shortest_paths(&g, 10);
        assert_eq!(d.get(0, 3), 3);
        assert_eq!(d.get(3, 0), 3);
        assert_eq!(d.get(2, 2), 0);
        let capped = shortest_paths(&g, 2);
        assert_eq!(capped.get(0, 3), 3);
        assert_eq!(capped.get(0, 2), 2);
    }

    #[test]
    fn unreachable_bucket() {
        let g = LabeledGraph::new(1, 1, vec![0, 0]).unwrap();
        assert_eq!(shortest_paths(&g, 5).get(0, 1), 6);
    }

    #[test]
    fn triangle_and_path_statistics() {
        let tri = LabeledGraph::from_parts(1, 1, vec![0; 3], &[(0, 1, 0), (1, 2, 0), (0, 2, 0)]).unwrap();
        let s = graph_statistics(&tri);
        assert_eq!(s.degrees, vec![2, 2, 2]);
        assert_eq!(s.clustering, vec![1.0, 1.0, 1.0]);
        let p = LabeledGraph::from_parts(1, 1, vec![0; 3], &[(0, 1, 0), (1, 2, 0)]).unwrap();
        assert_eq!(graph_statistics(&p).clustering, vec![0.0; 3]);
    }
}
