//! Corpus comparison: NSPDK graph kernel MMD, statistic MMDs over degree,
//! clustering and 4-node orbit counts, and uniqueness/novelty ratios.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{graph_statistics, wl_fingerprint, LabeledGraph};
use crate::hash::{hash_sorted, mix};

pub const DEFAULT_RADIUS: usize = 3;
pub const DEFAULT_DISTANCE: usize = 4;
const REFINEMENT_ROUNDS: usize = 3;

/// Sparse NSPDK feature vector, one sorted `(key, count)` list per
/// `(radius, distance)` cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureMap {
    radius: usize,
    distance: usize,
    cells: BTreeMap<(usize, usize), Vec<(u64, u32)>>,
}

impl FeatureMap {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn distance(&self) -> usize {
        self.distance
    }

    /// Every feature as `(radius, distance, key, count)`.
    pub fn features(&self) -> impl Iterator<Item = (usize, usize, u64, u32)> + '_ {
        self.cells
            .iter()
            .flat_map(|(&(r, d), fs)| fs.iter().map(move |&(k, c)| (r, d, k, c)))
    }

    pub fn len(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// BFS distances from `root`, stopping beyond `limit`.
fn bounded_bfs(g: &LabeledGraph, root: usize, limit: usize) -> Vec<(usize, usize)> {
    let mut seen = BTreeMap::new();
    seen.insert(root, 0usize);
    let mut order = vec![(root, 0)];
    let mut queue = VecDeque::from([root]);
    while let Some(v) = queue.pop_front() {
        let d = seen[&v];
        if d == limit {
            continue;
        }
        for &w in g.neighbors(v) {
            if let std::collections::btree_map::Entry::Vacant(e) = seen.entry(w) {
                e.insert(d + 1);
                order.push((w, d + 1));
                queue.push_back(w);
            }
        }
    }
    order
}

/// Hash of the radius-`r` neighborhood subgraph rooted at the first entry of
/// `ball` (nodes with their distance from the root, BFS order).
fn rooted_hash(g: &LabeledGraph, ball: &[(usize, usize)], r: usize) -> u64 {
    let members: Vec<(usize, usize)> = ball.iter().copied().filter(|&(_, d)| d <= r).collect();
    let index: BTreeMap<usize, usize> = members.iter().enumerate().map(|(i, &(v, _))| (v, i)).collect();
    let mut colors: Vec<u64> = members
        .iter()
        .map(|&(v, d)| mix(g.node_label(v) as u64, d as u64))
        .collect();
    for _ in 0..REFINEMENT_ROUNDS {
        colors = members
            .iter()
            .enumerate()
            .map(|(i, &(v, _))| {
                let nb = g
                    .neighbors(v)
                    .iter()
                    .filter_map(|w| index.get(w).map(|&j| mix(colors[j], g.edge_label(v, *w).unwrap() as u64)))
                    .collect();
                mix(colors[i], hash_sorted(nb))
            })
            .collect();
    }
    mix(mix(colors[0], members.len() as u64), hash_sorted(colors))
}

/// NSPDK features: for every unordered node pair at distance `d <= distance`
/// and every radius `r <= radius`, the pair of rooted radius-`r`
/// neighborhood hashes.
pub fn nspdk_features(g: &LabeledGraph, radius: usize, distance: usize) -> FeatureMap {
    let n = g.n();
    let balls: Vec<Vec<(usize, usize)>> = (0..n).map(|v| bounded_bfs(g, v, radius.max(distance))).collect();
    let hashes: Vec<Vec<u64>> = balls
        .iter()
        .map(|ball| (0..=radius).map(|r| rooted_hash(g, ball, r)).collect())
        .collect();
    let mut counts: BTreeMap<(usize, usize), BTreeMap<u64, u32>> = BTreeMap::new();
    for (u, ball) in balls.iter().enumerate() {
        for &(v, d) in ball {
            if v < u || d > distance {
                continue;
            }
            for r in 0..=radius {
                let (a, b) = (hashes[u][r], hashes[v][r]);
                let key = mix(a.min(b), a.max(b));
                *counts.entry((r, d)).or_default().entry(key).or_insert(0) += 1;
            }
        }
    }
    FeatureMap {
        radius,
        distance,
        cells: counts.into_iter().map(|(c, m)| (c, m.into_iter().collect())).collect(),
    }
}

fn sparse_dot(a: &[(u64, u32)], b: &[(u64, u32)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += a[i].1 as f64 * b[j].1 as f64;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Normalized NSPDK kernel. Each `(radius, distance)` cell is scaled to unit
/// norm; the result is the cosine between the concatenated cell vectors, so
/// `k(G, G) = 1` even when some cells are empty.
pub fn nspdk_kernel(f1: &FeatureMap, f2: &FeatureMap) -> Result<f64> {
    if (f1.radius, f1.distance) != (f2.radius, f2.distance) {
        return Err(Error::Argument(format!(
            "feature maps built with (R, D) = ({}, {}) and ({}, {})",
            f1.radius, f1.distance, f2.radius, f2.distance
        )));
    }
    let mut dot = 0.0;
    for (cell, a) in &f1.cells {
        if let Some(b) = f2.cells.get(cell) {
            dot += sparse_dot(a, b) / (sparse_dot(a, a) * sparse_dot(b, b)).sqrt();
        }
    }
    let norm = ((f1.cells.len() * f2.cells.len()) as f64).sqrt();
    Ok(if norm == 0.0 { 0.0 } else { dot / norm })
}

/// Pairwise kernel values `k(a_i, b_j)`.
pub fn kernel_matrix(a: &[FeatureMap], b: &[FeatureMap]) -> Result<Vec<Vec<f64>>> {
    a.iter()
        .map(|x| b.iter().map(|y| nspdk_kernel(x, y)).collect())
        .collect()
}

/// Biased (V-statistic) squared MMD; tiny negative round-off is clamped to 0.
pub fn mmd_squared<T, K>(p: &[T], q: &[T], kernel: K) -> Result<f64>
where
    K: Fn(&T, &T) -> f64,
{
    if p.is_empty() || q.is_empty() {
        return Err(Error::Argument("MMD needs two non-empty sets".into()));
    }
    let mean = |x: &[T], y: &[T]| {
        let total: f64 = x.iter().map(|a| y.iter().map(|b| kernel(a, b)).sum::<f64>()).sum();
        total / (x.len() * y.len()) as f64
    };
    Ok((mean(p, p) - 2.0 * mean(p, q) + mean(q, q)).max(0.0))
}

#[cfg(feature = "parallel")]
fn features_of(graphs: &[LabeledGraph], radius: usize, distance: usize) -> Vec<FeatureMap> {
    use rayon::prelude::*;
    graphs.par_iter().map(|g| nspdk_features(g, radius, distance)).collect()
}

#[cfg(not(feature = "parallel"))]
fn features_of(graphs: &[LabeledGraph], radius: usize, distance: usize) -> Vec<FeatureMap> {
    graphs.iter().map(|g| nspdk_features(g, radius, distance)).collect()
}

/// Largest corpus evaluated without subsampling.
pub const GK_FULL_LIMIT: usize = 200;
pub const GK_SUBSAMPLE: usize = 100;
pub const GK_DRAWS: usize = 10;

/// NSPDK-kernel MMD² between two corpora. When either exceeds
/// [`GK_FULL_LIMIT`] graphs the value is averaged over [`GK_DRAWS`] seeded
/// subsamples of [`GK_SUBSAMPLE`] graphs per corpus.
pub fn gk_mmd(generated: &[LabeledGraph], reference: &[LabeledGraph], seed: u64) -> Result<f64> {
    gk_mmd_with(generated, reference, DEFAULT_RADIUS, DEFAULT_DISTANCE, seed)
}

pub fn gk_mmd_with(
    generated: &[LabeledGraph],
    reference: &[LabeledGraph],
    radius: usize,
    distance: usize,
    seed: u64,
) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::Argument("MMD needs two non-empty sets".into()));
    }
    let fp = features_of(generated, radius, distance);
    let fq = features_of(reference, radius, distance);
    let k = |a: &FeatureMap, b: &FeatureMap| nspdk_kernel(a, b).expect("same (R, D)");
    if generated.len() <= GK_FULL_LIMIT && reference.len() <= GK_FULL_LIMIT {
        return mmd_squared(&fp, &fq, k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..GK_DRAWS {
        let pick = |f: &[FeatureMap], rng: &mut ChaCha8Rng| -> Vec<FeatureMap> {
            if f.len() <= GK_SUBSAMPLE {
                return f.to_vec();
            }
            sample(rng, f.len(), GK_SUBSAMPLE).into_iter().map(|i| f[i].clone()).collect()
        };
        let sp = pick(&fp, &mut rng);
        let sq = pick(&fq, &mut rng);
        total += mmd_squared(&sp, &sq, k)?;
    }
    Ok(total / GK_DRAWS as f64)
}

/// 4-node graphlet orbits 4..=14, stored at indices 0..11.
pub const ORBITS: usize = 11;

/// Per-node counts of the orbits of connected 4-node induced subgraphs
/// (labels ignored). Index `k` holds orbit `k + 4`:
/// path end/middle (4, 5), star leaf/center (6, 7), 4-cycle (8),
/// paw pendant/degree-2/center (9, 10, 11), diamond degree-2/degree-3
/// (12, 13), complete graph (14).
pub fn orbit_counts(g: &LabeledGraph) -> Vec<[u64; ORBITS]> {
    let mut counts = vec![[0u64; ORBITS]; g.n()];
    if g.n() < 4 {
        return counts;
    }
    // ESU enumeration: each connected 4-set is visited exactly once.
    for v in 0..g.n() {
        let ext: Vec<usize> = g.neighbors(v).iter().copied().filter(|&w| w > v).collect();
        extend(g, &mut vec![v], ext, v, &mut counts);
    }
    counts
}

fn extend(g: &LabeledGraph, sub: &mut Vec<usize>, mut ext: Vec<usize>, root: usize, counts: &mut [[u64; ORBITS]]) {
    if sub.len() == 4 {
        classify(g, sub, counts);
        return;
    }
    while let Some(w) = ext.pop() {
        let mut next = ext.clone();
        for &u in g.neighbors(w) {
            if u > root && !sub.contains(&u) && !next.contains(&u) && !sub.iter().any(|&s| g.has_edge(s, u)) {
                next.push(u);
            }
        }
        sub.push(w);
        extend(g, sub, next, root, counts);
        sub.pop();
    }
}

/// Adds the orbit of each node of the connected 4-set `nodes`.
pub(crate) fn classify(g: &LabeledGraph, nodes: &[usize], counts: &mut [[u64; ORBITS]]) {
    let deg: Vec<usize> = nodes
        .iter()
        .map(|&a| nodes.iter().filter(|&&b| g.has_edge(a, b)).count())
        .collect();
    let edges = deg.iter().sum::<usize>() / 2;
    let max = *deg.iter().max().expect("four nodes");
    for (i, &v) in nodes.iter().enumerate() {
        let orbit = match (edges, max, deg[i]) {
            (3, 2, 1) => 4,
            (3, 2, _) => 5,
            (3, 3, 1) => 6,
            (3, 3, _) => 7,
            (4, 2, _) => 8,
            (4, 3, 1) => 9,
            (4, 3, 2) => 10,
            (4, 3, _) => 11,
            (5, _, 2) => 12,
            (5, _, _) => 13,
            _ => 14,
        };
        counts[v][orbit - 4] += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Degree,
    Clustering,
    Orbit,
}

pub const STATISTIC_SIGMA: f64 = 1.0;
pub const CLUSTERING_BINS: usize = 100;

fn normalized_histogram(values: impl Iterator<Item = usize>, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    let mut total = 0.0;
    for v in values {
        h[v.min(bins - 1)] += 1.0;
        total += 1.0;
    }
    if total > 0.0 {
        h.iter_mut().for_each(|x| *x /= total);
    }
    h
}

/// First Wasserstein distance between histograms on a common unit-spaced
/// support.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let (mut ca, mut cb, mut w) = (0.0, 0.0, 0.0);
    for i in 0..a.len().max(b.len()) {
        ca += a.get(i).copied().unwrap_or(0.0);
        cb += b.get(i).copied().unwrap_or(0.0);
        w += (ca - cb).abs();
    }
    w
}

fn gaussian(distance: f64) -> f64 {
    (-distance * distance / (2.0 * STATISTIC_SIGMA * STATISTIC_SIGMA)).exp()
}

fn clustering_bin(c: f64) -> usize {
    ((c * CLUSTERING_BINS as f64) as usize).min(CLUSTERING_BINS - 1)
}

/// Mean orbit-count vector over the nodes of `g`.
pub fn mean_orbit_vector(g: &LabeledGraph) -> [f64; ORBITS] {
    let counts = orbit_counts(g);
    let mut mean = [0.0; ORBITS];
    for c in &counts {
        for k in 0..ORBITS {
            mean[k] += c[k] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= g.n().max(1) as f64);
    mean
}

/// MMD² between per-graph statistic distributions. Degree and clustering
/// histograms are compared with a Gaussian of their first Wasserstein
/// distance (in bins); orbit vectors with a Gaussian of Euclidean distance.
pub fn statistic_mmd(p: &[LabeledGraph], q: &[LabeledGraph], statistic: Statistic) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::Argument("MMD needs two non-empty sets".into()));
    }
    match statistic {
        Statistic::Degree => {
            let bins = p
                .iter()
                .chain(q)
                .flat_map(|g| (0..g.n()).map(move |v| g.degree(v)))
                .max()
                .unwrap_or(0)
                + 1;
            let hist = |gs: &[LabeledGraph]| -> Vec<Vec<f64>> {
                gs.iter()
                    .map(|g| normalized_histogram((0..g.n()).map(|v| g.degree(v)), bins))
                    .collect()
            };
            mmd_squared(&hist(p), &hist(q), |a, b| gaussian(wasserstein1(a, b)))
        }
        Statistic::Clustering => {
            let hist = |gs: &[LabeledGraph]| -> Vec<Vec<f64>> {
                gs.iter()
                    .map(|g| {
                        let c = graph_statistics(g).clustering;
                        normalized_histogram(c.into_iter().map(clustering_bin), CLUSTERING_BINS)
                    })
                    .collect()
            };
            mmd_squared(&hist(p), &hist(q), |a, b| gaussian(wasserstein1(a, b)))
        }
        Statistic::Orbit => {
            let vecs = |gs: &[LabeledGraph]| -> Vec<[f64; ORBITS]> { gs.iter().map(mean_orbit_vector).collect() };
            mmd_squared(&vecs(p), &vecs(q), |a, b| {
                gaussian(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
            })
        }
    }
}

/// Fraction of distinct samples, and fraction of samples that are distinct
/// and absent from `train` (both over the number of samples). Identity is
/// judged by [`wl_fingerprint`].
pub fn uniqueness_novelty(samples: &[LabeledGraph], train: &[LabeledGraph]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Argument("no samples".into()));
    }
    let seen: BTreeSet<u64> = train.iter().map(wl_fingerprint).collect();
    let unique: BTreeSet<u64> = samples.iter().map(wl_fingerprint).collect();
    let novel = unique.iter().filter(|h| !seen.contains(h)).count();
    let n = samples.len() as f64;
    Ok((unique.len() as f64 / n, novel as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub gk_mmd2: f64,
    pub degree_mmd2: f64,
    pub clustering_mmd2: f64,
    pub orbit_mmd2: f64,
    pub unique_ratio: f64,
    pub novel_ratio: f64,
    pub generated: usize,
    pub reference: usize,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "gk_mmd2,degree_mmd2,clustering_mmd2,orbit_mmd2,unique_ratio,novel_ratio,generated,reference";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.gk_mmd2,
            self.degree_mmd2,
            self.clustering_mmd2,
            self.orbit_mmd2,
            self.unique_ratio,
            self.novel_ratio,
            self.generated,
            self.reference
        )
    }
}

/// Full comparison of `generated` against `reference`; novelty is judged
/// against `train`.
pub fn evaluate(
    generated: &[LabeledGraph],
    reference: &[LabeledGraph],
    train: &[LabeledGraph],
    seed: u64,
) -> Result<EvalReport> {
    let (unique_ratio, novel_ratio) = uniqueness_novelty(generated, train)?;
    Ok(EvalReport {
        gk_mmd2: gk_mmd(generated, reference, seed)?,
        degree_mmd2: statistic_mmd(generated, reference, Statistic::Degree)?,
        clustering_mmd2: statistic_mmd(generated, reference, Statistic::Clustering)?,
        orbit_mmd2: statistic_mmd(generated, reference, Statistic::Orbit)?,
        unique_ratio,
        novel_ratio,
        generated: generated.len(),
        reference: reference.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(n: usize, labels: Vec<usize>, edges: &[(usize, usize)]) -> LabeledGraph {
        let e: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 0)).collect();
        LabeledGraph::from_parts(3, 1, labels, &e).unwrap_or_else(|_| panic!("bad graph of {n} nodes"))
    }

    #[test]
    fn single_node_has_one_feature() {
        let f = nspdk_features(&g(1, vec![0], &[]), 0, 0);
        assert_eq!(f.len(), 1);
        assert!((nspdk_kernel(&f, &f).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_alphabets_are_orthogonal() {
        let a = nspdk_features(&g(2, vec![0, 0], &[(0, 1)]), 2, 2);
        let b = nspdk_features(&g(2, vec![1, 1], &[(0, 1)]), 2, 2);
        assert_eq!(nspdk_kernel(&a, &b).unwrap(), 0.0);
        let c = nspdk_features(&g(2, vec![1, 1], &[(0, 1)]), 1, 2);
        assert!(nspdk_kernel(&a, &c).is_err());
    }

    #[test]
    fn label_change_changes_features() {
        let a = nspdk_features(&g(3, vec![0, 0, 0], &[(0, 1), (1, 2)]), 1, 1);
        let b = nspdk_features(&g(3, vec![0, 2, 0], &[(0, 1), (1, 2)]), 1, 1);
        assert_ne!(a, b);
    }

    #[test]
    fn closed_form_single_elements() {
        let k = |a: &f64, b: &f64| (-(a - b).powi(2)).exp();
        let m = mmd_squared(&[0.0], &[1.0], k).unwrap();
        assert!((m - (2.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-15);
        assert!(mmd_squared::<f64, _>(&[], &[1.0], k).is_err());
    }

    #[test]
    fn orbits_of_small_graphs() {
        let k4 = g(4, vec![0; 4], &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert!(orbit_counts(&k4).iter().all(|c| c[10] == 1 && c.iter().sum::<u64>() == 1));
        let p4 = g(4, vec![0; 4], &[(0, 1), (1, 2), (2, 3)]);
        let c = orbit_counts(&p4);
        assert_eq!((c[0][0], c[1][1], c[2][1], c[3][0]), (1, 1, 1, 1));
        let c4 = g(4, vec![0; 4], &[(0, 1), (1, 2), (2, 3), (0, 3)]);
        assert!(orbit_counts(&c4).iter().all(|c| c[4] == 1 && c.iter().sum::<u64>() == 1));
        let paw = g(4, vec![0; 4], &[(0, 1), (1, 2), (0, 2), (2, 3)]);
        let c = orbit_counts(&paw);
        assert_eq!((c[3][5], c[0][6], c[1][6], c[2][7]), (1, 1, 1, 1));
    }

    #[test]
    fn uniqueness_and_novelty() {
        let a = g(2, vec![0, 0], &[(0, 1)]);
        let b = g(2, vec![0, 1], &[(0, 1)]);
        let (u, nov) = uniqueness_novelty(&[a.clone(), a.clone(), a.clone(), a.clone()], &[]).unwrap();
        assert_eq!((u, nov), (0.25, 0.25));
        let (u, nov) = uniqueness_novelty(&[a.clone(), b], &[a]).unwrap();
        assert_eq!((u, nov), (1.0, 0.5));
    }

    #[test]
    fn wasserstein_shift() {
        assert_eq!(wasserstein1(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]), 2.0);
        assert_eq!(wasserstein1(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }
}
