//! Synthetic labeled graph families and corpus utilities.

use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{frontier_nodes, random_bfs_ordering, LabeledGraph, NodeOrdering};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Grid,
    Lobster,
    Community,
    Ba,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Grid, Family::Lobster, Family::Community, Family::Ba];

    /// Node and edge label alphabet sizes.
    pub fn alphabets(self) -> (usize, usize) {
        match self {
            Family::Grid => (3, 2),
            Family::Lobster => (3, 2),
            Family::Community => (4, 2),
            Family::Ba => (2, 3),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Grid => "grid",
            Family::Lobster => "lobster",
            Family::Community => "community",
            Family::Ba => "ba",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "grid" => Ok(Family::Grid),
            "lobster" => Ok(Family::Lobster),
            "community" => Ok(Family::Community),
            "ba" | "b-a" | "barabasi-albert" => Ok(Family::Ba),
            other => Err(Error::Spec(format!("unknown family {other:?}"))),
        }
    }
}

/// What to generate. Family parameters not used by `family` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub family: Family,
    pub count: usize,
    pub n_min: usize,
    pub n_max: usize,
    pub seed: u64,
    /// Largest allowed ratio between the longer and shorter grid side.
    pub grid_max_aspect: f64,
    pub lobster_p1: f64,
    pub lobster_p2: f64,
    pub community_p_in: f64,
    pub community_p_out: f64,
    pub ba_m: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            family: Family::Grid,
            count: 700,
            n_min: 50,
            n_max: 100,
            seed: 0,
            grid_max_aspect: 2.0,
            lobster_p1: 0.7,
            lobster_p2: 0.3,
            community_p_in: 0.23,
            community_p_out: 0.023,
            ba_m: 4,
        }
    }
}

impl CorpusSpec {
    pub fn new(family: Family, count: usize, n_min: usize, n_max: usize, seed: u64) -> Self {
        Self {
            family,
            count,
            n_min,
            n_max,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min == 0 || self.n_min > self.n_max {
            return Err(Error::Spec(format!("need 0 < n_min <= n_max, got {}..{}", self.n_min, self.n_max)));
        }
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.lobster_p1) || !prob(self.lobster_p2) || !prob(self.community_p_in) || !prob(self.community_p_out)
        {
            return Err(Error::Spec("probabilities must lie in [0, 1]".into()));
        }
        if self.lobster_p1 >= 1.0 && self.family == Family::Lobster {
            return Err(Error::Spec("lobster_p1 must be below 1".into()));
        }
        match self.family {
            Family::Grid if grid_shapes(self).is_empty() => Err(Error::Spec(format!(
                "no grid shape with sides >= 2 and aspect <= {} has {}..={} nodes",
                self.grid_max_aspect, self.n_min, self.n_max
            ))),
            Family::Community if self.n_max / 4 < self.n_min.div_ceil(4).max(1) => Err(Error::Spec(format!(
                "no multiple of 4 in {}..={}",
                self.n_min, self.n_max
            ))),
            Family::Ba if self.ba_m == 0 || self.n_min <= self.ba_m => {
                Err(Error::Spec(format!("B-A needs n_min > m = {}", self.ba_m)))
            }
            _ => Ok(()),
        }
    }
}

/// Generates `spec.count` graphs of `spec.family`.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<LabeledGraph>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|_| match spec.family {
            Family::Grid => Ok(grid_graph(spec, &mut rng)),
            Family::Lobster => Ok(lobster_graph(spec, &mut rng)),
            Family::Community => Ok(community_graph(spec, &mut rng)),
            Family::Ba => Ok(ba_graph(spec, &mut rng)),
        })
        .collect()
}

pub fn gen_grid(spec: &CorpusSpec) -> Result<Vec<LabeledGraph>> {
    generate(&CorpusSpec { family: Family::Grid, ..spec.clone() })
}

pub fn gen_lobster(spec: &CorpusSpec) -> Result<Vec<LabeledGraph>> {
    generate(&CorpusSpec { family: Family::Lobster, ..spec.clone() })
}

pub fn gen_community(spec: &CorpusSpec) -> Result<Vec<LabeledGraph>> {
    generate(&CorpusSpec { family: Family::Community, ..spec.clone() })
}

pub fn gen_ba(spec: &CorpusSpec) -> Result<Vec<LabeledGraph>> {
    generate(&CorpusSpec { family: Family::Ba, ..spec.clone() })
}

/// Ordered (rows, cols) pairs allowed by the spec.
pub fn grid_shapes(spec: &CorpusSpec) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    for h in 2..=spec.n_max / 2 {
        for w in 2..=spec.n_max / h {
            let (lo, hi) = (h.min(w) as f64, h.max(w) as f64);
            if h * w >= spec.n_min && hi / lo <= spec.grid_max_aspect {
                shapes.push((h, w));
            }
        }
    }
    shapes
}

pub const GRID_CORNER: usize = 0;
pub const GRID_EDGE: usize = 1;
pub const GRID_INSIDE: usize = 2;
pub const GRID_HORIZONTAL: usize = 0;
pub const GRID_VERTICAL: usize = 1;

/// `rows x cols` lattice, node `r * cols + c`, labeled by degree and axis.
pub fn grid(rows: usize, cols: usize) -> LabeledGraph {
    let mut g = LabeledGraph::new(3, 2, vec![0; rows * cols]).expect("in-alphabet labels");
    for r in 0..rows {
        for c in 0..cols {
            let v = r * cols + c;
            if c + 1 < cols {
                g.add_edge(v, v + 1, GRID_HORIZONTAL).expect("lattice edge");
            }
            if r + 1 < rows {
                g.add_edge(v, v + cols, GRID_VERTICAL).expect("lattice edge");
            }
        }
    }
    let labels = (0..g.n()).map(|v| grid_label(g.degree(v))).collect();
    LabeledGraph::from_parts(3, 2, labels, &g.edges().collect::<Vec<_>>()).expect("valid grid")
}

fn grid_label(degree: usize) -> usize {
    match degree {
        0..=2 => GRID_CORNER,
        3 => GRID_EDGE,
        _ => GRID_INSIDE,
    }
}

fn grid_graph<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> LabeledGraph {
    let shapes = grid_shapes(spec);
    let &(h, w) = shapes.choose(rng).expect("validated");
    grid(h, w)
}

pub const LOBSTER_BACKBONE: usize = 0;
pub const LOBSTER_BRANCH: usize = 1;
pub const LOBSTER_LEAF: usize = 2;
/// Edge touching a leaf node.
pub const LOBSTER_LEAF_EDGE: usize = 0;
/// Backbone-branch and backbone-backbone edges.
pub const LOBSTER_BRANCH_EDGE: usize = 1;

/// Backbone path of random length; each backbone node gains a branch node
/// with probability `p1`, each branch node a leaf with probability `p2`.
/// Redrawn until the size lies in range.
fn lobster_graph<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> LabeledGraph {
    let (p1, p2) = (spec.lobster_p1, spec.lobster_p2);
    let growth = 1.0 + p1 * (1.0 + p2);
    let lo = ((spec.n_min as f64 / growth) as usize).max(1);
    let hi = ((spec.n_max as f64 / growth) as usize + 1).max(lo);
    loop {
        let backbone = rng.gen_range(lo..=hi);
        let mut labels = vec![LOBSTER_BACKBONE; backbone];
        let mut edges: Vec<(usize, usize, usize)> = (1..backbone).map(|i| (i - 1, i, LOBSTER_BRANCH_EDGE)).collect();
        for b in 0..backbone {
            if rng.gen_bool(p1) {
                let branch = labels.len();
                labels.push(LOBSTER_BRANCH);
                edges.push((b, branch, LOBSTER_BRANCH_EDGE));
                if rng.gen_bool(p2) {
                    let leaf = labels.len();
                    labels.push(LOBSTER_LEAF);
                    edges.push((branch, leaf, LOBSTER_LEAF_EDGE));
                }
            }
        }
        if (spec.n_min..=spec.n_max).contains(&labels.len()) {
            return LabeledGraph::from_parts(3, 2, labels, &edges).expect("valid lobster");
        }
    }
}

pub const COMMUNITY_INTRA: usize = 0;
pub const COMMUNITY_INTER: usize = 1;

/// Four equal blocks with intra/inter edge probabilities, redrawn until
/// connected. Node label = block id.
fn community_graph<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> LabeledGraph {
    let k = rng.gen_range(spec.n_min.div_ceil(4).max(1)..=spec.n_max / 4);
    loop {
        let g = community_draw(k, spec.community_p_in, spec.community_p_out, rng);
        if g.is_connected() {
            return g;
        }
    }
}

/// One unconditioned draw of the four-block model with `k` nodes per block.
pub fn community_draw<R: Rng>(k: usize, p_in: f64, p_out: f64, rng: &mut R) -> LabeledGraph {
    let n = 4 * k;
    let labels: Vec<usize> = (0..n).map(|v| v / k).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let same = labels[u] == labels[v];
            if rng.gen_bool(if same { p_in } else { p_out }) {
                edges.push((u, v, if same { COMMUNITY_INTRA } else { COMMUNITY_INTER }));
            }
        }
    }
    LabeledGraph::from_parts(4, 2, labels, &edges).expect("valid community graph")
}

pub const BA_HUB: usize = 0;
pub const BA_EXTERIOR: usize = 1;
pub const BA_HUB_HUB: usize = 0;
pub const BA_HUB_EXTERIOR: usize = 1;
pub const BA_EXTERIOR_EXTERIOR: usize = 2;

/// Preferential attachment from an `m`-clique, each new node linking to `m`
/// distinct existing nodes chosen proportionally to degree.
fn ba_graph<R: Rng>(spec: &CorpusSpec, rng: &mut R) -> LabeledGraph {
    let n = rng.gen_range(spec.n_min..=spec.n_max);
    let m = spec.ba_m;
    let mut pairs = Vec::new();
    // Each node appears here once per incident edge.
    let mut endpoints = Vec::new();
    for u in 0..m {
        for v in u + 1..m {
            pairs.push((u, v));
            endpoints.extend([u, v]);
        }
    }
    for v in m..n {
        let mut targets: Vec<usize> = Vec::with_capacity(m);
        while targets.len() < m {
            let t = if endpoints.is_empty() {
                rng.gen_range(0..v)
            } else {
                endpoints[rng.gen_range(0..endpoints.len())]
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for t in targets {
            pairs.push((t, v));
            endpoints.extend([t, v]);
        }
    }
    let unlabeled = LabeledGraph::from_parts(1, 1, vec![0; n], &pairs.iter().map(|&(u, v)| (u, v, 0)).collect::<Vec<_>>())
        .expect("valid B-A graph");
    label_ba(&unlabeled)
}

/// Hubs are the top `ceil(n/2)` nodes by degree, ties broken by lower index.
pub fn ba_labels(g: &LabeledGraph) -> Vec<usize> {
    let n = g.n();
    let mut rank: Vec<usize> = (0..n).collect();
    rank.sort_by_key(|&v| (std::cmp::Reverse(g.degree(v)), v));
    let mut labels = vec![BA_EXTERIOR; n];
    for &v in rank.iter().take(n.div_ceil(2)) {
        labels[v] = BA_HUB;
    }
    labels
}

/// Applies the hub/exterior labeling to the topology of `g`.
pub fn label_ba(g: &LabeledGraph) -> LabeledGraph {
    let labels = ba_labels(g);
    let edges: Vec<_> = g
        .edges()
        .map(|(u, v, _)| {
            let l = match (labels[u], labels[v]) {
                (BA_HUB, BA_HUB) => BA_HUB_HUB,
                (BA_EXTERIOR, BA_EXTERIOR) => BA_EXTERIOR_EXTERIOR,
                _ => BA_HUB_EXTERIOR,
            };
            (u, v, l)
        })
        .collect();
    LabeledGraph::from_parts(2, 3, labels, &edges).expect("valid labels")
}

/// Applies the degree/axis labeling to an unlabeled lattice whose node
/// `r * cols + c` sits at row `r`.
pub fn label_grid(g: &LabeledGraph, cols: usize) -> LabeledGraph {
    let labels = (0..g.n()).map(|v| grid_label(g.degree(v))).collect();
    let edges: Vec<_> = g
        .edges()
        .map(|(u, v, _)| (u, v, if v == u + 1 && u / cols == v / cols { GRID_HORIZONTAL } else { GRID_VERTICAL }))
        .collect();
    LabeledGraph::from_parts(3, 2, labels, &edges).expect("valid labels")
}

/// Distance of every node from the nearest `sources` node (multi-source BFS).
pub fn distance_from(g: &LabeledGraph, sources: &[usize]) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.n()];
    let mut queue = VecDeque::new();
    for &s in sources {
        dist[s] = Some(0);
        queue.push_back(s);
    }
    while let Some(v) = queue.pop_front() {
        let d = dist[v].expect("queued nodes have distances");
        for &w in g.neighbors(v) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Seeded shuffle, then contiguous train / test / validation slices.
pub fn split_corpus(
    graphs: &[LabeledGraph],
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(Vec<LabeledGraph>, Vec<LabeledGraph>, Vec<LabeledGraph>)> {
    let (train, test, val) = sizes;
    if train + test + val != graphs.len() {
        return Err(Error::Argument(format!(
            "split {train}+{test}+{val} does not match {} graphs",
            graphs.len()
        )));
    }
    let mut idx: Vec<usize> = (0..graphs.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |r: &[usize]| r.iter().map(|&i| graphs[i].clone()).collect::<Vec<_>>();
    Ok((pick(&idx[..train]), pick(&idx[train..train + test]), pick(&idx[train + test..])))
}

/// Split sizes in the 5:1:1 proportion, rounding toward the training split.
pub fn default_split_sizes(count: usize) -> (usize, usize, usize) {
    let test = count / 7;
    (count - 2 * test, test, test)
}

/// Per-step `(alpha, beta)` of `g` under `ord` for the steps that add nodes
/// `1..n`: alpha counts edges to earlier nodes, beta is the frontier size.
pub fn ordering_profile(g: &LabeledGraph, ord: &NodeOrdering) -> Result<Vec<(usize, usize)>> {
    let pos = ord.positions();
    (1..g.n())
        .map(|s| {
            let v = ord.perm()[s];
            let alpha = g.neighbors(v).iter().filter(|&&u| pos[u] < s).count();
            Ok((alpha, frontier_nodes(g, ord, s)?.len()))
        })
        .collect()
}

/// Corpus summary under one random BFS ordering per graph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub graphs: usize,
    pub mean_nodes: f64,
    pub mean_edges: f64,
    pub mean_degree: f64,
    pub max_degree: usize,
    pub mean_alpha: f64,
    pub mean_beta: f64,
    pub max_beta: usize,
}

pub fn corpus_stats<R: Rng + ?Sized>(graphs: &[LabeledGraph], rng: &mut R) -> Result<CorpusStats> {
    if graphs.is_empty() {
        return Err(Error::Argument("empty corpus".into()));
    }
    let mut s = CorpusStats {
        graphs: graphs.len(),
        mean_nodes: 0.0,
        mean_edges: 0.0,
        mean_degree: 0.0,
        max_degree: 0,
        mean_alpha: 0.0,
        mean_beta: 0.0,
        max_beta: 0,
    };
    for g in graphs {
        let ord = random_bfs_ordering(g, rng)?;
        let profile = ordering_profile(g, &ord)?;
        let steps = profile.len().max(1) as f64;
        s.mean_nodes += g.n() as f64;
        s.mean_edges += g.num_edges() as f64;
        s.mean_degree += 2.0 * g.num_edges() as f64 / g.n() as f64;
        s.max_degree = s.max_degree.max((0..g.n()).map(|v| g.degree(v)).max().unwrap_or(0));
        s.mean_alpha += profile.iter().map(|p| p.0 as f64).sum::<f64>() / steps;
        s.mean_beta += profile.iter().map(|p| p.1 as f64).sum::<f64>() / steps;
        s.max_beta = s.max_beta.max(profile.iter().map(|p| p.1).max().unwrap_or(0));
    }
    let count = graphs.len() as f64;
    s.mean_nodes /= count;
    s.mean_edges /= count;
    s.mean_degree /= count;
    s.mean_alpha /= count;
    s.mean_beta /= count;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_by_three_grid_labels() {
        let g = grid(3, 3);
        let count = |l| g.node_labels().iter().filter(|&&x| x == l).count();
        assert_eq!((count(GRID_CORNER), count(GRID_EDGE), count(GRID_INSIDE)), (4, 4, 1));
        assert_eq!(g.num_edges(), 12);
        assert_eq!(g.edge_label(0, 1), Some(GRID_HORIZONTAL));
        assert_eq!(g.edge_label(0, 3), Some(GRID_VERTICAL));
    }

    #[test]
    fn shapes_respect_aspect() {
        let spec = CorpusSpec::new(Family::Grid, 1, 50, 100, 0);
        let shapes = grid_shapes(&spec);
        assert!(shapes.contains(&(8, 9)) && shapes.contains(&(9, 8)));
        assert!(!shapes.contains(&(2, 25)));
        assert!(shapes.iter().all(|&(h, w)| (50..=100).contains(&(h * w))));
    }

    #[test]
    fn infeasible_grid_spec() {
        let spec = CorpusSpec::new(Family::Grid, 1, 5, 5, 0);
        assert!(matches!(generate(&spec), Err(Error::Spec(_))));
    }

    #[test]
    fn ba_edge_count_and_hub_fraction() {
        let spec = CorpusSpec::new(Family::Ba, 20, 30, 60, 4);
        for g in generate(&spec).unwrap() {
            assert_eq!(g.num_edges(), 6 + 4 * (g.n() - 4));
            let hubs = g.node_labels().iter().filter(|&&l| l == BA_HUB).count();
            assert_eq!(hubs, g.n().div_ceil(2));
        }
        assert!(generate(&CorpusSpec::new(Family::Ba, 1, 4, 9, 0)).is_err());
    }

    #[test]
    fn degenerate_lobster_is_a_path() {
        let spec = CorpusSpec {
            lobster_p1: 0.0,
            lobster_p2: 0.0,
            ..CorpusSpec::new(Family::Lobster, 5, 10, 20, 1)
        };
        for g in generate(&spec).unwrap() {
            assert_eq!(g.num_edges(), g.n() - 1);
            assert!(g.node_labels().iter().all(|&l| l == LOBSTER_BACKBONE));
            assert!((0..g.n()).all(|v| g.degree(v) <= 2));
        }
    }

    #[test]
    fn community_extremes_give_cliques() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = community_draw(3, 1.0, 0.0, &mut rng);
        assert_eq!(g.num_edges(), 4 * 3);
        assert!(!g.is_connected());
        assert!(g.edges().all(|(_, _, l)| l == COMMUNITY_INTRA));
    }

    #[test]
    fn split_sizes() {
        let graphs = generate(&CorpusSpec::new(Family::Grid, 14, 4, 9, 0)).unwrap();
        let (a, b, c) = split_corpus(&graphs, default_split_sizes(14), 3).unwrap();
        assert_eq!((a.len(), b.len(), c.len()), (10, 2, 2));
        assert_eq!(default_split_sizes(700), (500, 100, 100));
        assert!(split_corpus(&graphs, (1, 1, 1), 0).is_err());
    }

    #[test]
    fn profile_of_a_path() {
        let g = LabeledGraph::from_parts(1, 1, vec![0; 4], &[(0, 1, 0), (1, 2, 0), (2, 3, 0)]).unwrap();
        let p = ordering_profile(&g, &NodeOrdering::identity(4)).unwrap();
        assert_eq!(p, vec![(1, 1), (1, 2), (1, 2)]);
    }

    #[test]
    fn family_names_round_trip() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
    }
}
