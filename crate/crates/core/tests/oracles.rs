//! Generators, labelers and graph statistics checked against independent
//! brute-force computations.

use gram::datasets::{
    community_draw, distance_from, generate, label_ba, CorpusSpec, Family, LOBSTER_BACKBONE, LOBSTER_BRANCH,
    LOBSTER_LEAF, LOBSTER_LEAF_EDGE,
};
use gram::evaluation::{orbit_counts, ORBITS};
use gram::graph::{is_isomorphic, wl_fingerprint};
use gram::LabeledGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_graph(n: usize, p: f64, a: usize, rng: &mut ChaCha8Rng) -> LabeledGraph {
    let labels = (0..n).map(|_| rng.gen_range(0..a)).collect();
    let mut g = LabeledGraph::new(a, 1, labels).unwrap();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(u, v, 0).unwrap();
            }
        }
    }
    g
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..k {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Connected 4-node graphlets with the orbit of each template node.
fn templates() -> Vec<([[bool; 4]; 4], [usize; 4])> {
    let build = |edges: &[(usize, usize)], orbits: [usize; 4]| {
        let mut m = [[false; 4]; 4];
        for &(u, v) in edges {
            m[u][v] = true;
            m[v][u] = true;
        }
        (m, orbits)
    };
    vec![
        build(&[(0, 1), (1, 2), (2, 3)], [4, 5, 5, 4]),
        build(&[(0, 1), (0, 2), (0, 3)], [7, 6, 6, 6]),
        build(&[(0, 1), (1, 2), (2, 3), (3, 0)], [8, 8, 8, 8]),
        build(&[(0, 1), (1, 2), (2, 0), (2, 3)], [10, 10, 11, 9]),
        build(&[(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], [13, 12, 13, 12]),
        build(&[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)], [14, 14, 14, 14]),
    ]
}

/// Orbit counts by matching every 4-subset against the templates under all
/// 24 node bijections.
fn brute_force_orbits(g: &LabeledGraph) -> Vec<[u64; ORBITS]> {
    let n = g.n();
    let temps = templates();
    let perms = permutations(4);
    let mut counts = vec![[0u64; ORBITS]; n];
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                for d in c + 1..n {
                    let s = [a, b, c, d];
                    'found: for (m, orbits) in &temps {
                        for p in &perms {
                            let fits = (0..4).all(|i| (0..4).all(|j| i == j || g.has_edge(s[p[i]], s[p[j]]) == m[i][j]));
                            if fits {
                                for i in 0..4 {
                                    counts[s[p[i]]][orbits[i] - 4] += 1;
                                }
                                break 'found;
                            }
                        }
                    }
                }
            }
        }
    }
    counts
}

#[test]
fn orbit_enumeration_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..30 {
        let n = 5 + round % 16;
        let p = [0.1, 0.2, 0.35, 0.6][round % 4];
        let g = random_graph(n, p, 1, &mut rng);
        assert_eq!(orbit_counts(&g), brute_force_orbits(&g), "round {round}");
    }
}

#[test]
fn complete_graph_orbit_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let g = random_graph(9, 1.0, 1, &mut rng);
    for c in orbit_counts(&g) {
        assert_eq!(c[10], 56);
        assert_eq!(c.iter().sum::<u64>(), 56);
    }
}

#[test]
fn fingerprints_agree_with_isomorphism_on_small_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let graphs: Vec<LabeledGraph> = (0..150)
        .map(|_| {
            let n = rng.gen_range(3..=8);
            let p = rng.gen_range(0.2..0.7);
            random_graph(n, p, 2, &mut rng)
        })
        .collect();
    let (mut agree, mut total) = (0usize, 0usize);
    for i in 0..graphs.len() {
        for j in i + 1..graphs.len() {
            let same_hash = wl_fingerprint(&graphs[i]) == wl_fingerprint(&graphs[j]);
            agree += usize::from(same_hash == is_isomorphic(&graphs[i], &graphs[j]));
            total += 1;
        }
    }
    assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
}

fn corpus(family: Family, count: usize, n_min: usize, n_max: usize, seed: u64) -> Vec<LabeledGraph> {
    generate(&CorpusSpec::new(family, count, n_min, n_max, seed)).unwrap()
}

#[test]
fn generated_graphs_respect_size_and_alphabets() {
    for family in Family::ALL {
        let (a, b) = family.alphabets();
        for g in corpus(family, 20, 12, 40, 4) {
            assert!(g.is_connected(), "{family:?}");
            assert!((12..=40).contains(&g.n()), "{family:?} n={}", g.n());
            assert_eq!((g.node_alphabet(), g.edge_alphabet()), (a, b));
        }
    }
}

#[test]
fn grid_labels_follow_degree() {
    for g in corpus(Family::Grid, 20, 12, 60, 5) {
        for v in 0..g.n() {
            assert_eq!(g.node_label(v), g.degree(v) - 2);
        }
        let horizontal = g.edges().filter(|e| e.2 == 0).count();
        let vertical = g.num_edges() - horizontal;
        // r x c lattice: r(c-1) horizontal and (r-1)c vertical edges.
        let found = (2..=g.n()).any(|r| g.n() % r == 0 && {
            let c = g.n() / r;
            r * (c - 1) == horizontal && (r - 1) * c == vertical
        });
        assert!(found, "{horizontal} horizontal, {vertical} vertical edges on {} nodes", g.n());
    }
}

#[test]
fn lobster_labels_follow_distance_from_backbone() {
    for g in corpus(Family::Lobster, 30, 10, 60, 6) {
        let backbone: Vec<usize> = (0..g.n()).filter(|&v| g.node_label(v) == LOBSTER_BACKBONE).collect();
        let spine = g.induced_subgraph(&backbone);
        assert!(spine.is_connected());
        assert_eq!(spine.num_edges(), backbone.len() - 1);
        assert!((0..spine.n()).all(|v| spine.degree(v) <= 2));
        let dist = distance_from(&g, &backbone);
        for v in 0..g.n() {
            let expected = match dist[v] {
                Some(0) => LOBSTER_BACKBONE,
                Some(1) => LOBSTER_BRANCH,
                Some(2) => LOBSTER_LEAF,
                other => panic!("node {v} at distance {other:?}"),
            };
            assert_eq!(g.node_label(v), expected);
        }
        for (u, v, l) in g.edges() {
            let touches_leaf = g.node_label(u) == LOBSTER_LEAF || g.node_label(v) == LOBSTER_LEAF;
            assert_eq!(l == LOBSTER_LEAF_EDGE, touches_leaf);
        }
    }
}

#[test]
fn community_edge_densities() {
    let (k, p_in, p_out) = (10, 0.23, 0.023);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut intra, mut inter) = (0usize, 0usize);
    let draws = 400;
    for _ in 0..draws {
        let g = community_draw(k, p_in, p_out, &mut rng);
        for (u, v, _) in g.edges() {
            if g.node_label(u) == g.node_label(v) {
                intra += 1;
            } else {
                inter += 1;
            }
        }
    }
    let intra_pairs = (draws * 4 * k * (k - 1) / 2) as f64;
    let inter_pairs = (draws * 6 * k * k) as f64;
    let (d_in, d_out) = (intra as f64 / intra_pairs, inter as f64 / inter_pairs);
    // Four binomial standard errors.
    assert!((d_in - p_in).abs() < 4.0 * (p_in * (1.0 - p_in) / intra_pairs).sqrt(), "{d_in}");
    assert!((d_out - p_out).abs() < 4.0 * (p_out * (1.0 - p_out) / inter_pairs).sqrt(), "{d_out}");
}

#[test]
fn ba_edge_count_and_relabeling() {
    for g in corpus(Family::Ba, 20, 20, 60, 8) {
        assert_eq!(g.num_edges(), 6 + 4 * (g.n() - 4));
        let stripped = LabeledGraph::from_parts(
            2,
            3,
            vec![0; g.n()],
            &g.edges().map(|(u, v, _)| (u, v, 0)).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(label_ba(&stripped), g);
    }
}
