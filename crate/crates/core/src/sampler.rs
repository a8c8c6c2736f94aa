//! Autoregressive generation from seed subgraphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{random_bfs_ordering, LabeledGraph};
use crate::hash::mix;
use crate::model::{edge_candidates, softmax_row, GramModel, StepCounters};
use crate::tensor::Tape;

/// Connected size-`n_min` prefixes of training graphs under random BFS
/// orderings, stored in generation order.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedBank {
    n_min: usize,
    seeds: Vec<LabeledGraph>,
}

impl SeedBank {
    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn seeds(&self) -> &[LabeledGraph] {
        &self.seeds
    }

    pub fn len(&self) -> usize {
        self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seeds.is_empty()
    }
}

/// One seed per training graph and ordering round. Graphs with fewer than
/// `n_min` nodes are skipped.
pub fn build_seed_bank<R: Rng + ?Sized>(
    train: &[LabeledGraph],
    n_min: usize,
    orderings_per_graph: usize,
    rng: &mut R,
) -> Result<SeedBank> {
    if n_min == 0 {
        return Err(Error::Config("n_min must be at least 1".into()));
    }
    let mut seeds = Vec::new();
    let mut skipped = 0;
    for g in train {
        if g.n() < n_min {
            skipped += 1;
            continue;
        }
        for _ in 0..orderings_per_graph {
            let ord = random_bfs_ordering(g, rng)?;
            seeds.push(g.reorder(&ord)?.prefix(n_min));
        }
    }
    if skipped > 0 {
        log::warn!("seed bank skipped {skipped} graphs with fewer than {n_min} nodes");
    }
    if seeds.is_empty() {
        return Err(Error::Config(format!("no training graph has at least {n_min} nodes")));
    }
    Ok(SeedBank { n_min, seeds })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decoding {
    #[default]
    Sample,
    Argmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub max_nodes: usize,
    pub decoding: Decoding,
}

/// Redraws of a step whose edges all came out as "no edge".
pub const EDGE_RETRIES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub graph: LabeledGraph,
    /// Generation stopped at `max_nodes` rather than on EOS.
    pub truncated: bool,
    /// Counters of every appended node.
    pub steps: Vec<StepCounters>,
    /// Steps whose edges had to be forced after repeated empty draws.
    pub forced_steps: usize,
}

fn draw<R: Rng + ?Sized>(dist: &[f64], decoding: Decoding, rng: &mut R) -> usize {
    match decoding {
        Decoding::Argmax => argmax(dist),
        Decoding::Sample => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in dist.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            dist.len() - 1
        }
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Grows a graph from a uniformly drawn seed until EOS or `max_nodes`.
pub fn generate_graph<R: Rng + ?Sized>(
    model: &GramModel,
    bank: &SeedBank,
    options: SampleOptions,
    rng: &mut R,
) -> Result<Generated> {
    if options.max_nodes <= bank.n_min {
        return Err(Error::Argument(format!(
            "max_nodes {} must exceed the seed size {}",
            options.max_nodes, bank.n_min
        )));
    }
    let cfg = model.config();
    let no_edge = cfg.no_edge();
    let mut g = bank.seeds[rng.gen_range(0..bank.seeds.len())].clone();
    let mut steps = Vec::new();
    let mut forced_steps = 0;
    let mut truncated = true;
    while g.n() < options.max_nodes {
        let mut tape = Tape::new();
        let enc = model.encode_prefix(&mut tape, &g)?;
        let logits = model.node_logits(&mut tape, &enc)?;
        let label = draw(&softmax_row(tape.value(logits).row(0)), options.decoding, rng);
        if label == cfg.eos() {
            truncated = false;
            break;
        }
        let candidates = edge_candidates(&g, cfg.variant)?;
        let attempts = match options.decoding {
            Decoding::Sample => EDGE_RETRIES + 1,
            Decoding::Argmax => 1,
        };
        let mut decided = Vec::new();
        let mut dists = Vec::new();
        for _ in 0..attempts {
            decided.clear();
            dists.clear();
            for (i, &t) in candidates.nodes.iter().enumerate() {
                let keys: Vec<(usize, usize)> = candidates
                    .keys_for(i, &decided, no_edge)
                    .into_iter()
                    .map(|j| (candidates.nodes[j], decided[j]))
                    .collect();
                let logits = model.edge_logits_single(&mut tape, &enc, label, t, &keys)?;
                let dist = softmax_row(tape.value(logits).row(0));
                decided.push(draw(&dist, options.decoding, rng));
                dists.push(dist);
            }
            if decided.iter().any(|&l| l != no_edge) {
                break;
            }
        }
        if decided.iter().all(|&l| l == no_edge) {
            let linked: Vec<f64> = dists.iter().map(|d| 1.0 - d[no_edge]).collect();
            let i = argmax(&linked);
            decided[i] = argmax(&dists[i][..no_edge]);
            forced_steps += 1;
        }
        let v = g.add_node(label)?;
        for (&t, &l) in candidates.nodes.iter().zip(&decided) {
            if l != no_edge {
                g.add_edge(t, v, l)?;
            }
        }
        let keys_seen = (0..candidates.nodes.len())
            .map(|i| candidates.keys_for(i, &decided, no_edge).len())
            .sum();
        steps.push(StepCounters {
            alpha: decided.iter().filter(|&&l| l != no_edge).count(),
            beta: candidates.frontier_size,
            edge_decisions: candidates.nodes.len(),
            attention_pairs: keys_seen,
        });
    }
    Ok(Generated {
        graph: g,
        truncated,
        steps,
        forced_steps,
    })
}

/// `count` independent generations; sample `i` uses its own rng stream
/// derived from `(seed, i)`, so results do not depend on thread scheduling.
pub fn generate_many(
    model: &GramModel,
    bank: &SeedBank,
    count: usize,
    options: SampleOptions,
    seed: u64,
) -> Result<Vec<Generated>> {
    let one = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, i as u64));
        generate_graph(model, bank, options, &mut rng)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(one).collect()
    }
}
