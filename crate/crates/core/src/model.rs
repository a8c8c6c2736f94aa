//! The generator network.
//!
//! Each generation step encodes the current prefix graph with `L` feature
//! extraction blocks (a graph convolution and a graph self-attention layer in
//! parallel, merged by a linear map), pools node features into a graph vector
//! through a sigmoid gate, predicts the next node label (or EOS), and then
//! predicts one edge label (or "no edge") per candidate node. Edge predictions
//! condition on earlier decisions of the same step through source-target
//! graph attention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{
    attention_sublayer, bucket_index, g_multi_head, AttentionContext, AttentionDims, GraphAttentionParams,
    SublayerParams,
};
use crate::error::{Error, Result};
use crate::graph::{frontier_nodes, graph_statistics, shortest_paths, DistanceMatrix, LabeledGraph, NodeOrdering};
use crate::layers::{glorot, Linear, Mlp};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Complexity-reduction variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every earlier node is an edge candidate; attention sees every earlier decision.
    Plain,
    /// Source-target attention only sees candidates that received an edge.
    A,
    /// Candidates restricted to the BFS frontier.
    B,
    /// Both restrictions.
    AB,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Plain, Variant::A, Variant::B, Variant::AB];

    pub fn uses_frontier(self) -> bool {
        matches!(self, Variant::B | Variant::AB)
    }

    pub fn attends_edges_only(self) -> bool {
        matches!(self, Variant::A | Variant::AB)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Plain => "plain",
            Variant::A => "a",
            Variant::B => "b",
            Variant::AB => "ab",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "plain" | "gram" => Ok(Variant::Plain),
            "a" | "gram-a" => Ok(Variant::A),
            "b" | "gram-b" => Ok(Variant::B),
            "ab" | "gram-ab" => Ok(Variant::AB),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Node label alphabet size `a`.
    pub node_labels: usize,
    /// Edge label alphabet size `b`.
    pub edge_labels: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    /// Number of feature extraction blocks `L`.
    pub blocks: usize,
    /// Self-attention radius `r` in hops.
    pub radius: usize,
    /// Largest distance with its own bias row.
    pub distance_cap: usize,
    pub variant: Variant,
    /// Seed subgraph size `N_min`.
    pub n_min: usize,
    pub bias_in_fe: bool,
    pub bias_in_ee: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            node_labels: 1,
            edge_labels: 1,
            d_model: 128,
            heads: 8,
            d_ff: 256,
            blocks: 3,
            radius: 2,
            distance_cap: 8,
            variant: Variant::Plain,
            n_min: 10,
            bias_in_fe: true,
            bias_in_ee: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.node_labels == 0 || self.edge_labels == 0 {
            return fail("label alphabets must be non-empty");
        }
        if self.blocks == 0 {
            return fail("blocks must be at least 1");
        }
        if self.radius == 0 {
            return fail("radius must be at least 1");
        }
        if self.n_min == 0 {
            return fail("n_min must be at least 1");
        }
        if self.heads == 0 || self.d_model == 0 || !self.d_model.is_multiple_of(self.heads) {
            return fail("d_model must be a positive multiple of heads");
        }
        if self.d_ff == 0 {
            return fail("d_ff must be positive");
        }
        if self.distance_cap < self.radius {
            return fail("distance_cap must be at least the attention radius");
        }
        Ok(())
    }

    pub fn subspace(&self) -> usize {
        self.d_model / self.heads
    }

    /// Index of the EOS class in node distributions.
    pub fn eos(&self) -> usize {
        self.node_labels
    }

    /// Index of the "no edge" class in edge distributions.
    pub fn no_edge(&self) -> usize {
        self.edge_labels
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct ConvParams {
    hidden: Linear,
    to_source: Linear,
    to_edge: Linear,
    to_target: Linear,
    self_map: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct BlockParams {
    conv: ConvParams,
    attention: SublayerParams,
    combine: Linear,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Layout {
    node_embed: ParamId,
    edge_embed: ParamId,
    input: Linear,
    blocks: Vec<BlockParams>,
    pool_gate: Mlp,
    node_estimator: Mlp,
    edge_estimator: Mlp,
    edge_attention: GraphAttentionParams,
}

/// Per-step instrumentation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    /// Candidates (earlier nodes) that received an edge.
    pub alpha: usize,
    /// Frontier size.
    pub beta: usize,
    /// Edge estimations performed.
    pub edge_decisions: usize,
    /// (candidate, attended key) pairs in source-target attention.
    pub attention_pairs: usize,
}

/// Candidate nodes for the edges of the next node, in estimation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeCandidates {
    pub nodes: Vec<usize>,
    pub attends_edges_only: bool,
    pub frontier_size: usize,
}

impl EdgeCandidates {
    /// Positions (into `nodes`) the `i`-th candidate attends to, given the
    /// labels decided so far (`decided[j]` for `j < i`; `no_edge` for none).
    pub fn keys_for(&self, i: usize, decided: &[usize], no_edge: usize) -> Vec<usize> {
        (0..i)
            .filter(|&j| !self.attends_edges_only || decided[j] != no_edge)
            .collect()
    }
}

/// Candidates for the node about to be appended to `prefix` (which holds the
/// nodes generated so far, in generation order).
pub fn edge_candidates(prefix: &LabeledGraph, variant: Variant) -> Result<EdgeCandidates> {
    let s = prefix.n();
    if s == 0 {
        return Err(Error::Argument("edge candidates of an empty prefix".into()));
    }
    let frontier = frontier_nodes(prefix, &NodeOrdering::identity(s), s)?;
    let frontier_size = frontier.len();
    let nodes = if variant.uses_frontier() {
        frontier.collect()
    } else {
        (0..s).collect()
    };
    Ok(EdgeCandidates {
        nodes,
        attends_edges_only: variant.attends_edges_only(),
        frontier_size,
    })
}

/// Encoded prefix graph.
#[derive(Debug, Clone)]
pub struct PrefixEncoding {
    /// One feature row per prefix node, `s x d_model`.
    pub nodes: Var,
    /// Pooled graph feature, `1 x d_model`.
    pub graph: Var,
    pub distances: DistanceMatrix,
}

/// Distributions of one step, evaluated under given conditioning.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Length `a + 1`; the last entry is EOS.
    pub node_distribution: Vec<f64>,
    /// One distribution of length `b + 1` per candidate; the last entry is "no edge".
    pub edge_distributions: Vec<Vec<f64>>,
    pub candidates: Vec<usize>,
    pub counters: StepCounters,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramModel {
    config: ModelConfig,
    store: ParamStore,
    layout: Layout,
}

impl GramModel {
    /// Fresh model with Glorot-initialized weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (a, b, d, ff) = (config.node_labels, config.edge_labels, config.d_model, config.d_ff);
        let node_embed = store.add("node_embed", glorot(&mut rng, a + 2, d));
        let edge_embed = store.add("edge_embed", glorot(&mut rng, b + 2, d));
        let input = Linear::register(&mut store, "input", a + 2, d, &mut rng);
        let self_dims = AttentionDims {
            heads: config.heads,
            query: d,
            key: d,
            value: d,
            subspace: config.subspace(),
            output: d,
            distance_cap: config.distance_cap,
        };
        let blocks = (0..config.blocks)
            .map(|l| {
                let p = format!("block{l}");
                BlockParams {
                    conv: ConvParams {
                        hidden: Linear::register(&mut store, &format!("{p}.conv.hidden"), 3 * d, ff, &mut rng),
                        to_source: Linear::register(&mut store, &format!("{p}.conv.source"), ff, d, &mut rng),
                        to_edge: Linear::register(&mut store, &format!("{p}.conv.edge"), ff, d, &mut rng),
                        to_target: Linear::register(&mut store, &format!("{p}.conv.target"), ff, d, &mut rng),
                        self_map: Linear::register(&mut store, &format!("{p}.conv.self"), d, d, &mut rng),
                    },
                    attention: SublayerParams::register(&mut store, &format!("{p}.attn"), self_dims, ff, &mut rng),
                    combine: Linear::register(&mut store, &format!("{p}.combine"), 2 * d, d, &mut rng),
                }
            })
            .collect();
        let pool_gate = Mlp::register(&mut store, "pool_gate", &[d, ff, d], &mut rng);
        let node_estimator = Mlp::register(&mut store, "node_estimator", &[d, ff, ff, a + 1], &mut rng);
        let edge_estimator = Mlp::register(&mut store, "edge_estimator", &[4 * d, ff, ff, b + 1], &mut rng);
        let edge_attention = GraphAttentionParams::register(
            &mut store,
            "edge_attention",
            AttentionDims {
                heads: config.heads,
                query: 2 * d,
                key: 3 * d,
                value: 3 * d,
                subspace: config.subspace(),
                output: d,
                distance_cap: config.distance_cap,
            },
            &mut rng,
        );
        Ok(Self {
            config,
            store,
            layout: Layout {
                node_embed,
                edge_embed,
                input,
                blocks,
                pool_gate,
                node_estimator,
                edge_estimator,
                edge_attention,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Replaces every parameter value, checking names and shapes against
    /// this model's layout.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.store.len() {
            return Err(Error::CorruptCheckpoint(format!(
                "expected {} parameters, found {}",
                self.store.len(),
                values.len()
            )));
        }
        for (name, value) in values {
            let id = self
                .store
                .id(&name)
                .ok_or_else(|| Error::CorruptCheckpoint(format!("unknown parameter {name}")))?;
            let current = self.store.value(id);
            if current.shape() != value.shape() {
                return Err(Error::CorruptCheckpoint(format!(
                    "parameter {name} has shape {:?}, config expects {:?}",
                    value.shape(),
                    current.shape()
                )));
            }
            *self.store.value_mut(id) = value;
        }
        Ok(())
    }

    /// Final-layer parameters of the node estimator, `(weight, bias)`.
    pub fn node_output_layer(&self) -> (ParamId, ParamId) {
        let l = self.layout.node_estimator.last();
        (l.weight, l.bias)
    }

    /// Final-layer parameters of the edge estimator, `(weight, bias)`.
    pub fn edge_output_layer(&self) -> (ParamId, ParamId) {
        let l = self.layout.edge_estimator.last();
        (l.weight, l.bias)
    }

    /// Bias-table parameters of every attention layer.
    pub fn bias_tables(&self) -> Vec<ParamId> {
        let mut ids = Vec::new();
        let heads = self
            .layout
            .blocks
            .iter()
            .flat_map(|b| b.attention.attention.heads.iter())
            .chain(self.layout.edge_attention.heads.iter());
        for h in heads {
            ids.extend([h.b_q, h.b_k, h.b_v]);
        }
        ids
    }

    /// Input rows: one-hot label, degree over max degree, clustering coefficient.
    fn input_features(&self, prefix: &LabeledGraph) -> Tensor {
        let a = self.config.node_labels;
        let s = prefix.n();
        let stats = graph_statistics(prefix);
        let max_deg = stats.degrees.iter().copied().max().unwrap_or(0);
        let width = a + 2;
        let mut data = vec![0.0; s * width];
        for v in 0..s {
            let row = &mut data[v * width..(v + 1) * width];
            row[prefix.node_label(v)] = 1.0;
            row[a] = if max_deg > 0 {
                stats.degrees[v] as f64 / max_deg as f64
            } else {
                0.0
            };
            row[a + 1] = stats.clustering[v];
        }
        Tensor::matrix(s, width, data).expect("non-empty prefix")
    }

    /// Runs the feature extractor and graph pooling on a non-empty prefix.
    pub fn encode_prefix(&self, tape: &mut Tape, prefix: &LabeledGraph) -> Result<PrefixEncoding> {
        let s = prefix.n();
        if s == 0 {
            return Err(Error::Argument("cannot encode an empty prefix".into()));
        }
        if prefix.node_alphabet() != self.config.node_labels || prefix.edge_alphabet() != self.config.edge_labels {
            return Err(Error::Argument(format!(
                "graph alphabets ({}, {}) differ from model ({}, {})",
                prefix.node_alphabet(),
                prefix.edge_alphabet(),
                self.config.node_labels,
                self.config.edge_labels
            )));
        }
        let store = &self.store;
        let x = tape.constant(self.input_features(prefix));
        let mut h = self.layout.input.forward(tape, store, x)?;

        let edges: Vec<(usize, usize, usize)> = prefix.edges().collect();
        let mut h_edge = if edges.is_empty() {
            None
        } else {
            let table = tape.param(store, self.layout.edge_embed);
            let labels: Vec<usize> = edges.iter().map(|e| e.2).collect();
            Some(tape.row_select(table, &labels)?)
        };
        let conv_plan = ConvPlan::new(s, &edges);

        let distances = shortest_paths(prefix, self.config.distance_cap);
        let ctx = AttentionContext::self_attention(&distances, self.config.radius);

        for block in &self.layout.blocks {
            let (conv_out, next_edge) = self.convolve(tape, &block.conv, &conv_plan, h, h_edge)?;
            let attn_out = attention_sublayer(tape, store, &block.attention, h, &ctx, self.config.bias_in_fe)?;
            let both = tape.concat(&[conv_out, attn_out])?;
            h = block.combine.forward(tape, store, both)?;
            h_edge = next_edge;
        }
        let graph = self.graph_pool(tape, h)?;
        Ok(PrefixEncoding {
            nodes: h,
            graph,
            distances,
        })
    }

    fn convolve(
        &self,
        tape: &mut Tape,
        conv: &ConvParams,
        plan: &ConvPlan,
        h: Var,
        h_edge: Option<Var>,
    ) -> Result<(Var, Option<Var>)> {
        let store = &self.store;
        let self_term = conv.self_map.forward(tape, store, h)?;
        let iso = tape.constant(plan.isolated.clone());
        let self_term = tape.mul(self_term, iso)?;
        let Some(h_edge) = h_edge else {
            return Ok((tape.relu(self_term), None));
        };
        let src = tape.row_select(h, &plan.sources)?;
        let mid = tape.row_select(h_edge, &plan.edge_of_copy)?;
        let dst = tape.row_select(h, &plan.targets)?;
        let triple = tape.concat(&[src, mid, dst])?;
        let hidden = conv.hidden.forward(tape, store, triple)?;
        let hidden = tape.relu(hidden);
        let m_src = conv.to_source.forward(tape, store, hidden)?;
        let m_edge = conv.to_edge.forward(tape, store, hidden)?;
        let m_dst = conv.to_target.forward(tape, store, hidden)?;

        let agg_src = tape.constant(plan.source_mean.clone());
        let agg_dst = tape.constant(plan.target_mean.clone());
        let pooled_src = tape.matmul(agg_src, m_src)?;
        let pooled_dst = tape.matmul(agg_dst, m_dst)?;
        let pooled = tape.add(pooled_src, pooled_dst)?;
        let total = tape.add(pooled, self_term)?;
        let nodes = tape.relu(total);

        let agg_edge = tape.constant(plan.edge_mean.clone());
        let edges = tape.matmul(agg_edge, m_edge)?;
        Ok((nodes, Some(edges)))
    }

    /// Gated sum of node features, `1 x d_model`.
    pub fn graph_pool(&self, tape: &mut Tape, nodes: Var) -> Result<Var> {
        let gate = self.layout.pool_gate.forward(tape, &self.store, nodes)?;
        let gate = tape.sigmoid(gate);
        let gated = tape.mul(gate, nodes)?;
        let summed = tape.sum_axis(gated, 0)?;
        tape.reshape(summed, &[1, self.config.d_model])
    }

    /// Logits over `a + 1` node classes, `1 x (a+1)`.
    pub fn node_logits(&self, tape: &mut Tape, enc: &PrefixEncoding) -> Result<Var> {
        self.layout.node_estimator.forward(tape, &self.store, enc.graph)
    }

    /// Edge logits for every candidate at once (`k x (b+1)`), conditioning on
    /// `decided[j]`, the label given to candidate `j` (`no_edge` for none).
    /// Candidate `i` attends to candidates `j < i` allowed by the key policy;
    /// this is the masked, parallel form used for teacher forcing.
    pub fn edge_logits(
        &self,
        tape: &mut Tape,
        enc: &PrefixEncoding,
        new_label: usize,
        candidates: &EdgeCandidates,
        decided: &[usize],
    ) -> Result<Var> {
        let k = candidates.nodes.len();
        if decided.len() != k {
            return Err(Error::Argument(format!("{} decisions for {k} candidates", decided.len())));
        }
        if k == 0 {
            return Err(Error::Argument("no edge candidates".into()));
        }
        let no_edge = self.config.no_edge();
        if let Some(&l) = decided.iter().find(|&&l| l > no_edge) {
            return Err(Error::Argument(format!("edge decision {l} outside 0..={no_edge}")));
        }
        let store = &self.store;
        let h_t = tape.row_select(enc.nodes, &candidates.nodes)?;
        let h_s = self.embed_new_node(tape, new_label, k)?;
        let h_g = tape.row_select(enc.graph, &vec![0; k])?;

        let mut buckets = Vec::with_capacity(k * k);
        let mut mask = Vec::with_capacity(k * k);
        let mut has_keys = Vec::with_capacity(k);
        for i in 0..k {
            let keys = candidates.keys_for(i, decided, no_edge);
            has_keys.push(if keys.is_empty() { 0.0 } else { 1.0 });
            for j in 0..k {
                let d = enc.distances.get(candidates.nodes[i], candidates.nodes[j]);
                buckets.push(bucket_index(d, self.config.distance_cap));
                // Rows without keys attend to a placeholder; their output is zeroed below.
                mask.push(keys.contains(&j) || (keys.is_empty() && j == 0));
            }
        }
        let ctx = AttentionContext::new(k, k, buckets, mask)?;
        let query = tape.concat(&[h_t, h_s])?;
        let edge_table = tape.param(store, self.layout.edge_embed);
        let decided_embed = tape.row_select(edge_table, decided)?;
        let keys = tape.concat(&[h_t, h_s, decided_embed])?;
        let attended = g_multi_head(
            tape,
            store,
            &self.layout.edge_attention,
            query,
            keys,
            keys,
            &ctx,
            self.config.bias_in_ee,
        )?;
        let keep = tape.constant(Tensor::matrix(k, 1, has_keys)?);
        let h_e = tape.mul(attended, keep)?;
        let features = tape.concat(&[h_t, h_g, h_s, h_e])?;
        self.layout.edge_estimator.forward(tape, store, features)
    }

    /// Edge logits (`1 x (b+1)`) for a single candidate `target` attending to
    /// exactly `keys`, given as `(node, decided label)`. An empty key set
    /// yields a zero attention vector.
    pub fn edge_logits_single(
        &self,
        tape: &mut Tape,
        enc: &PrefixEncoding,
        new_label: usize,
        target: usize,
        keys: &[(usize, usize)],
    ) -> Result<Var> {
        let store = &self.store;
        let d = self.config.d_model;
        let h_t = tape.row_select(enc.nodes, &[target])?;
        let h_s = self.embed_new_node(tape, new_label, 1)?;
        let h_e = if keys.is_empty() {
            tape.constant(Tensor::zeros(&[1, d]))
        } else {
            let nodes: Vec<usize> = keys.iter().map(|k| k.0).collect();
            let labels: Vec<usize> = keys.iter().map(|k| k.1).collect();
            let buckets = nodes
                .iter()
                .map(|&tau| bucket_index(enc.distances.get(target, tau), self.config.distance_cap))
                .collect();
            let ctx = AttentionContext::new(1, keys.len(), buckets, vec![true; keys.len()])?;
            let query = tape.concat(&[h_t, h_s])?;
            let h_tau = tape.row_select(enc.nodes, &nodes)?;
            let h_s_rep = self.embed_new_node(tape, new_label, keys.len())?;
            let edge_table = tape.param(store, self.layout.edge_embed);
            let decided = tape.row_select(edge_table, &labels)?;
            let key_rows = tape.concat(&[h_tau, h_s_rep, decided])?;
            g_multi_head(
                tape,
                store,
                &self.layout.edge_attention,
                query,
                key_rows,
                key_rows,
                &ctx,
                self.config.bias_in_ee,
            )?
        };
        let h_g = tape.row_select(enc.graph, &[0])?;
        let features = tape.concat(&[h_t, h_g, h_s, h_e])?;
        self.layout.edge_estimator.forward(tape, store, features)
    }

    fn embed_new_node(&self, tape: &mut Tape, label: usize, copies: usize) -> Result<Var> {
        if label >= self.config.node_labels + 2 {
            return Err(Error::Argument(format!("node label {label} outside embedding table")));
        }
        let table = tape.param(&self.store, self.layout.node_embed);
        tape.row_select(table, &vec![label; copies])
    }

    /// Node and edge distributions of the step that appends a node labeled
    /// `next_label` to `prefix`, with candidate `i` conditioned on
    /// `decisions[i]` (teacher-forced conditioning).
    pub fn evaluate_step(&self, prefix: &LabeledGraph, next_label: usize, decisions: &[usize]) -> Result<StepOutput> {
        let mut tape = Tape::new();
        let enc = self.encode_prefix(&mut tape, prefix)?;
        let node_logits = self.node_logits(&mut tape, &enc)?;
        let node_distribution = softmax_row(tape.value(node_logits).row(0));
        let candidates = edge_candidates(prefix, self.config.variant)?;
        if decisions.len() != candidates.nodes.len() {
            return Err(Error::Argument(format!(
                "{} decisions for {} candidates",
                decisions.len(),
                candidates.nodes.len()
            )));
        }
        let logits = self.edge_logits(&mut tape, &enc, next_label, &candidates, decisions)?;
        let lv = tape.value(logits);
        let edge_distributions = (0..candidates.nodes.len()).map(|i| softmax_row(lv.row(i))).collect();
        let no_edge = self.config.no_edge();
        let counters = StepCounters {
            alpha: decisions.iter().filter(|&&l| l != no_edge).count(),
            beta: candidates.frontier_size,
            edge_decisions: candidates.nodes.len(),
            attention_pairs: (0..candidates.nodes.len())
                .map(|i| candidates.keys_for(i, decisions, no_edge).len())
                .sum(),
        };
        Ok(StepOutput {
            node_distribution,
            edge_distributions,
            candidates: candidates.nodes,
            counters,
        })
    }
}

pub(crate) fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    crate::tensor::softmax_in_place(&mut out);
    out
}

/// Index plan for one graph convolution: each undirected edge appears as two
/// directed copies, and every node averages the messages of its copies.
struct ConvPlan {
    sources: Vec<usize>,
    targets: Vec<usize>,
    edge_of_copy: Vec<usize>,
    source_mean: Tensor,
    target_mean: Tensor,
    edge_mean: Tensor,
    isolated: Tensor,
}

impl ConvPlan {
    fn new(n: usize, edges: &[(usize, usize, usize)]) -> Self {
        let m = edges.len();
        let copies = 2 * m;
        let mut sources = Vec::with_capacity(copies);
        let mut targets = Vec::with_capacity(copies);
        let mut edge_of_copy = Vec::with_capacity(copies);
        let mut degree = vec![0usize; n];
        for (e, &(u, v, _)) in edges.iter().enumerate() {
            sources.extend([u, v]);
            targets.extend([v, u]);
            edge_of_copy.extend([e, e]);
            degree[u] += 1;
            degree[v] += 1;
        }
        let isolated = Tensor::matrix(n, 1, degree.iter().map(|&d| if d == 0 { 1.0 } else { 0.0 }).collect())
            .expect("non-empty");
        if m == 0 {
            let empty = Tensor::zeros(&[1, 1]);
            return Self {
                sources,
                targets,
                edge_of_copy,
                source_mean: empty.clone(),
                target_mean: empty.clone(),
                edge_mean: empty,
                isolated,
            };
        }
        let mut source_mean = vec![0.0; n * copies];
        let mut target_mean = vec![0.0; n * copies];
        let mut edge_mean = vec![0.0; m * copies];
        for c in 0..copies {
            let (u, v) = (sources[c], targets[c]);
            source_mean[u * copies + c] = 1.0 / (2 * degree[u]) as f64;
            target_mean[v * copies + c] = 1.0 / (2 * degree[v]) as f64;
            edge_mean[edge_of_copy[c] * copies + c] = 0.5;
        }
        Self {
            sources,
            targets,
            edge_of_copy,
            source_mean: Tensor::matrix(n, copies, source_mean).expect("sized"),
            target_mean: Tensor::matrix(n, copies, target_mean).expect("sized"),
            edge_mean: Tensor::matrix(m, copies, edge_mean).expect("sized"),
            isolated,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(a: usize, b: usize, variant: Variant) -> ModelConfig {
        ModelConfig {
            node_labels: a,
            edge_labels: b,
            d_model: 8,
            heads: 2,
            d_ff: 12,
            blocks: 2,
            radius: 2,
            distance_cap: 4,
            variant,
            n_min: 1,
            ..ModelConfig::default()
        }
    }

    fn path(n: usize) -> LabeledGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i, i % 2)).collect();
        LabeledGraph::from_parts(2, 2, (0..n).map(|i| i % 2).collect(), &edges).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(tiny_config(2, 2, Variant::Plain).validate().is_ok());
        let mut c = tiny_config(2, 2, Variant::Plain);
        c.heads = 3;
        assert!(c.validate().is_err());
        c = tiny_config(2, 2, Variant::Plain);
        c.blocks = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("GRAM-AB".parse::<Variant>().unwrap(), Variant::AB);
        assert_eq!("plain".parse::<Variant>().unwrap(), Variant::Plain);
        assert!("c".parse::<Variant>().is_err());
    }

    #[test]
    fn candidates_per_variant() {
        let p = path(4);
        let plain = edge_candidates(&p, Variant::Plain).unwrap();
        assert_eq!(plain.nodes, vec![0, 1, 2, 3]);
        let b = edge_candidates(&p, Variant::B).unwrap();
        assert_eq!(b.nodes, vec![2, 3]);
        assert_eq!(b.frontier_size, 2);
        assert!(edge_candidates(&p, Variant::AB).unwrap().attends_edges_only);
    }

    #[test]
    fn keys_follow_policy() {
        let c = EdgeCandidates {
            nodes: vec![0, 1, 2, 3],
            attends_edges_only: true,
            frontier_size: 4,
        };
        assert_eq!(c.keys_for(3, &[2, 0, 2, 2], 2), vec![1]);
        assert!(c.keys_for(0, &[0, 0, 0, 0], 2).is_empty());
    }

    #[test]
    fn distributions_are_normalized() {
        let model = GramModel::new(tiny_config(2, 2, Variant::Plain), 5).unwrap();
        let p = path(5);
        let out = model.evaluate_step(&p, 1, &[2, 2, 2, 0, 2]).unwrap();
        assert_eq!(out.node_distribution.len(), 3);
        assert!((out.node_distribution.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for d in &out.edge_distributions {
            assert_eq!(d.len(), 3);
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert_eq!(out.counters.alpha, 1);
        assert_eq!(out.counters.attention_pairs, 10);
    }

    #[test]
    fn zero_output_layer_gives_uniform() {
        let mut model = GramModel::new(tiny_config(3, 2, Variant::Plain), 1).unwrap();
        for id in [model.node_output_layer(), model.edge_output_layer()].into_iter().flat_map(|(w, b)| [w, b]) {
            model.store_mut().value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let p = LabeledGraph::from_parts(3, 2, vec![0, 1, 2], &[(0, 1, 0), (1, 2, 1)]).unwrap();
        let out = model.evaluate_step(&p, 0, &[2, 2, 2]).unwrap();
        for v in &out.node_distribution {
            assert!((v - 0.25).abs() < 1e-15);
        }
        for d in &out.edge_distributions {
            for v in d {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn single_node_prefix_encodes() {
        let model = GramModel::new(tiny_config(2, 2, Variant::A), 2).unwrap();
        let g = LabeledGraph::new(2, 2, vec![1]).unwrap();
        let out = model.evaluate_step(&g, 0, &[0]).unwrap();
        assert_eq!(out.candidates, vec![0]);
        assert_eq!(out.counters.attention_pairs, 0);
    }

    #[test]
    fn rejects_alphabet_mismatch() {
        let model = GramModel::new(tiny_config(2, 2, Variant::Plain), 2).unwrap();
        let g = LabeledGraph::new(3, 2, vec![2]).unwrap();
        let mut tape = Tape::new();
        assert!(model.encode_prefix(&mut tape, &g).is_err());
    }
}
