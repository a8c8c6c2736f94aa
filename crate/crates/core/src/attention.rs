//! Multi-head graph attention with shortest-path-indexed bias terms.
//!
//! For every head the query, key and value projections receive an additive
//! bias looked up by the (clipped) hop distance between the query node and the
//! key node:
//!
//! ```text
//! s_ij = (W_Q q_i + bQ[d_ij]) . (W_K k_j + bK[d_ij]) / sqrt(d_K)
//! o_i  = sum_j softmax_j(s_i) (W_V v_j + bV[d_ij])
//! ```
//!
//! Heads are concatenated and projected by `W_O`. With all bias tables zero
//! this is ordinary multi-head attention.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::DistanceMatrix;
use crate::layers::{glorot, uniform, LayerNorm, Mlp};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var, MASK_NEG};

/// Distance bucket used for bias lookup: distances above `cap` (and
/// unreachable pairs) share bucket `cap + 1`.
pub fn bucket_index(distance: usize, cap: usize) -> usize {
    distance.min(cap + 1)
}

/// Row `index` of a bias table.
pub fn bias_lookup(table: &Tensor, index: usize) -> Result<&[f64]> {
    if table.rank() != 2 || index >= table.rows() {
        return Err(Error::Argument(format!(
            "bias index {index} outside table of shape {:?}",
            table.shape()
        )));
    }
    Ok(table.row(index))
}

/// Distance buckets and attend-mask for every (query, key) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionContext {
    rows: usize,
    cols: usize,
    buckets: Vec<usize>,
    mask: Vec<bool>,
}

impl AttentionContext {
    pub fn new(rows: usize, cols: usize, buckets: Vec<usize>, mask: Vec<bool>) -> Result<Self> {
        if buckets.len() != rows * cols || mask.len() != rows * cols {
            return Err(Error::Argument(format!(
                "context of {rows}x{cols} needs {} entries",
                rows * cols
            )));
        }
        Ok(Self {
            rows,
            cols,
            buckets,
            mask,
        })
    }

    /// Self-attention over all nodes of a graph, restricted to pairs within
    /// `radius` hops. Buckets come from `dist`, whose cap sets the bucket range.
    pub fn self_attention(dist: &DistanceMatrix, radius: usize) -> Self {
        let n = dist.n();
        let mut buckets = Vec::with_capacity(n * n);
        let mut mask = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let d = dist.get(i, j);
                buckets.push(d);
                mask.push(d <= radius);
            }
        }
        Self {
            rows: n,
            cols: n,
            buckets,
            mask,
        }
    }

    /// Every pair allowed, every pair in bucket 0.
    pub fn unrestricted(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            buckets: vec![0; rows * cols],
            mask: vec![true; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bucket(&self, i: usize, j: usize) -> usize {
        self.buckets[i * self.cols + j]
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.cols + j]
    }

    /// Context for the permuted inputs: new pair `(i, j)` is old pair
    /// `(row_perm[i], col_perm[j])`.
    pub fn permuted(&self, row_perm: &[usize], col_perm: &[usize]) -> Self {
        let mut buckets = Vec::with_capacity(self.buckets.len());
        let mut mask = Vec::with_capacity(self.mask.len());
        for &i in row_perm {
            for &j in col_perm {
                buckets.push(self.bucket(i, j));
                mask.push(self.allowed(i, j));
            }
        }
        Self {
            rows: row_perm.len(),
            cols: col_perm.len(),
            buckets,
            mask,
        }
    }

    fn additive_mask(&self) -> Tensor {
        let data = self.mask.iter().map(|&m| if m { 0.0 } else { MASK_NEG }).collect();
        Tensor::matrix(self.rows, self.cols, data).expect("non-empty context")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionDims {
    pub heads: usize,
    /// Width of query inputs.
    pub query: usize,
    /// Width of key inputs.
    pub key: usize,
    /// Width of value inputs.
    pub value: usize,
    /// Per-head subspace width.
    pub subspace: usize,
    pub output: usize,
    /// Bias tables have `distance_cap + 2` rows.
    pub distance_cap: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadParams {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub b_q: ParamId,
    pub b_k: ParamId,
    pub b_v: ParamId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphAttentionParams {
    pub dims: AttentionDims,
    pub heads: Vec<HeadParams>,
    pub w_o: ParamId,
}

impl GraphAttentionParams {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, dims: AttentionDims, rng: &mut R) -> Self {
        let buckets = dims.distance_cap + 2;
        let heads = (0..dims.heads)
            .map(|h| {
                let p = format!("{name}.head{h}");
                HeadParams {
                    w_q: store.add(format!("{p}.w_q"), glorot(rng, dims.query, dims.subspace)),
                    w_k: store.add(format!("{p}.w_k"), glorot(rng, dims.key, dims.subspace)),
                    w_v: store.add(format!("{p}.w_v"), glorot(rng, dims.value, dims.subspace)),
                    b_q: store.add(format!("{p}.b_q"), uniform(rng, &[buckets, dims.subspace], 0.1)),
                    b_k: store.add(format!("{p}.b_k"), uniform(rng, &[buckets, dims.subspace], 0.1)),
                    b_v: store.add(format!("{p}.b_v"), uniform(rng, &[buckets, dims.subspace], 0.1)),
                }
            })
            .collect();
        let w_o = store.add(
            format!("{name}.w_o"),
            glorot(rng, dims.heads * dims.subspace, dims.output),
        );
        Self { dims, heads, w_o }
    }
}

/// Graph multi-head attention of queries `q` over keys `k` / values `v`.
/// With `use_bias == false` the distance biases are omitted, which is the same
/// as zero bias tables.
#[allow(clippy::too_many_arguments)]
pub fn g_multi_head(
    tape: &mut Tape,
    store: &ParamStore,
    params: &GraphAttentionParams,
    q: Var,
    k: Var,
    v: Var,
    ctx: &AttentionContext,
    use_bias: bool,
) -> Result<Var> {
    let (nq, nk) = (tape.shape(q)[0], tape.shape(k)[0]);
    if tape.shape(v)[0] != nk {
        return Err(Error::shape("g_multi_head keys/values", tape.shape(k), tape.shape(v)));
    }
    if ctx.rows != nq || ctx.cols != nk {
        return Err(Error::shape("g_multi_head context", &[nq, nk], &[ctx.rows, ctx.cols]));
    }
    if let Some(i) = (0..nq).find(|&i| !(0..nk).any(|j| ctx.allowed(i, j))) {
        return Err(Error::Contract(format!("query row {i} has no allowed key")));
    }
    let buckets = params.dims.distance_cap + 2;
    if let Some(&b) = ctx.buckets.iter().find(|&&b| b >= buckets) {
        return Err(Error::Argument(format!("distance bucket {b} outside {buckets} bias rows")));
    }

    let pairs = PairIndex::new(nq, nk);
    let mask = ctx.additive_mask();
    let d_sub = params.dims.subspace;

    let mut head_outputs = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let weights = head_weights(tape, store, head, params.dims.key, q, k, ctx, &mask, &pairs, use_bias)?;
        let wv = tape.param(store, head.w_v);
        let vp = tape.matmul(v, wv)?;
        let mut v_pair = tape.row_select(vp, &pairs.keys)?;
        if use_bias {
            let t = tape.param(store, head.b_v);
            let b = tape.row_select(t, &ctx.buckets)?;
            v_pair = tape.add(v_pair, b)?;
        }
        let w_col = tape.reshape(weights, &[nq * nk, 1])?;
        let weighted = tape.mul(v_pair, w_col)?;
        let weighted = tape.reshape(weighted, &[nq, nk, d_sub])?;
        head_outputs.push(tape.sum_axis(weighted, 1)?);
    }
    let heads = tape.concat(&head_outputs)?;
    let wo = tape.param(store, params.w_o);
    tape.matmul(heads, wo)
}

/// Softmax attention weights (`rows(q) x rows(k)`) of one head, for inspection.
#[allow(clippy::too_many_arguments)]
pub fn attention_weights(
    tape: &mut Tape,
    store: &ParamStore,
    params: &GraphAttentionParams,
    head: usize,
    q: Var,
    k: Var,
    ctx: &AttentionContext,
    use_bias: bool,
) -> Result<Tensor> {
    let head = params
        .heads
        .get(head)
        .ok_or_else(|| Error::Argument(format!("head {head} of {}", params.heads.len())))?;
    let pairs = PairIndex::new(tape.shape(q)[0], tape.shape(k)[0]);
    let mask = ctx.additive_mask();
    let w = head_weights(tape, store, head, params.dims.key, q, k, ctx, &mask, &pairs, use_bias)?;
    Ok(tape.value(w).clone())
}

/// Flattened (query, key) pair layout, query-major.
struct PairIndex {
    queries: Vec<usize>,
    keys: Vec<usize>,
}

impl PairIndex {
    fn new(nq: usize, nk: usize) -> Self {
        let mut queries = Vec::with_capacity(nq * nk);
        let mut keys = Vec::with_capacity(nq * nk);
        for i in 0..nq {
            for j in 0..nk {
                queries.push(i);
                keys.push(j);
            }
        }
        Self { queries, keys }
    }
}

#[allow(clippy::too_many_arguments)]
fn head_weights(
    tape: &mut Tape,
    store: &ParamStore,
    head: &HeadParams,
    key_width: usize,
    q: Var,
    k: Var,
    ctx: &AttentionContext,
    mask: &Tensor,
    pairs: &PairIndex,
    use_bias: bool,
) -> Result<Var> {
    let (nq, nk) = (ctx.rows, ctx.cols);
    let wq = tape.param(store, head.w_q);
    let wk = tape.param(store, head.w_k);
    let qp = tape.matmul(q, wq)?;
    let kp = tape.matmul(k, wk)?;
    let mut q_pair = tape.row_select(qp, &pairs.queries)?;
    let mut k_pair = tape.row_select(kp, &pairs.keys)?;
    if use_bias {
        let bq = tape.param(store, head.b_q);
        let bk = tape.param(store, head.b_k);
        let bq = tape.row_select(bq, &ctx.buckets)?;
        let bk = tape.row_select(bk, &ctx.buckets)?;
        q_pair = tape.add(q_pair, bq)?;
        k_pair = tape.add(k_pair, bk)?;
    }
    let prod = tape.mul(q_pair, k_pair)?;
    let raw = tape.sum_axis(prod, 1)?;
    let raw = tape.reshape(raw, &[nq, nk])?;
    let scores = tape.scale(raw, 1.0 / (key_width as f64).sqrt());
    tape.softmax(scores, Some(mask))
}

/// Attention followed by a two-layer feed-forward network, each wrapped in a
/// residual connection and layer normalization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SublayerParams {
    pub attention: GraphAttentionParams,
    pub ffn: Mlp,
    pub norm_attention: LayerNorm,
    pub norm_ffn: LayerNorm,
}

impl SublayerParams {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        dims: AttentionDims,
        ffn_hidden: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(dims.query, dims.output, "sublayer needs matching input and output widths");
        Self {
            attention: GraphAttentionParams::register(store, &format!("{name}.attn"), dims, rng),
            ffn: Mlp::register(store, &format!("{name}.ffn"), &[dims.output, ffn_hidden, dims.output], rng),
            norm_attention: LayerNorm::register(store, &format!("{name}.norm1"), dims.output),
            norm_ffn: LayerNorm::register(store, &format!("{name}.norm2"), dims.output),
        }
    }
}

pub fn attention_sublayer(
    tape: &mut Tape,
    store: &ParamStore,
    params: &SublayerParams,
    input: Var,
    ctx: &AttentionContext,
    use_bias: bool,
) -> Result<Var> {
    let attended = g_multi_head(tape, store, &params.attention, input, input, input, ctx, use_bias)?;
    let res = tape.add(input, attended)?;
    let x = params.norm_attention.forward(tape, store, res)?;
    let ff = params.ffn.forward(tape, store, x)?;
    let res = tape.add(x, ff)?;
    params.norm_ffn.forward(tape, store, res)
}
