use gram::attention::{
    attention_sublayer, attention_weights, bias_lookup, bucket_index, g_multi_head, AttentionContext, AttentionDims,
    GraphAttentionParams, SublayerParams,
};
use gram::graph::shortest_paths;
use gram::tensor::{finite_difference_check, GradCheckConfig, ParamStore, Tape, Tensor};
use gram::LabeledGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dims(heads: usize, width: usize, sub: usize, cap: usize) -> AttentionDims {
    AttentionDims {
        heads,
        query: width,
        key: width,
        value: width,
        subspace: sub,
        output: width,
        distance_cap: cap,
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn mat(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

fn mm(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum())
                .collect()
        })
        .collect()
}

/// Textbook multi-head attention with per-pair biases, written with nested
/// loops and no shared code with the library.
fn reference(
    store: &ParamStore,
    params: &GraphAttentionParams,
    x: &Tensor,
    ctx: &AttentionContext,
    bias: bool,
) -> Vec<Vec<f64>> {
    let xs = mat(x);
    let n = xs.len();
    let mut concat = vec![Vec::new(); n];
    for head in &params.heads {
        let q = mm(&xs, &mat(store.value(head.w_q)));
        let k = mm(&xs, &mat(store.value(head.w_k)));
        let v = mm(&xs, &mat(store.value(head.w_v)));
        let (bq, bk, bv) = (
            mat(store.value(head.b_q)),
            mat(store.value(head.b_k)),
            mat(store.value(head.b_v)),
        );
        for i in 0..n {
            let mut scores = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                if !ctx.allowed(i, j) {
                    continue;
                }
                let d = ctx.bucket(i, j);
                let mut s = 0.0;
                for c in 0..q[i].len() {
                    let (qb, kb) = if bias { (bq[d][c], bk[d][c]) } else { (0.0, 0.0) };
                    s += (q[i][c] + qb) * (k[j][c] + kb);
                }
                scores[j] = s / (params.dims.key as f64).sqrt();
            }
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
            let z: f64 = e.iter().sum();
            for c in 0..v[0].len() {
                let mut o = 0.0;
                for j in 0..n {
                    let vb = if bias { bv[ctx.bucket(i, j)][c] } else { 0.0 };
                    o += e[j] / z * (v[j][c] + vb);
                }
                concat[i].push(o);
            }
        }
    }
    mm(&concat, &mat(store.value(params.w_o)))
}

fn cycle_with_chord() -> LabeledGraph {
    LabeledGraph::from_parts(1, 1, vec![0; 6], &[(0, 1, 0), (1, 2, 0), (2, 3, 0), (3, 4, 0), (4, 5, 0), (5, 0, 0), (0, 3, 0)])
        .unwrap()
}

#[test]
fn bucket_and_lookup_examples() {
    assert_eq!(bucket_index(0, 3), 0);
    assert_eq!(bucket_index(3, 3), 3);
    assert_eq!(bucket_index(7, 3), 4);
    let t = Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    assert_eq!(bias_lookup(&t, 1).unwrap(), &[3.0, 4.0]);
    assert!(bias_lookup(&t, 3).is_err());
}

#[test]
fn matches_loop_reference_with_and_without_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new();
    let params = GraphAttentionParams::register(&mut store, "att", dims(2, 6, 3, 3), &mut rng);
    let g = cycle_with_chord();
    let ctx = AttentionContext::self_attention(&shortest_paths(&g, 3), 2);
    let x = random_matrix(&mut rng, 6, 6);
    for bias in [false, true] {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let out = g_multi_head(&mut tape, &store, &params, xv, xv, xv, &ctx, bias).unwrap();
        let want = reference(&store, &params, &x, &ctx, bias);
        let got = tape.value(out);
        for (i, row) in want.iter().enumerate() {
            for (c, w) in row.iter().enumerate() {
                assert!((got.row(i)[c] - w).abs() < 1e-12, "bias={bias} ({i},{c})");
            }
        }
    }
}

#[test]
fn zero_bias_tables_equal_unbiased_attention() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let params = GraphAttentionParams::register(&mut store, "att", dims(2, 4, 2, 4), &mut rng);
    for h in &params.heads {
        for id in [h.b_q, h.b_k, h.b_v] {
            store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }
    let g = cycle_with_chord();
    let ctx = AttentionContext::self_attention(&shortest_paths(&g, 4), 3);
    let x = random_matrix(&mut rng, 6, 4);
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let a = g_multi_head(&mut tape, &store, &params, xv, xv, xv, &ctx, true).unwrap();
    let b = g_multi_head(&mut tape, &store, &params, xv, xv, xv, &ctx, false).unwrap();
    for (p, q) in tape.value(a).data().iter().zip(tape.value(b).data()) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn single_allowed_key_gets_all_weight() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut store = ParamStore::new();
    let params = GraphAttentionParams::register(&mut store, "att", dims(1, 4, 4, 2), &mut rng);
    let mask = vec![false, true, false];
    let ctx = AttentionContext::new(1, 3, vec![0, 1, 2], mask).unwrap();
    let mut tape = Tape::new();
    let q = tape.constant(random_matrix(&mut rng, 1, 4));
    let k = tape.constant(random_matrix(&mut rng, 3, 4));
    let w = attention_weights(&mut tape, &store, &params, 0, q, k, &ctx, true).unwrap();
    assert_eq!(w.data(), &[0.0, 1.0, 0.0]);
}

#[test]
fn all_masked_row_is_a_contract_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let params = GraphAttentionParams::register(&mut store, "att", dims(1, 4, 4, 2), &mut rng);
    let ctx = AttentionContext::new(1, 2, vec![0, 0], vec![false, false]).unwrap();
    let mut tape = Tape::new();
    let q = tape.constant(random_matrix(&mut rng, 1, 4));
    let k = tape.constant(random_matrix(&mut rng, 2, 4));
    let err = g_multi_head(&mut tape, &store, &params, q, k, k, &ctx, true).unwrap_err();
    assert!(matches!(err, gram::Error::Contract(_)));
}

#[test]
fn bucket_outside_table_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut store = ParamStore::new();
    let params = GraphAttentionParams::register(&mut store, "att", dims(1, 4, 4, 2), &mut rng);
    let ctx = AttentionContext::new(1, 1, vec![4], vec![true]).unwrap();
    let mut tape = Tape::new();
    let q = tape.constant(random_matrix(&mut rng, 1, 4));
    assert!(g_multi_head(&mut tape, &store, &params, q, q, q, &ctx, true).is_err());
}

#[test]
fn node_permutation_permutes_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let params = SublayerParams::register(&mut store, "blk", dims(2, 6, 3, 3), 8, &mut rng);
    let g = cycle_with_chord();
    let ctx = AttentionContext::self_attention(&shortest_paths(&g, 3), 2);
    let x = random_matrix(&mut rng, 6, 6);
    let perm = [3, 0, 5, 1, 4, 2];
    let px = Tensor::matrix(6, 6, perm.iter().flat_map(|&i| x.row(i).to_vec()).collect()).unwrap();
    let pctx = ctx.permuted(&perm, &perm);

    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let out = attention_sublayer(&mut tape, &store, &params, xv, &ctx, true).unwrap();
    let pxv = tape.constant(px);
    let pout = attention_sublayer(&mut tape, &store, &params, pxv, &pctx, true).unwrap();
    for (i, &src) in perm.iter().enumerate() {
        for (a, b) in tape.value(pout).row(i).iter().zip(tape.value(out).row(src)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn sublayer_with_zero_weights_is_normalized_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let params = SublayerParams::register(&mut store, "blk", dims(2, 4, 2, 2), 6, &mut rng);
    let zero: Vec<_> = store
        .iter()
        .filter(|(_, p)| !p.name.contains("norm"))
        .map(|(id, _)| id)
        .collect();
    for id in zero {
        store.value_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let x = Tensor::matrix(2, 4, vec![1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 0.0, 1.0]).unwrap();
    let ctx = AttentionContext::unrestricted(2, 2);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let out = attention_sublayer(&mut tape, &store, &params, xv, &ctx, true).unwrap();
    for i in 0..2 {
        let row = x.row(i);
        let mean = row.iter().sum::<f64>() / 4.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        let once: Vec<f64> = row.iter().map(|v| (v - mean) / (var + 1e-5).sqrt()).collect();
        let m2 = once.iter().sum::<f64>() / 4.0;
        let v2 = once.iter().map(|v| (v - m2).powi(2)).sum::<f64>() / 4.0;
        for (c, o) in once.iter().enumerate() {
            let want = (o - m2) / (v2 + 1e-5).sqrt();
            assert!((tape.value(out).row(i)[c] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn sublayer_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new();
    let params = SublayerParams::register(&mut store, "blk", dims(2, 4, 2, 3), 6, &mut rng);
    let g = cycle_with_chord();
    let ctx = AttentionContext::self_attention(&shortest_paths(&g, 3), 2);
    let x = random_matrix(&mut rng, 6, 4);
    let target = random_matrix(&mut rng, 6, 4);
    let report = finite_difference_check(
        &store,
        |tape, s| {
            let xv = tape.constant(x.clone());
            let out = attention_sublayer(tape, s, &params, xv, &ctx, true)?;
            let t = tape.constant(target.clone());
            let prod = tape.mul(out, t)?;
            Ok(tape.sum(prod))
        },
        GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-5, "{report:?}");
}
