//! WebAssembly bindings for the browser demo. Each exported function takes
//! and returns JSON strings; the plain-Rust versions are public so they can be
//! tested natively.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use gram::datasets::{generate, CorpusSpec, Family};
use gram::evaluation::{nspdk_features, nspdk_kernel, DEFAULT_DISTANCE, DEFAULT_RADIUS};
use gram::graph::{frontier_nodes, random_bfs_ordering, GraphRecord};
use gram::LabeledGraph;

fn parse_graph(json: &str) -> Result<LabeledGraph, String> {
    let record: GraphRecord = serde_json::from_str(json).map_err(|e| format!("bad graph JSON: {e}"))?;
    LabeledGraph::from_record(&record).map_err(|e| e.to_string())
}

/// One graph of `family` with size in `[n_min, n_max]`, as a corpus record.
pub fn family_graph(family: &str, n_min: usize, n_max: usize, seed: u64) -> Result<String, String> {
    let family: Family = family.parse().map_err(|e: gram::Error| e.to_string())?;
    let spec = CorpusSpec::new(family, 1, n_min, n_max, seed);
    let g = generate(&spec).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&g[0].to_record()).expect("record serializes"))
}

#[derive(Debug, Serialize)]
pub struct FrontierStep {
    /// Original id of the node generated at this step.
    pub node: usize,
    /// Original ids of the frontier the node may connect to.
    pub frontier: Vec<usize>,
    /// Original ids of its neighbors generated earlier.
    pub links: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct FrontierWalk {
    pub order: Vec<usize>,
    /// Entry `i` describes generation of `order[i + 1]`.
    pub steps: Vec<FrontierStep>,
    pub mean_alpha: f64,
    pub mean_beta: f64,
}

pub fn frontier_walk(graph_json: &str, seed: u64) -> Result<FrontierWalk, String> {
    let g = parse_graph(graph_json)?;
    let ord = random_bfs_ordering(&g, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(|e| e.to_string())?;
    let perm = ord.perm();
    let pos = ord.positions();
    let mut steps = Vec::with_capacity(g.n().saturating_sub(1));
    for s in 1..g.n() {
        let range = frontier_nodes(&g, &ord, s).map_err(|e| e.to_string())?;
        let node = perm[s];
        let mut links: Vec<usize> = g.neighbors(node).iter().copied().filter(|&u| pos[u] < s).collect();
        links.sort_by_key(|&u| pos[u]);
        steps.push(FrontierStep {
            node,
            frontier: range.map(|p| perm[p]).collect(),
            links,
        });
    }
    let count = steps.len().max(1) as f64;
    Ok(FrontierWalk {
        order: perm.to_vec(),
        mean_alpha: steps.iter().map(|s| s.links.len() as f64).sum::<f64>() / count,
        mean_beta: steps.iter().map(|s| s.frontier.len() as f64).sum::<f64>() / count,
        steps,
    })
}

/// NSPDK similarity of two graphs in `[0, 1]`.
pub fn similarity(a_json: &str, b_json: &str) -> Result<f64, String> {
    let (a, b) = (parse_graph(a_json)?, parse_graph(b_json)?);
    let fa = nspdk_features(&a, DEFAULT_RADIUS, DEFAULT_DISTANCE);
    let fb = nspdk_features(&b, DEFAULT_RADIUS, DEFAULT_DISTANCE);
    nspdk_kernel(&fa, &fb).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = familyGraph)]
pub fn family_graph_js(family: &str, n_min: usize, n_max: usize, seed: u32) -> Result<String, JsError> {
    family_graph(family, n_min, n_max, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = frontierWalk)]
pub fn frontier_walk_js(graph_json: &str, seed: u32) -> Result<String, JsError> {
    let walk = frontier_walk(graph_json, seed as u64).map_err(|e| JsError::new(&e))?;
    Ok(serde_json::to_string(&walk).expect("walk serializes"))
}

#[wasm_bindgen(js_name = nspdkSimilarity)]
pub fn similarity_js(a_json: &str, b_json: &str) -> Result<f64, JsError> {
    similarity(a_json, b_json).map_err(|e| JsError::new(&e))
}
