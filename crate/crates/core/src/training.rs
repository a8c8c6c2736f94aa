//! Teacher-forced maximum-likelihood training.
//!
//! Every step's loss is computed from ground-truth conditioning: the prefix
//! graph, the next node's true label and the true labels of earlier edge
//! decisions. All steps of a graph go on one tape and are differentiated
//! together.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{random_bfs_ordering, LabeledGraph, NodeOrdering};
use crate::hash::mix;
use crate::model::{edge_candidates, GramModel, ModelConfig, StepCounters};
use crate::tensor::{clip_grad_norm, Adam, Gradients, Tape, Tensor, Var};

/// Loss of one graph under one ordering.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossReport {
    /// Summed negative log-likelihood.
    pub nll: f64,
    /// Node-label predictions, including the final EOS prediction.
    pub node_steps: usize,
    pub edge_decisions: usize,
    /// Ground-truth edges that fell outside the candidate list.
    pub dropped_edges: usize,
    /// One entry per generated node (the EOS step is not included).
    pub steps: Vec<StepCounters>,
}

impl LossReport {
    pub fn mean_alpha(&self) -> f64 {
        mean(self.steps.iter().map(|c| c.alpha as f64))
    }

    pub fn mean_beta(&self) -> f64 {
        mean(self.steps.iter().map(|c| c.beta as f64))
    }

    pub fn attention_pairs(&self) -> usize {
        self.steps.iter().map(|c| c.attention_pairs).sum()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

fn check_trainable(model: &GramModel, g: &LabeledGraph, ord: &NodeOrdering) -> Result<LabeledGraph> {
    let n_min = model.config().n_min;
    if g.n() <= n_min {
        return Err(Error::GraphTooSmall { n: g.n(), n_min });
    }
    if ord.len() != g.n() {
        return Err(Error::Ordering(format!("ordering of {} nodes for graph of {}", ord.len(), g.n())));
    }
    g.reorder(ord)
}

/// Records the teacher-forced loss of `g` under `ord` on `tape`, with every
/// step's edge decisions evaluated in one masked attention pass.
pub fn teacher_forced_loss_on(
    model: &GramModel,
    tape: &mut Tape,
    g: &LabeledGraph,
    ord: &NodeOrdering,
) -> Result<(Var, LossReport)> {
    let h = check_trainable(model, g, ord)?;
    let cfg = model.config();
    let (n, no_edge) = (h.n(), cfg.no_edge());
    let mut terms = Vec::new();
    let mut report = LossReport::default();
    for s in cfg.n_min..=n {
        let prefix = h.prefix(s);
        let enc = model.encode_prefix(tape, &prefix)?;
        let logits = model.node_logits(tape, &enc)?;
        let target = if s == n { cfg.eos() } else { h.node_label(s) };
        terms.push(tape.cross_entropy(logits, &[target])?);
        report.node_steps += 1;
        if s == n {
            break;
        }
        let candidates = edge_candidates(&prefix, cfg.variant)?;
        let decided: Vec<usize> = candidates
            .nodes
            .iter()
            .map(|&t| h.edge_label(t, s).unwrap_or(no_edge))
            .collect();
        let true_edges = h.neighbors(s).iter().filter(|&&t| t < s).count();
        let alpha = decided.iter().filter(|&&l| l != no_edge).count();
        report.dropped_edges += true_edges - alpha;
        let edge_logits = model.edge_logits(tape, &enc, h.node_label(s), &candidates, &decided)?;
        terms.push(tape.cross_entropy(edge_logits, &decided)?);
        report.edge_decisions += candidates.nodes.len();
        report.steps.push(StepCounters {
            alpha,
            beta: candidates.frontier_size,
            edge_decisions: candidates.nodes.len(),
            attention_pairs: (0..candidates.nodes.len())
                .map(|i| candidates.keys_for(i, &decided, no_edge).len())
                .sum(),
        });
    }
    let per_step: Vec<Var> = terms.into_iter().map(|t| tape.sum(t)).collect();
    let all = tape.concat(&per_step)?;
    let loss = tape.sum(all);
    report.nll = tape.value(loss).item();
    Ok((loss, report))
}

pub fn teacher_forced_loss(model: &GramModel, g: &LabeledGraph, ord: &NodeOrdering) -> Result<LossReport> {
    let mut tape = Tape::new();
    Ok(teacher_forced_loss_on(model, &mut tape, g, ord)?.1)
}

/// Loss and parameter gradients of one graph.
pub fn loss_and_gradients(model: &GramModel, g: &LabeledGraph, ord: &NodeOrdering) -> Result<(LossReport, Gradients)> {
    let mut tape = Tape::new();
    let (loss, report) = teacher_forced_loss_on(model, &mut tape, g, ord)?;
    let grads = tape.backward(loss)?;
    Ok((report, grads))
}

/// The same loss evaluated one decision at a time: every edge estimation runs
/// its own attention over exactly the keys it may see, in generation order.
pub fn sequential_loss(model: &GramModel, g: &LabeledGraph, ord: &NodeOrdering) -> Result<f64> {
    let h = check_trainable(model, g, ord)?;
    let cfg = model.config();
    let (n, no_edge) = (h.n(), cfg.no_edge());
    let mut total = 0.0;
    for s in cfg.n_min..=n {
        let prefix = h.prefix(s);
        let mut tape = Tape::new();
        let enc = model.encode_prefix(&mut tape, &prefix)?;
        let logits = model.node_logits(&mut tape, &enc)?;
        let target = if s == n { cfg.eos() } else { h.node_label(s) };
        let nll = tape.cross_entropy(logits, &[target])?;
        total += tape.value(nll).item();
        if s == n {
            break;
        }
        let candidates = edge_candidates(&prefix, cfg.variant)?;
        let mut decided = Vec::with_capacity(candidates.nodes.len());
        for (i, &t) in candidates.nodes.iter().enumerate() {
            let keys: Vec<(usize, usize)> = candidates
                .keys_for(i, &decided, no_edge)
                .into_iter()
                .map(|j| (candidates.nodes[j], decided[j]))
                .collect();
            let logits = model.edge_logits_single(&mut tape, &enc, h.node_label(s), t, &keys)?;
            let label = h.edge_label(t, s).unwrap_or(no_edge);
            let nll = tape.cross_entropy(logits, &[label])?;
            total += tape.value(nll).item();
            decided.push(label);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Draw a fresh BFS ordering of every graph each epoch.
    pub resample_orderings: bool,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
            resample_orderings: true,
            clip_norm: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_nll: f64,
    pub mean_alpha: f64,
    pub mean_beta: f64,
    /// Ground-truth edges left out of the loss (always 0 under BFS orderings).
    #[serde(default)]
    pub dropped_edges: usize,
}

pub fn write_history<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,mean_nll,mean_alpha,mean_beta")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, r.mean_nll, r.mean_alpha, r.mean_beta)?;
    }
    Ok(())
}

pub fn save_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_history(std::io::BufWriter::new(file), history).map_err(|e| Error::io(path, e))
}

/// Mutable training state: model, optimizer, shuffling rng and history.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: GramModel,
    pub optimizer: Adam,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    epoch: usize,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: GramModel, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            model,
            optimizer: Adam::new(config.learning_rate),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            history: Vec::new(),
            epoch: 0,
        })
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// BFS orderings used in `epoch`. Orderings come from their own stream so
    /// that they do not depend on the shuffling history.
    pub fn orderings(&self, dataset: &[LabeledGraph], epoch: usize) -> Result<Vec<NodeOrdering>> {
        let round = if self.config.resample_orderings { epoch as u64 } else { 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, round));
        dataset.iter().map(|g| random_bfs_ordering(g, &mut rng)).collect()
    }

    /// Runs one epoch of minibatch updates and appends its history row.
    pub fn train_epoch(&mut self, dataset: &[LabeledGraph]) -> Result<EpochRecord> {
        let n_min = self.model.config().n_min;
        let usable: Vec<usize> = (0..dataset.len()).filter(|&i| dataset[i].n() > n_min).collect();
        if usable.is_empty() {
            return Err(Error::Argument(format!("no training graph has more than {n_min} nodes")));
        }
        if self.epoch == 0 && usable.len() < dataset.len() {
            log::warn!("skipping {} graphs with at most {n_min} nodes", dataset.len() - usable.len());
        }
        let orderings = self.orderings(dataset, self.epoch)?;
        let mut order = usable;
        order.shuffle(&mut self.rng);

        let (mut nll, mut alpha, mut beta, mut dropped) = (0.0, 0.0, 0.0, 0);
        for batch in order.chunks(self.config.batch_size) {
            let results = evaluate_batch(&self.model, dataset, &orderings, batch)?;
            let scale = 1.0 / batch.len() as f64;
            for (report, grads) in &results {
                self.model.store_mut().accumulate(grads, scale)?;
                nll += report.nll;
                alpha += report.mean_alpha();
                beta += report.mean_beta();
                dropped += report.dropped_edges;
            }
            if self.config.clip_norm > 0.0 {
                clip_grad_norm(self.model.store_mut(), self.config.clip_norm);
            }
            self.optimizer.step(self.model.store_mut());
        }
        self.epoch += 1;
        let count = order.len() as f64;
        let record = EpochRecord {
            epoch: self.epoch,
            mean_nll: nll / count,
            mean_alpha: alpha / count,
            mean_beta: beta / count,
            dropped_edges: dropped,
        };
        if !record.mean_nll.is_finite() {
            return Err(Error::Contract(format!("non-finite loss in epoch {}", self.epoch)));
        }
        self.history.push(record);
        Ok(record)
    }

    /// Trains until `config.epochs` epochs are complete, calling `on_epoch`
    /// after each one.
    pub fn train<F>(&mut self, dataset: &[LabeledGraph], mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&Trainer) -> Result<()>,
    {
        if dataset.is_empty() {
            return Err(Error::Argument("empty training set".into()));
        }
        while self.epoch < self.config.epochs {
            self.train_epoch(dataset)?;
            on_epoch(self)?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model_config: self.model.config().clone(),
            train_config: self.config.clone(),
            params: self
                .model
                .store()
                .iter()
                .map(|(_, p)| CheckpointParam {
                    name: p.name.clone(),
                    value: p.value.clone(),
                    first_moment: p.first_moment.clone(),
                    second_moment: p.second_moment.clone(),
                })
                .collect(),
            optimizer: self.optimizer.clone(),
            epoch: self.epoch as u64,
            rng: RngState::capture(&self.rng),
            history: self.history.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut model = GramModel::new(ckpt.model_config.clone(), 0)?;
        let mut moments = Vec::with_capacity(ckpt.params.len());
        let values = ckpt
            .params
            .into_iter()
            .map(|p| {
                moments.push((p.name.clone(), p.first_moment, p.second_moment));
                (p.name, p.value)
            })
            .collect();
        model.load_values(values)?;
        for (name, m, v) in moments {
            let id = model.store().id(&name).expect("validated by load_values");
            let p = model.store_mut().get_mut(id);
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(Error::CorruptCheckpoint(format!("optimizer moments of {name} have the wrong shape")));
            }
            p.first_moment = m;
            p.second_moment = v;
        }
        Ok(Self {
            model,
            optimizer: ckpt.optimizer,
            config: ckpt.train_config,
            history: ckpt.history,
            epoch: ckpt.epoch as usize,
            rng: ckpt.rng.restore(),
        })
    }
}

type BatchResult = Vec<(LossReport, Gradients)>;

#[cfg(feature = "parallel")]
fn evaluate_batch(
    model: &GramModel,
    dataset: &[LabeledGraph],
    orderings: &[NodeOrdering],
    batch: &[usize],
) -> Result<BatchResult> {
    use rayon::prelude::*;
    batch
        .par_iter()
        .map(|&i| loss_and_gradients(model, &dataset[i], &orderings[i]))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn evaluate_batch(
    model: &GramModel,
    dataset: &[LabeledGraph],
    orderings: &[NodeOrdering],
    batch: &[usize],
) -> Result<BatchResult> {
    batch
        .iter()
        .map(|&i| loss_and_gradients(model, &dataset[i], &orderings[i]))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointParam {
    pub name: String,
    pub value: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

/// Everything needed to resume training or to sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: Vec<CheckpointParam>,
    pub optimizer: Adam,
    pub epoch: u64,
    pub rng: RngState,
    pub history: Vec<EpochRecord>,
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"GRAMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    model: ModelConfig,
    train: TrainConfig,
    history: Vec<EpochRecord>,
}

impl Checkpoint {
    pub fn model(&self) -> Result<GramModel> {
        let mut model = GramModel::new(self.model_config.clone(), 0)?;
        model.load_values(self.params.iter().map(|p| (p.name.clone(), p.value.clone())).collect())?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let header = serde_json::to_vec(&CheckpointHeader {
            model: self.model_config.clone(),
            train: self.train_config.clone(),
            history: self.history.clone(),
        })
        .expect("config serializes");
        put_u64(&mut out, header.len() as u64);
        out.extend_from_slice(&header);

        put_u64(&mut out, self.params.len() as u64);
        for p in &self.params {
            put_u32(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put_u32(&mut out, p.value.rank() as u32);
            for &e in p.value.shape() {
                put_u64(&mut out, e as u64);
            }
            put_f64s(&mut out, p.value.data());
        }

        let opt = &self.optimizer;
        for v in [opt.learning_rate, opt.beta1, opt.beta2, opt.eps] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        put_u64(&mut out, opt.step);
        for p in &self.params {
            put_f64s(&mut out, p.first_moment.data());
            put_f64s(&mut out, p.second_moment.data());
        }

        put_u64(&mut out, self.epoch);
        out.extend_from_slice(&self.rng.seed);
        put_u64(&mut out, self.rng.stream);
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let header_len = r.len()?;
        let header: CheckpointHeader = serde_json::from_slice(r.take(header_len)?)
            .map_err(|e| Error::CorruptCheckpoint(format!("header: {e}")))?;

        let count = r.len()?;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("parameter name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let data = r.f64s(shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).unwrap_or(usize::MAX))?;
            let value = Tensor::new(shape, data)
                .map_err(|_| Error::CorruptCheckpoint(format!("parameter {name} has an empty extent")))?;
            params.push(CheckpointParam {
                name,
                first_moment: Tensor::zeros(value.shape()),
                second_moment: Tensor::zeros(value.shape()),
                value,
            });
        }

        let mut optimizer = Adam::new(r.f64()?);
        optimizer.beta1 = r.f64()?;
        optimizer.beta2 = r.f64()?;
        optimizer.eps = r.f64()?;
        optimizer.step = r.u64()?;
        for p in &mut params {
            let shape = p.value.shape().to_vec();
            p.first_moment = Tensor::new(shape.clone(), r.f64s(p.value.len())?)?;
            p.second_moment = Tensor::new(shape, r.f64s(p.value.len())?)?;
        }

        let epoch = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        if r.pos != bytes.len() {
            return Err(Error::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self {
            model_config: header.model,
            train_config: header.train,
            params,
            optimizer,
            epoch,
            rng: RngState { seed, stream, word_pos },
            history: header.history,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Checkpoint holding only model weights (fresh optimizer state).
pub fn model_checkpoint(model: &GramModel, train_config: TrainConfig) -> Result<Checkpoint> {
    let trainer = Trainer::new(model.clone(), train_config)?;
    Ok(trainer.checkpoint())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptCheckpoint("length overflows".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        let bytes = self.take(count.saturating_mul(8))?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    fn config(variant: Variant) -> ModelConfig {
        ModelConfig {
            node_labels: 2,
            edge_labels: 2,
            d_model: 8,
            heads: 2,
            d_ff: 8,
            blocks: 1,
            radius: 2,
            distance_cap: 3,
            variant,
            n_min: 2,
            ..ModelConfig::default()
        }
    }

    fn square_with_tail() -> LabeledGraph {
        LabeledGraph::from_parts(2, 2, vec![0, 1, 0, 1, 0], &[(0, 1, 0), (1, 2, 1), (2, 3, 0), (3, 0, 1), (3, 4, 0)])
            .unwrap()
    }

    #[test]
    fn too_small_graph_is_signalled() {
        let model = GramModel::new(config(Variant::Plain), 0).unwrap();
        let g = LabeledGraph::from_parts(2, 2, vec![0, 1], &[(0, 1, 0)]).unwrap();
        let err = teacher_forced_loss(&model, &g, &NodeOrdering::identity(2)).unwrap_err();
        assert!(matches!(err, Error::GraphTooSmall { n: 2, n_min: 2 }));
    }

    #[test]
    fn counts_steps_and_decisions() {
        let model = GramModel::new(config(Variant::Plain), 0).unwrap();
        let g = square_with_tail();
        let r = teacher_forced_loss(&model, &g, &NodeOrdering::identity(5)).unwrap();
        assert_eq!(r.node_steps, 4);
        assert_eq!(r.edge_decisions, 2 + 3 + 4);
        assert_eq!(r.dropped_edges, 0);
        assert!(r.nll.is_finite() && r.nll > 0.0);
    }

    #[test]
    fn parallel_matches_sequential() {
        for variant in Variant::ALL {
            let model = GramModel::new(config(variant), 3).unwrap();
            let g = square_with_tail();
            let ord = NodeOrdering::new(vec![0, 1, 3, 2, 4]).unwrap();
            let par = teacher_forced_loss(&model, &g, &ord).unwrap().nll;
            let seq = sequential_loss(&model, &g, &ord).unwrap();
            assert!((par - seq).abs() <= 1e-12 * seq.abs(), "{variant:?}: {par} vs {seq}");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = GramModel::new(config(Variant::AB), 9).unwrap();
        let mut trainer = Trainer::new(model, TrainConfig { batch_size: 2, ..TrainConfig::default() }).unwrap();
        trainer.train_epoch(&[square_with_tail()]).unwrap();
        let ckpt = trainer.checkpoint();
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ckpt);
        let restored = Trainer::from_checkpoint(back).unwrap();
        assert_eq!(restored.model, trainer.model);
        assert_eq!(restored.epoch(), 1);
    }

    #[test]
    fn checkpoint_errors() {
        let model = GramModel::new(config(Variant::Plain), 1).unwrap();
        let bytes = model_checkpoint(&model, TrainConfig::default()).unwrap().to_bytes();
        assert!(matches!(
            Checkpoint::from_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::CorruptCheckpoint(_))
        ));
        let mut bumped = bytes.clone();
        bumped[8..12].copy_from_slice(&7u32.to_le_bytes());
        match Checkpoint::from_bytes(&bumped) {
            Err(Error::CheckpointVersion { found: 7, expected: 1 }) => {}
            other => panic!("{other:?}"),
        }
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }

    #[test]
    fn history_csv() {
        let mut out = Vec::new();
        let rows = [EpochRecord {
            epoch: 1,
            mean_nll: 2.5,
            mean_alpha: 1.0,
            mean_beta: 2.0,
            dropped_edges: 0,
        }];
        write_history(&mut out, &rows).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "epoch,mean_nll,mean_alpha,mean_beta\n1,2.5,1,2\n");
    }
}
