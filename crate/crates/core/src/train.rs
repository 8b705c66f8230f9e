//! Negative-sampled cross-entropy training with Adam and MRR early stopping.

use std::collections::HashMap;
use std::fmt;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::Adam;
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::experts::{Expert, ExpertSet, ModelConfig, NumericFeatureMap, PoeModel, Scorer};
use crate::rules::{AlignmentIndex, HornRule, RuleIndex};
use crate::split::AlignmentSplit;
use crate::store::{EntityId, KgTag, KnowledgeGraphStore, RelationId, Triple};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub num_negatives: usize,
    pub validate_every: usize,
    pub experts: ExpertSet,
    pub seed: u64,
    pub dim: usize,
    /// Draw corrupted tails from both KGs instead of the true tail's KG.
    pub negatives_from_all_entities: bool,
    /// Give within-KG relations numeric slots and train them with `N`.
    pub numeric_all_relations: bool,
    /// Run on a single thread.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            batch_size: 512,
            max_epochs: 100,
            num_negatives: 500,
            validate_every: 5,
            experts: ExpertSet::ALL,
            seed: 0,
            dim: 100,
            negatives_from_all_entities: false,
            numeric_all_relations: false,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("validate_every", self.validate_every),
            ("dim", self.dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn model_config(&self) -> ModelConfig {
        ModelConfig { dim: self.dim, numeric_all_relations: self.numeric_all_relations }
    }
}

/// A positive triple, its corrupted copies and the experts that score them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub head: EntityId,
    pub relation: RelationId,
    /// `tails[0]` is the true tail.
    pub tails: Vec<EntityId>,
    pub experts: ExpertSet,
    /// Ids of the rules whose bodies hold, per tail.
    pub fired: Vec<Vec<u32>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.tails.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tails.is_empty()
    }
}

/// The true tail followed by `n` tails drawn uniformly with replacement from
/// the true tail's KG, or from both KGs when `all_entities` is set.
pub fn negative_sample<R: Rng>(
    triple: Triple,
    store: &KnowledgeGraphStore,
    n: usize,
    all_entities: bool,
    rng: &mut R,
) -> Result<Vec<EntityId>> {
    let own = store.side(triple.tail.kg).entity_count();
    let (first, first_count) = (triple.tail.kg, own);
    let other = store.side(first.other()).entity_count();
    let size = if all_entities { own + other } else { own };
    if size == 0 {
        return Err(Error::invalid("corruption pool is empty"));
    }
    let mut tails = Vec::with_capacity(n + 1);
    tails.push(triple.tail);
    for _ in 0..n {
        let i = rng.random_range(0..size);
        tails.push(if i < first_count {
            EntityId { kg: first, index: i as u32 }
        } else {
            EntityId { kg: first.other(), index: (i - first_count) as u32 }
        });
    }
    Ok(tails)
}

/// `(loss, probabilities)` of a softmax over `scores` with the positive at
/// index 0. The maximum is subtracted before exponentiating.
pub fn softmax_loss(scores: &[f64]) -> (f64, Vec<f64>) {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
    let lse = max + sum.ln();
    let probs = scores.iter().map(|s| (s - lse).exp()).collect();
    (lse - scores[0], probs)
}

/// Fixed number of gradient partitions, so reductions do not depend on the
/// thread count.
const GRAD_CHUNKS: usize = 8;

/// Reusable per-chunk gradient buffers.
pub struct GradWorkspace {
    chunks: Vec<ChunkBuffer>,
    dim: usize,
    dense_from: usize,
}

struct ChunkBuffer {
    grad: Vec<f64>,
    rows: Vec<usize>,
}

impl GradWorkspace {
    pub fn new(model: &PoeModel) -> Self {
        let n = model.params().len();
        GradWorkspace {
            chunks: (0..GRAD_CHUNKS).map(|_| ChunkBuffer { grad: vec![0.0; n], rows: Vec::new() }).collect(),
            dim: model.dim(),
            dense_from: model.layout().rule_weights,
        }
    }
}

/// Mean loss of `batch` and its gradient with respect to every parameter.
pub fn batch_loss(model: &PoeModel, store: &KnowledgeGraphStore, batch: &[CandidateSet]) -> Result<(f64, Vec<f64>)> {
    let mut ws = GradWorkspace::new(model);
    let mut grad = vec![0.0; model.params().len()];
    let loss = batch_loss_into(model, store, batch, &mut ws, &mut grad)?;
    Ok((loss, grad))
}

/// Like [`batch_loss`] but adds the gradient into `grad`.
pub fn batch_loss_into(
    model: &PoeModel,
    store: &KnowledgeGraphStore,
    batch: &[CandidateSet],
    ws: &mut GradWorkspace,
    grad: &mut [f64],
) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let inv_b = 1.0 / batch.len() as f64;
    let chunk_len = batch.len().div_ceil(GRAD_CHUNKS);
    let losses: Vec<Result<f64>> = batch
        .par_chunks(chunk_len)
        .zip(ws.chunks.par_iter_mut())
        .map(|(sets, buf)| {
            let mut total = 0.0;
            for cs in sets {
                total += example_loss(model, store, cs, inv_b, buf)?;
            }
            Ok(total)
        })
        .collect();
    let mut loss = 0.0;
    for l in losses {
        loss += l?;
    }
    let (k, dense_from) = (ws.dim, ws.dense_from);
    for buf in &mut ws.chunks {
        buf.rows.sort_unstable();
        buf.rows.dedup();
        for &at in &buf.rows {
            for (g, b) in grad[at..at + k].iter_mut().zip(&mut buf.grad[at..at + k]) {
                *g += *b;
                *b = 0.0;
            }
        }
        buf.rows.clear();
        for (g, b) in grad[dense_from..].iter_mut().zip(&mut buf.grad[dense_from..]) {
            *g += *b;
            *b = 0.0;
        }
    }
    Ok(loss * inv_b)
}

fn example_loss(
    model: &PoeModel,
    store: &KnowledgeGraphStore,
    cs: &CandidateSet,
    inv_b: f64,
    buf: &mut ChunkBuffer,
) -> Result<f64> {
    let scores: Vec<f64> = cs
        .tails
        .iter()
        .zip(&cs.fired)
        .map(|(&t, f)| model.score_parts(store, cs.head, cs.relation, t, f, cs.experts).total(cs.experts))
        .collect();
    let (loss, probs) = softmax_loss(&scores);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss {
            triple: format!(
                "<{}> <{}> <{}>",
                store.entity_iri(cs.head),
                store.relation_iri(cs.relation),
                store.entity_iri(cs.tails[0])
            ),
            detail: format!("loss {loss}, positive score {}", scores[0]),
        });
    }
    let layout = model.layout();
    let k = model.dim();
    if cs.experts.contains(Expert::Latent) {
        buf.rows.push(layout.entities + model.entity_slot(cs.head) * k);
        buf.rows.push(layout.relations + model.relation_slot(cs.relation) * k);
    }
    for (i, ((&t, f), p)) in cs.tails.iter().zip(&cs.fired).zip(&probs).enumerate() {
        let coeff = (p - if i == 0 { 1.0 } else { 0.0 }) * inv_b;
        model.accumulate_gradient(store, cs.head, cs.relation, t, f, cs.experts, coeff, &mut buf.grad);
        if cs.experts.contains(Expert::Latent) {
            buf.rows.push(layout.entities + model.entity_slot(t) * k);
        }
    }
    Ok(loss)
}

/// Training triples with their expert sets and precomputed rule firings.
pub struct TrainingData<'a> {
    store: &'a KnowledgeGraphStore,
    examples: Vec<Triple>,
    same_as_experts: ExpertSet,
    relational_experts: Option<ExpertSet>,
    fired: HashMap<u32, HashMap<u32, Vec<u32>>>,
    all_entities: bool,
}

impl<'a> TrainingData<'a> {
    /// `sameAs` training alignments, then both KGs' relational triples if any
    /// selected expert applies to them.
    pub fn new(
        store: &'a KnowledgeGraphStore,
        model: &PoeModel,
        context: &AlignmentIndex,
        split: &AlignmentSplit,
        config: &TrainConfig,
    ) -> Self {
        let experts = config.experts;
        let mut relational = experts.contains(Expert::Latent).then_some(ExpertSet::only(Expert::Latent));
        if config.numeric_all_relations && experts.contains(Expert::Numerical) {
            relational = Some(relational.map_or(ExpertSet::only(Expert::Numerical), |s| s.with(Expert::Numerical)));
        }
        let mut examples: Vec<Triple> = split
            .train
            .iter()
            .map(|al| {
                let (head, tail) = al.entities();
                Triple { head, relation: RelationId::SAME_AS, tail }
            })
            .collect();
        if relational.is_some() {
            for kg in [KgTag::A, KgTag::B] {
                examples.extend(store.side(kg).triples().map(|(h, r, t)| Triple {
                    head: EntityId { kg, index: h },
                    relation: RelationId::within(kg, r),
                    tail: EntityId { kg, index: t },
                }));
            }
        }
        let mut fired = HashMap::new();
        if experts.contains(Expert::Relational) && !model.rules().is_empty() {
            let index = RuleIndex::new(model.rules());
            let mut heads: Vec<u32> = split.train.iter().map(|al| al.a).collect();
            heads.sort_unstable();
            heads.dedup();
            fired = heads.par_iter().map(|&h| (h, index.fired_from_head(store, context, h))).collect();
        }
        TrainingData {
            store,
            examples,
            same_as_experts: experts,
            relational_experts: relational,
            fired,
            all_entities: config.negatives_from_all_entities,
        }
    }

    pub fn examples(&self) -> &[Triple] {
        &self.examples
    }

    pub fn candidate_set<R: Rng>(&self, triple: Triple, n: usize, rng: &mut R) -> Result<CandidateSet> {
        let tails = negative_sample(triple, self.store, n, self.all_entities, rng)?;
        let experts = if triple.relation.is_same_as() {
            self.same_as_experts
        } else {
            self.relational_experts.unwrap_or(self.same_as_experts)
        };
        let by_tail = self.fired.get(&triple.head.index).filter(|_| triple.relation.is_same_as());
        let fired = tails
            .iter()
            .map(|t| match by_tail {
                Some(m) if t.kg == KgTag::B => m.get(&t.index).cloned().unwrap_or_default(),
                _ => Vec::new(),
            })
            .collect();
        Ok(CandidateSet { head: triple.head, relation: triple.relation, tails, experts, fired })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub epoch: usize,
    pub mean_loss: f64,
    /// `None` when the split has no validation alignments.
    pub valid_mrr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub entries: Vec<LogEntry>,
}

impl fmt::Display for TrainLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let mrr = e.valid_mrr.map_or_else(|| "nan".to_string(), |m| format!("{m:.6}"));
            writeln!(f, "{}\t{:.6}\t{mrr}", e.epoch, e.mean_loss)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the best validation MRR.
    pub model: PoeModel,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub best_mrr: Option<f64>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    rng
}

/// Fits a model on `split.train` plus the relational triples of both KGs.
pub fn train(
    store: &KnowledgeGraphStore,
    rules: &[HornRule],
    split: &AlignmentSplit,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(Error::invalid("training alignments are empty"));
    }
    if config.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        pool.install(|| train_inner(store, rules, split, config))
    } else {
        train_inner(store, rules, split, config)
    }
}

fn train_inner(
    store: &KnowledgeGraphStore,
    rules: &[HornRule],
    split: &AlignmentSplit,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut features = NumericFeatureMap::for_same_as(store, &split.train);
    if config.numeric_all_relations {
        features.add_within_kg_relations(store);
    }
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = PoeModel::new(store, rules.to_vec(), features, config.model_config(), &mut init_rng)?;
    let context = AlignmentIndex::new(store, &split.train);
    let data = TrainingData::new(store, &model, &context, split, config);
    let n = data.examples().len();
    info!(
        "training {} on {} alignments and {} relational triples, {} parameters",
        config.experts,
        split.train.len(),
        n - split.train.len(),
        model.params().len()
    );

    let validate = |model: &PoeModel| -> Result<Option<f64>> {
        if split.valid.is_empty() {
            return Ok(None);
        }
        let scorer = Scorer::new(model, store, &context, config.experts)?;
        Ok(Some(evaluate(&scorer, &split.valid, &[1, 10])?.combined.mrr))
    };

    let mut log = TrainLog::default();
    let mut ws = GradWorkspace::new(&model);
    let mut grad = vec![0.0; model.params().len()];

    if !config.experts.is_trainable() {
        let mut rng = epoch_rng(config.seed, 0);
        let mut total = 0.0;
        for triples in data.examples().chunks(config.batch_size) {
            let batch = triples
                .iter()
                .map(|&t| data.candidate_set(t, config.num_negatives, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            total += batch_loss_into(&model, store, &batch, &mut ws, &mut grad)? * batch.len() as f64;
        }
        let valid_mrr = validate(&model)?;
        log.entries.push(LogEntry { epoch: 0, mean_loss: total / n as f64, valid_mrr });
        return Ok(TrainOutcome { model, log, best_epoch: 0, best_mrr: valid_mrr });
    }

    let mut adam = Adam::new(config.learning_rate, model.params().len());
    let mut order: Vec<usize> = (0..n).collect();
    let mut best: Option<(usize, f64, PoeModel)> = None;
    let mut previous: Option<f64> = None;
    for epoch in 1..=config.max_epochs {
        let epoch_start = model.clone();
        let mut rng = epoch_rng(config.seed, epoch);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch = idx
                .iter()
                .map(|&i| data.candidate_set(data.examples()[i], config.num_negatives, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            grad.fill(0.0);
            total += batch_loss_into(&model, store, &batch, &mut ws, &mut grad)? * batch.len() as f64;
            adam.update(model.params_mut(), &grad);
            if !model.all_finite() {
                return Err(Error::Diverged {
                    epoch,
                    detail: format!("non-finite parameters after step {}", adam.steps()),
                    last_finite: Some(Box::new(epoch_start)),
                });
            }
        }
        let mean_loss = total / n as f64;
        debug!("epoch {epoch} mean loss {mean_loss:.6}");
        if epoch % config.validate_every != 0 && epoch != config.max_epochs {
            continue;
        }
        let valid_mrr = validate(&model)?;
        log.entries.push(LogEntry { epoch, mean_loss, valid_mrr });
        let Some(mrr) = valid_mrr else { continue };
        info!("epoch {epoch} mean loss {mean_loss:.6} validation MRR {mrr:.4}");
        if best.as_ref().is_none_or(|b| mrr > b.1) {
            best = Some((epoch, mrr, model.clone()));
        }
        if previous.is_some_and(|p| mrr < p) {
            info!("validation MRR decreased; stopping");
            break;
        }
        previous = Some(mrr);
    }
    Ok(match best {
        Some((best_epoch, mrr, model)) => TrainOutcome { model, log, best_epoch, best_mrr: Some(mrr) },
        None => {
            let best_epoch = log.entries.last().map_or(0, |e| e.epoch);
            TrainOutcome { model, log, best_epoch, best_mrr: None }
        }
    })
}
