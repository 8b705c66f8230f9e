//! Comparison methods: a logistic regression over concatenated pair
//! features, and a sum of independently trained single-expert models.

use std::path::Path;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adam::Adam;
use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::eval::SameAsScorer;
use crate::experts::{Expert, ExpertSet, NumericFeatureMap, NumericSlot, PoeModel, Scorer};
use crate::rules::{decode_rules, encode_rules, AlignmentIndex, HornRule, RuleIndex};
use crate::split::AlignmentSplit;
use crate::store::{EntityId, KgTag, KnowledgeGraphStore, RelationId};
use crate::train::{train, TrainConfig};

/// Layout of `[î_h, î_t, φ_N(h, t), φ_R(h, t)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairFeatures {
    pub image_dim: usize,
    pub slots: Vec<NumericSlot>,
    pub rules: Vec<HornRule>,
}

impl PairFeatures {
    pub fn new(store: &KnowledgeGraphStore, rules: &[HornRule], train: &[crate::store::Alignment]) -> Self {
        let map = NumericFeatureMap::for_same_as(store, train);
        PairFeatures {
            image_dim: store.image_dim().unwrap_or(0),
            slots: map.slots(store.relation_slot(RelationId::SAME_AS)).to_vec(),
            rules: rules.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        2 * self.image_dim + self.slots.len() + self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Feature vector of `(a, sameAs, b)` given the ids of the rules that
    /// fire for the pair. Missing modalities are zero.
    pub fn vector(&self, store: &KnowledgeGraphStore, a: u32, b: u32, fired: &[u32]) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        let d = self.image_dim;
        if let Some(img) = store.side(KgTag::A).image(a) {
            x[..d].copy_from_slice(img);
        }
        if let Some(img) = store.side(KgTag::B).image(b) {
            x[d..2 * d].copy_from_slice(img);
        }
        let (sa, sb) = (store.side(KgTag::A), store.side(KgTag::B));
        for (j, s) in self.slots.iter().enumerate() {
            x[2 * d + j] = s.value(sa.numeric_value(a, s.head_attr), sb.numeric_value(b, s.tail_attr));
        }
        let off = 2 * d + self.slots.len();
        for &k in fired {
            x[off + k as usize] = 1.0;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearClassifier {
    pub fn zeros(n: usize) -> Self {
        LinearClassifier { weights: vec![0.0; n], bias: 0.0 }
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// Posterior `σ(w·x + b)`.
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.logit(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatConfig {
    pub negatives_per_positive: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for ConcatConfig {
    fn default() -> Self {
        ConcatConfig { negatives_per_positive: 10, learning_rate: 0.001, batch_size: 512, epochs: 100, seed: 0 }
    }
}

/// A fitted Concat baseline with the feature layout it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcatModel {
    pub features: PairFeatures,
    pub classifier: LinearClassifier,
}

/// Labelled pairs for a Concat fit: every positive followed by its
/// corrupted copies with uniform KG B tails.
pub fn concat_training_pairs<R: Rng>(
    store: &KnowledgeGraphStore,
    positives: &[crate::store::Alignment],
    negatives_per_positive: usize,
    rng: &mut R,
) -> Result<Vec<(u32, u32, bool)>> {
    let nb = store.side(KgTag::B).entity_count();
    if nb == 0 {
        return Err(Error::invalid("KG B has no entities to corrupt with"));
    }
    let mut pairs = Vec::with_capacity(positives.len() * (negatives_per_positive + 1));
    for al in positives {
        pairs.push((al.a, al.b, true));
        for _ in 0..negatives_per_positive {
            pairs.push((al.a, rng.random_range(0..nb) as u32, false));
        }
    }
    Ok(pairs)
}

/// Fits `σ(w·x + b)` to labelled feature vectors by minimizing mean sigmoid
/// cross-entropy with Adam.
pub fn fit_logistic(
    xs: &[Vec<f64>],
    labels: &[bool],
    config: &ConcatConfig,
) -> Result<LinearClassifier> {
    if xs.is_empty() {
        return Err(Error::invalid("no training pairs"));
    }
    let n_feat = xs[0].len();
    let mut params = vec![0.0; n_feat + 1];
    let mut adam = Adam::new(config.learning_rate, params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut grad = vec![0.0; params.len()];
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size.max(1)) {
            grad.fill(0.0);
            let inv = 1.0 / idx.len() as f64;
            for &i in idx {
                let z = params[..n_feat].iter().zip(&xs[i]).map(|(w, v)| w * v).sum::<f64>() + params[n_feat];
                let err = (sigmoid(z) - if labels[i] { 1.0 } else { 0.0 }) * inv;
                for (g, v) in grad[..n_feat].iter_mut().zip(&xs[i]) {
                    *g += err * v;
                }
                grad[n_feat] += err;
            }
            adam.update(&mut params, &grad);
        }
        if !params.iter().all(|p| p.is_finite()) {
            return Err(Error::Diverged {
                epoch,
                detail: "non-finite logistic-regression weights".into(),
                last_finite: None,
            });
        }
    }
    let bias = params.pop().unwrap();
    Ok(LinearClassifier { weights: params, bias })
}

pub fn concat_train(
    store: &KnowledgeGraphStore,
    rules: &[HornRule],
    split: &AlignmentSplit,
    config: &ConcatConfig,
) -> Result<ConcatModel> {
    if split.train.is_empty() {
        return Err(Error::invalid("training alignments are empty"));
    }
    let features = PairFeatures::new(store, rules, &split.train);
    let context = AlignmentIndex::new(store, &split.train);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let pairs = concat_training_pairs(store, &split.train, config.negatives_per_positive, &mut rng)?;
    let index = RuleIndex::new(rules);
    let xs: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(a, b, _)| {
            let fired: Vec<u32> = (0..rules.len() as u32)
                .filter(|&k| crate::rules::evaluate_rule_body(store, &rules[k as usize], a, b, &context))
                .collect();
            features.vector(store, a, b, &fired)
        })
        .collect();
    let labels: Vec<bool> = pairs.iter().map(|p| p.2).collect();
    info!("fitting Concat on {} pairs with {} features ({} rules)", xs.len(), features.len(), index.len());
    let classifier = fit_logistic(&xs, &labels, config)?;
    Ok(ConcatModel { features, classifier })
}

impl ConcatModel {
    pub fn score(&self, store: &KnowledgeGraphStore, context: &AlignmentIndex, a: u32, b: u32) -> f64 {
        let fired: Vec<u32> = (0..self.features.rules.len() as u32)
            .filter(|&k| crate::rules::evaluate_rule_body(store, &self.features.rules[k as usize], a, b, context))
            .collect();
        self.classifier.probability(&self.features.vector(store, a, b, &fired))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(CONCAT_MAGIC, CONCAT_VERSION);
        enc.usize(self.features.image_dim);
        enc.usize(self.features.slots.len());
        for s in &self.features.slots {
            enc.u32(s.head_attr);
            enc.u32(s.tail_attr);
            enc.f64(s.sigma);
        }
        encode_rules(&mut enc, &self.features.rules);
        enc.f64s(&self.classifier.weights);
        enc.f64(self.classifier.bias);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let (mut dec, version) = Decoder::new(data, CONCAT_MAGIC, "classifier snapshot")?;
        if version != CONCAT_VERSION {
            return Err(Error::Snapshot(format!("unsupported classifier snapshot version {version}")));
        }
        let image_dim = dec.usize()?;
        let n = dec.usize()?;
        let mut slots = Vec::new();
        for _ in 0..n {
            slots.push(NumericSlot { head_attr: dec.u32()?, tail_attr: dec.u32()?, sigma: dec.f64()? });
        }
        let rules = decode_rules(&mut dec)?;
        let weights = dec.f64s()?;
        let bias = dec.f64()?;
        dec.finish()?;
        let features = PairFeatures { image_dim, slots, rules };
        if weights.len() != features.len() {
            return Err(Error::Snapshot(format!("{} weights for {} features", weights.len(), features.len())));
        }
        if !weights.iter().all(|w| w.is_finite()) || !bias.is_finite() {
            return Err(Error::Snapshot("non-finite classifier weights".into()));
        }
        Ok(ConcatModel { features, classifier: LinearClassifier { weights, bias } })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }
}

const CONCAT_MAGIC: &[u8; 8] = b"MMKGLINC";
const CONCAT_VERSION: u32 = 1;

/// A Concat model bound to its data, scoring every candidate of a query.
pub struct ConcatScorer<'a> {
    pub model: &'a ConcatModel,
    pub store: &'a KnowledgeGraphStore,
    pub context: &'a AlignmentIndex,
    rule_index: RuleIndex,
}

impl<'a> ConcatScorer<'a> {
    pub fn new(model: &'a ConcatModel, store: &'a KnowledgeGraphStore, context: &'a AlignmentIndex) -> Result<Self> {
        if store.image_dim().unwrap_or(0) != model.features.image_dim {
            return Err(Error::invalid("classifier image dimension does not match the store"));
        }
        Ok(ConcatScorer { model, store, context, rule_index: RuleIndex::new(&model.features.rules) })
    }
}

impl SameAsScorer for ConcatScorer<'_> {
    fn tail_scores(&self, head: u32) -> Vec<f64> {
        let fired = self.rule_index.fired_from_head(self.store, self.context, head);
        (0..self.store.side(KgTag::B).entity_count() as u32)
            .map(|t| {
                let f = fired.get(&t).map_or(&[][..], Vec::as_slice);
                self.model.classifier.probability(&self.model.features.vector(self.store, head, t, f))
            })
            .collect()
    }

    fn head_scores(&self, tail: u32) -> Vec<f64> {
        let fired = self.rule_index.fired_from_tail(self.store, self.context, tail);
        (0..self.store.side(KgTag::A).entity_count() as u32)
            .map(|h| {
                let f = fired.get(&h).map_or(&[][..], Vec::as_slice);
                self.model.classifier.probability(&self.model.features.vector(self.store, h, tail, f))
            })
            .collect()
    }
}

/// Independently trained single-family models whose scores are added.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub members: Vec<(ExpertSet, PoeModel)>,
}

/// The families an Ensemble trains, one PoE run each.
pub const ENSEMBLE_FAMILIES: [Expert; 4] = [Expert::Latent, Expert::Relational, Expert::Numerical, Expert::Visual];

/// Trains one single-expert PoE per family in `families` with `config`
/// (its `experts` field is ignored).
pub fn ensemble_train(
    store: &KnowledgeGraphStore,
    rules: &[HornRule],
    split: &AlignmentSplit,
    families: &[Expert],
    config: &TrainConfig,
) -> Result<Ensemble> {
    let mut members = Vec::new();
    for &family in families {
        let experts = ExpertSet::only(family);
        let c = TrainConfig { experts, ..config.clone() };
        let outcome = train(store, rules, split, &c)?;
        info!("ensemble member {experts} best validation MRR {:?}", outcome.best_mrr);
        members.push((experts, outcome.model));
    }
    Ok(Ensemble { members })
}

/// Sum of the members' total scores for one pair.
pub fn ensemble_score(
    members: &[Scorer<'_>],
    h: u32,
    t: u32,
) -> f64 {
    members.iter().map(|s| s.score_total(EntityId::a(h), RelationId::SAME_AS, EntityId::b(t))).sum()
}

/// Scorers of several models added candidate by candidate.
pub struct EnsembleScorer<'a> {
    members: Vec<Scorer<'a>>,
}

impl<'a> EnsembleScorer<'a> {
    pub fn new(
        ensemble: &'a Ensemble,
        store: &'a KnowledgeGraphStore,
        context: &'a AlignmentIndex,
    ) -> Result<Self> {
        let members = ensemble
            .members
            .iter()
            .map(|(experts, model)| Scorer::new(model, store, context, *experts))
            .collect::<Result<Vec<_>>>()?;
        Self::from_scorers(members)
    }

    /// Errors if the scorers were built against different stores.
    pub fn from_scorers(members: Vec<Scorer<'a>>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::invalid("an ensemble needs at least one member"));
        }
        let first = members[0].store;
        if members.iter().any(|m| !std::ptr::eq(m.store, first)) {
            return Err(Error::invalid("ensemble members are bound to different stores"));
        }
        Ok(EnsembleScorer { members })
    }

    pub fn members(&self) -> &[Scorer<'a>] {
        &self.members
    }

    fn add(&self, f: impl Fn(&Scorer<'a>) -> Vec<f64>) -> Vec<f64> {
        let mut total = f(&self.members[0]);
        for m in &self.members[1..] {
            for (t, s) in total.iter_mut().zip(f(m)) {
                *t += s;
            }
        }
        total
    }
}

impl SameAsScorer for EnsembleScorer<'_> {
    fn tail_scores(&self, head: u32) -> Vec<f64> {
        self.add(|m| m.tail_scores(head))
    }

    fn head_scores(&self, tail: u32) -> Vec<f64> {
        self.add(|m| m.head_scores(tail))
    }
}
