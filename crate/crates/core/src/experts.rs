//! Per-(relation, feature type) experts and the parameter bundle they share.
//!
//! Every expert is returned as a log value, so the product of experts is a sum
//! of scores:
//!
//! * latent `L`: `Σ_j e_h[j] · w_r[j] · e_t[j]` over a single entity table
//!   shared by both KGs;
//! * relational `R`: weighted sum of fired rule bodies plus a bias;
//! * numerical `N`: weighted sum of Gaussian RBF slots on attribute
//!   differences plus a bias;
//! * visual `I`: dot product of unit image vectors, `sameAs` only.
//!
//! Missing modalities contribute exactly 0.

use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::Uniform;

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::rules::{decode_rules, encode_rules, AlignmentIndex, HornRule, RuleIndex};
use crate::store::{Alignment, EntityId, KgTag, KnowledgeGraphStore, RelationId, RelationScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Expert {
    Latent,
    Relational,
    Numerical,
    Visual,
}

impl Expert {
    pub const ALL: [Expert; 4] = [Expert::Latent, Expert::Relational, Expert::Numerical, Expert::Visual];

    fn bit(self) -> u8 {
        match self {
            Expert::Latent => 1,
            Expert::Relational => 2,
            Expert::Numerical => 4,
            Expert::Visual => 8,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Expert::Latent => 'l',
            Expert::Relational => 'r',
            Expert::Numerical => 'n',
            Expert::Visual => 'i',
        }
    }
}

/// A non-empty subset of experts, written as a suffix over `l`, `r`, `n`, `i`
/// (`lrni`, `rni`, `i`, ...).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExpertSet(u8);

impl ExpertSet {
    pub const ALL: ExpertSet = ExpertSet(15);

    pub fn only(e: Expert) -> Self {
        ExpertSet(e.bit())
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut bits = 0u8;
        for c in s.chars() {
            let e = Expert::ALL
                .into_iter()
                .find(|e| e.letter() == c.to_ascii_lowercase())
                .ok_or_else(|| Error::invalid(format!("unknown expert letter {c:?} in {s:?}; use l, r, n, i")))?;
            bits |= e.bit();
        }
        if bits == 0 {
            return Err(Error::invalid("expert set must not be empty"));
        }
        Ok(ExpertSet(bits))
    }

    pub fn contains(self, e: Expert) -> bool {
        self.0 & e.bit() != 0
    }

    pub fn with(self, e: Expert) -> Self {
        ExpertSet(self.0 | e.bit())
    }

    pub fn without(self, e: Expert) -> Option<Self> {
        let bits = self.0 & !e.bit();
        (bits != 0).then_some(ExpertSet(bits))
    }

    pub fn iter(self) -> impl Iterator<Item = Expert> {
        Expert::ALL.into_iter().filter(move |e| self.contains(*e))
    }

    /// Canonical suffix in `l r n i` order.
    pub fn suffix(self) -> String {
        self.iter().map(Expert::letter).collect()
    }

    /// Whether any selected expert has learnable parameters.
    pub fn is_trainable(self) -> bool {
        self.iter().any(|e| e != Expert::Visual)
    }
}

impl fmt::Display for ExpertSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PoE-{}", self.suffix())
    }
}

/// One RBF slot: attribute of the head, attribute of the tail, bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericSlot {
    pub head_attr: u32,
    pub tail_attr: u32,
    pub sigma: f64,
}

impl NumericSlot {
    pub fn value(&self, head: Option<f64>, tail: Option<f64>) -> f64 {
        match (head, tail) {
            (Some(vh), Some(vt)) => {
                let d = vh - vt;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            }
            _ => 0.0,
        }
    }
}

pub const SIGMA_FLOOR: f64 = 1e-6;

/// Numeric feature slots per relation slot (see
/// [`KnowledgeGraphStore::relation_slot`]).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumericFeatureMap {
    slots: Vec<Vec<NumericSlot>>,
}

impl NumericFeatureMap {
    /// Empty map for every relation.
    pub fn empty(store: &KnowledgeGraphStore) -> Self {
        NumericFeatureMap { slots: vec![Vec::new(); store.total_relations()] }
    }

    /// `sameAs` slots from the store's cross-KG attribute pairs.
    ///
    /// Each bandwidth is the standard deviation of the value differences over
    /// training alignments (floored at [`SIGMA_FLOOR`]). Pairs observed on
    /// fewer than two training alignments get no slot.
    pub fn for_same_as(store: &KnowledgeGraphStore, train: &[Alignment]) -> Self {
        let mut map = Self::empty(store);
        let a = store.side(KgTag::A);
        let b = store.side(KgTag::B);
        let same_as = store.relation_slot(RelationId::SAME_AS);
        for (ia, ib) in store.attribute_pairs() {
            let diffs = train.iter().filter_map(|al| Some(a.numeric_value(al.a, ia)? - b.numeric_value(al.b, ib)?));
            if let Some(sigma) = bandwidth(diffs) {
                map.slots[same_as].push(NumericSlot { head_attr: ia, tail_attr: ib, sigma });
            }
        }
        map
    }

    /// Adds slots for within-KG relations: each attribute compared between
    /// head and tail, bandwidth from the relation's own triples.
    pub fn add_within_kg_relations(&mut self, store: &KnowledgeGraphStore) {
        for kg in [KgTag::A, KgTag::B] {
            let side = store.side(kg);
            for r in 0..side.relation_count() as u32 {
                let slot = store.relation_slot(RelationId::within(kg, r));
                for attr in 0..side.attribute_count() as u32 {
                    let diffs = side
                        .triples()
                        .filter(|&(_, rel, _)| rel == r)
                        .filter_map(|(h, _, t)| Some(side.numeric_value(h, attr)? - side.numeric_value(t, attr)?));
                    if let Some(sigma) = bandwidth(diffs) {
                        self.slots[slot].push(NumericSlot { head_attr: attr, tail_attr: attr, sigma });
                    }
                }
            }
        }
    }

    pub fn slots(&self, relation_slot: usize) -> &[NumericSlot] {
        self.slots.get(relation_slot).map_or(&[], Vec::as_slice)
    }

    pub fn relation_count(&self) -> usize {
        self.slots.len()
    }

    pub fn total_slots(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }
}

fn bandwidth(diffs: impl Iterator<Item = f64>) -> Option<f64> {
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for d in diffs {
        n += 1;
        sum += d;
        sq += d * d;
    }
    if n < 2 {
        return None;
    }
    let mean = sum / n as f64;
    let var = (sq / n as f64 - mean * mean).max(0.0);
    let sigma = var.sqrt();
    Some(if sigma.is_finite() { sigma.max(SIGMA_FLOOR) } else { SIGMA_FLOOR })
}

/// Hyperparameters fixed when the model is created.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Latent embedding width `k`.
    pub dim: usize,
    /// Give within-KG relations their own numeric slots.
    pub numeric_all_relations: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { dim: 100, numeric_all_relations: false }
    }
}

/// Offsets of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub entities: usize,
    pub relations: usize,
    pub rule_weights: usize,
    pub relational_bias: usize,
    /// Start of each relation's numeric weights; one extra entry marks the end.
    pub numeric_weights: Vec<usize>,
    pub numeric_bias: usize,
    pub total: usize,
}

impl ParamLayout {
    fn new(dim: usize, n_entities: usize, n_relations: usize, n_rules: usize, features: &NumericFeatureMap) -> Self {
        let entities = 0;
        let relations = entities + n_entities * dim;
        let rule_weights = relations + n_relations * dim;
        let relational_bias = rule_weights + n_rules;
        let mut at = relational_bias + n_relations;
        let mut numeric_weights = Vec::with_capacity(n_relations + 1);
        for r in 0..n_relations {
            numeric_weights.push(at);
            at += features.slots(r).len();
        }
        numeric_weights.push(at);
        let numeric_bias = at;
        let total = numeric_bias + n_relations;
        ParamLayout { entities, relations, rule_weights, relational_bias, numeric_weights, numeric_bias, total }
    }

    /// Range of parameters the embedding initializer draws for.
    fn embedding_range(&self) -> std::ops::Range<usize> {
        self.entities..self.rule_weights
    }
}

/// All learnable parameters plus what is needed to interpret them.
#[derive(Debug, Clone, PartialEq)]
pub struct PoeModel {
    dim: usize,
    entities_a: usize,
    entities_b: usize,
    relations_a: usize,
    relations_b: usize,
    image_dim: usize,
    numeric_all_relations: bool,
    features: NumericFeatureMap,
    rules: Vec<HornRule>,
    layout: ParamLayout,
    params: Vec<f64>,
}

/// The four expert log-values of one triple.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ExpertScores {
    pub latent: f64,
    pub relational: f64,
    pub numerical: f64,
    pub visual: f64,
}

impl ExpertScores {
    pub fn total(&self, experts: ExpertSet) -> f64 {
        experts
            .iter()
            .map(|e| match e {
                Expert::Latent => self.latent,
                Expert::Relational => self.relational,
                Expert::Numerical => self.numerical,
                Expert::Visual => self.visual,
            })
            .sum()
    }
}

impl PoeModel {
    /// Creates a model for `store`. Embeddings are drawn uniformly from
    /// `[-6/√k, 6/√k]`; rule weights, numeric weights and biases start at 0.
    pub fn new<R: Rng>(
        store: &KnowledgeGraphStore,
        rules: Vec<HornRule>,
        features: NumericFeatureMap,
        config: ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if config.dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if features.relation_count() != store.total_relations() {
            return Err(Error::invalid("numeric feature map does not match the store's relations"));
        }
        let layout = ParamLayout::new(config.dim, store.total_entities(), store.total_relations(), rules.len(), &features);
        let mut params = vec![0.0; layout.total];
        let bound = 6.0 / (config.dim as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        for p in &mut params[layout.embedding_range()] {
            *p = rng.sample(dist);
        }
        Ok(PoeModel {
            dim: config.dim,
            entities_a: store.side(KgTag::A).entity_count(),
            entities_b: store.side(KgTag::B).entity_count(),
            relations_a: store.side(KgTag::A).relation_count(),
            relations_b: store.side(KgTag::B).relation_count(),
            image_dim: store.image_dim().unwrap_or(0),
            numeric_all_relations: config.numeric_all_relations,
            features,
            rules,
            layout,
            params,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rules(&self) -> &[HornRule] {
        &self.rules
    }

    pub fn features(&self) -> &NumericFeatureMap {
        &self.features
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn numeric_all_relations(&self) -> bool {
        self.numeric_all_relations
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Errors unless the model was built for a store with the same shape.
    pub fn check_store(&self, store: &KnowledgeGraphStore) -> Result<()> {
        let shape = (
            store.side(KgTag::A).entity_count(),
            store.side(KgTag::B).entity_count(),
            store.side(KgTag::A).relation_count(),
            store.side(KgTag::B).relation_count(),
        );
        if shape != (self.entities_a, self.entities_b, self.relations_a, self.relations_b) {
            return Err(Error::invalid(format!(
                "model was built for a store with (|A|, |B|, |R_A|, |R_B|) = {:?}, got {shape:?}",
                (self.entities_a, self.entities_b, self.relations_a, self.relations_b)
            )));
        }
        Ok(())
    }

    pub fn entity_slot(&self, e: EntityId) -> usize {
        match e.kg {
            KgTag::A => e.index as usize,
            KgTag::B => self.entities_a + e.index as usize,
        }
    }

    pub fn relation_slot(&self, r: RelationId) -> usize {
        match r.scope {
            RelationScope::A => r.index as usize,
            RelationScope::B => self.relations_a + r.index as usize,
            RelationScope::Cross => self.relations_a + self.relations_b,
        }
    }

    pub fn entity_embedding(&self, e: EntityId) -> &[f64] {
        let at = self.layout.entities + self.entity_slot(e) * self.dim;
        &self.params[at..at + self.dim]
    }

    pub fn relation_vector(&self, r: RelationId) -> &[f64] {
        let at = self.layout.relations + self.relation_slot(r) * self.dim;
        &self.params[at..at + self.dim]
    }

    pub fn rule_weights(&self) -> &[f64] {
        &self.params[self.layout.rule_weights..self.layout.relational_bias]
    }

    pub fn relational_bias(&self, r: RelationId) -> f64 {
        self.params[self.layout.relational_bias + self.relation_slot(r)]
    }

    pub fn numeric_weights(&self, r: RelationId) -> &[f64] {
        let s = self.relation_slot(r);
        &self.params[self.layout.numeric_weights[s]..self.layout.numeric_weights[s + 1]]
    }

    pub fn numeric_bias(&self, r: RelationId) -> f64 {
        self.params[self.layout.numeric_bias + self.relation_slot(r)]
    }

    /// Diagonal trilinear product `⟨e_h, w_r, e_t⟩`.
    pub fn score_latent(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let (eh, w, et) = (self.entity_embedding(h), self.relation_vector(r), self.entity_embedding(t));
        eh.iter().zip(w).zip(et).map(|((a, b), c)| a * b * c).sum()
    }

    /// Rule-weighted body indicators plus the relation's bias. Only `sameAs`
    /// has rules; other relations score their bias.
    pub fn score_relational(
        &self,
        store: &KnowledgeGraphStore,
        context: &AlignmentIndex,
        h: EntityId,
        r: RelationId,
        t: EntityId,
    ) -> f64 {
        let bias = self.relational_bias(r);
        if !r.is_same_as() {
            return bias;
        }
        let weights = self.rule_weights();
        self.rules
            .iter()
            .zip(weights)
            .filter(|(rule, _)| crate::rules::evaluate_rule_body(store, rule, h.index, t.index, context))
            .map(|(_, w)| w)
            .sum::<f64>()
            + bias
    }

    /// Same as [`score_relational`](Self::score_relational) given the ids of
    /// the rules whose bodies hold.
    pub fn score_relational_fired(&self, r: RelationId, fired: &[u32]) -> f64 {
        let bias = self.relational_bias(r);
        if !r.is_same_as() {
            return bias;
        }
        let w = self.rule_weights();
        fired.iter().map(|&k| w[k as usize]).sum::<f64>() + bias
    }

    /// RBF slot values of a triple, in slot order.
    pub fn numeric_slots(&self, store: &KnowledgeGraphStore, h: EntityId, r: RelationId, t: EntityId) -> Vec<f64> {
        let slots = self.features.slots(self.relation_slot(r));
        if !attribute_sides_match(h, r, t) {
            return vec![0.0; slots.len()];
        }
        let hs = store.side(h.kg);
        let ts = store.side(t.kg);
        slots
            .iter()
            .map(|s| s.value(hs.numeric_value(h.index, s.head_attr), ts.numeric_value(t.index, s.tail_attr)))
            .collect()
    }

    pub fn score_numerical(&self, store: &KnowledgeGraphStore, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        if !attribute_sides_match(h, r, t) {
            return self.numeric_bias(r);
        }
        let hs = store.side(h.kg);
        let ts = store.side(t.kg);
        self.features
            .slots(self.relation_slot(r))
            .iter()
            .zip(self.numeric_weights(r))
            .map(|(s, w)| w * s.value(hs.numeric_value(h.index, s.head_attr), ts.numeric_value(t.index, s.tail_attr)))
            .sum::<f64>()
            + self.numeric_bias(r)
    }

    pub fn score_visual(&self, store: &KnowledgeGraphStore, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        visual_score(store, h, r, t)
    }

    /// All four expert values, using a precomputed fired-rule list.
    pub fn score_parts(
        &self,
        store: &KnowledgeGraphStore,
        h: EntityId,
        r: RelationId,
        t: EntityId,
        fired: &[u32],
        experts: ExpertSet,
    ) -> ExpertScores {
        let mut s = ExpertScores::default();
        if experts.contains(Expert::Latent) {
            s.latent = self.score_latent(h, r, t);
        }
        if experts.contains(Expert::Relational) {
            s.relational = self.score_relational_fired(r, fired);
        }
        if experts.contains(Expert::Numerical) {
            s.numerical = self.score_numerical(store, h, r, t);
        }
        if experts.contains(Expert::Visual) {
            s.visual = visual_score(store, h, r, t);
        }
        s
    }

    /// Adds `coeff · ∂score_total/∂θ` for the active experts into `grad`,
    /// laid out like [`params`](Self::params).
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate_gradient(
        &self,
        store: &KnowledgeGraphStore,
        h: EntityId,
        r: RelationId,
        t: EntityId,
        fired: &[u32],
        experts: ExpertSet,
        coeff: f64,
        grad: &mut [f64],
    ) {
        if coeff == 0.0 {
            return;
        }
        let rs = self.relation_slot(r);
        if experts.contains(Expert::Latent) {
            let k = self.dim;
            let ho = self.layout.entities + self.entity_slot(h) * k;
            let to = self.layout.entities + self.entity_slot(t) * k;
            let ro = self.layout.relations + rs * k;
            for j in 0..k {
                let (eh, w, et) = (self.params[ho + j], self.params[ro + j], self.params[to + j]);
                grad[ho + j] += coeff * w * et;
                grad[to + j] += coeff * eh * w;
                grad[ro + j] += coeff * eh * et;
            }
        }
        if experts.contains(Expert::Relational) {
            grad[self.layout.relational_bias + rs] += coeff;
            if r.is_same_as() {
                for &k in fired {
                    grad[self.layout.rule_weights + k as usize] += coeff;
                }
            }
        }
        if experts.contains(Expert::Numerical) {
            let base = self.layout.numeric_weights[rs];
            for (j, v) in self.numeric_slots(store, h, r, t).into_iter().enumerate() {
                grad[base + j] += coeff * v;
            }
            grad[self.layout.numeric_bias + rs] += coeff;
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(MODEL_MAGIC, MODEL_VERSION);
        for v in [self.dim, self.entities_a, self.entities_b, self.relations_a, self.relations_b, self.image_dim] {
            enc.usize(v);
        }
        enc.u8(self.numeric_all_relations as u8);
        enc.usize(self.features.slots.len());
        for slots in &self.features.slots {
            enc.usize(slots.len());
            for s in slots {
                enc.u32(s.head_attr);
                enc.u32(s.tail_attr);
                enc.f64(s.sigma);
            }
        }
        encode_rules(&mut enc, &self.rules);
        enc.f64s(&self.params);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let (mut dec, version) = Decoder::new(data, MODEL_MAGIC, "model snapshot")?;
        if version != MODEL_VERSION {
            return Err(Error::Snapshot(format!("unsupported model snapshot version {version}")));
        }
        let mut dims = [0usize; 6];
        for d in &mut dims {
            *d = dec.usize()?;
        }
        let [dim, entities_a, entities_b, relations_a, relations_b, image_dim] = dims;
        let numeric_all_relations = dec.u8()? != 0;
        let n_rel = dec.usize()?;
        if n_rel != relations_a + relations_b + 1 {
            return Err(Error::Snapshot("feature map size does not match relation counts".into()));
        }
        let mut features = NumericFeatureMap { slots: Vec::with_capacity(n_rel) };
        for _ in 0..n_rel {
            let n = dec.usize()?;
            let mut slots = Vec::new();
            for _ in 0..n {
                slots.push(NumericSlot { head_attr: dec.u32()?, tail_attr: dec.u32()?, sigma: dec.f64()? });
            }
            features.slots.push(slots);
        }
        let rules = decode_rules(&mut dec)?;
        let params = dec.f64s()?;
        dec.finish()?;
        let layout = ParamLayout::new(dim, entities_a + entities_b, n_rel, rules.len(), &features);
        if params.len() != layout.total {
            return Err(Error::Snapshot(format!("expected {} parameters, found {}", layout.total, params.len())));
        }
        Ok(PoeModel {
            dim,
            entities_a,
            entities_b,
            relations_a,
            relations_b,
            image_dim,
            numeric_all_relations,
            features,
            rules,
            layout,
            params,
        })
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

/// Slot attributes are indexed in the KGs the relation connects; entities
/// from elsewhere (all-entity negatives) have no slot values.
fn attribute_sides_match(h: EntityId, r: RelationId, t: EntityId) -> bool {
    match r.scope {
        RelationScope::Cross => h.kg == KgTag::A && t.kg == KgTag::B,
        RelationScope::A => h.kg == KgTag::A && t.kg == KgTag::A,
        RelationScope::B => h.kg == KgTag::B && t.kg == KgTag::B,
    }
}

const MODEL_MAGIC: &[u8; 8] = b"MMKGPOE\0";
const MODEL_VERSION: u32 = 1;

/// `î_h · î_t` for `sameAs` when both images exist, else 0.
pub fn visual_score(store: &KnowledgeGraphStore, h: EntityId, r: RelationId, t: EntityId) -> f64 {
    if !r.is_same_as() {
        return 0.0;
    }
    match (store.side(h.kg).image(h.index), store.side(t.kg).image(t.index)) {
        (Some(ih), Some(it)) => ih.iter().zip(it).map(|(a, b)| a * b).sum(),
        _ => 0.0,
    }
}

/// A model bound to the data it scores against.
pub struct Scorer<'a> {
    pub model: &'a PoeModel,
    pub store: &'a KnowledgeGraphStore,
    pub context: &'a AlignmentIndex,
    pub experts: ExpertSet,
    rule_index: RuleIndex,
}

impl<'a> Scorer<'a> {
    pub fn new(
        model: &'a PoeModel,
        store: &'a KnowledgeGraphStore,
        context: &'a AlignmentIndex,
        experts: ExpertSet,
    ) -> Result<Self> {
        model.check_store(store)?;
        Ok(Scorer { model, store, context, experts, rule_index: RuleIndex::new(model.rules()) })
    }

    pub fn rule_index(&self) -> &RuleIndex {
        &self.rule_index
    }

    /// Log of the unnormalized product of the active experts.
    pub fn score_total(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let m = self.model;
        let mut total = 0.0;
        for e in self.experts.iter() {
            total += match e {
                Expert::Latent => m.score_latent(h, r, t),
                Expert::Relational => m.score_relational(self.store, self.context, h, r, t),
                Expert::Numerical => m.score_numerical(self.store, h, r, t),
                Expert::Visual => visual_score(self.store, h, r, t),
            };
        }
        total
    }

    /// Total `sameAs` score for every KG B entity as tail of `head`.
    pub fn tail_scores(&self, head: u32) -> Vec<f64> {
        let fired = if self.experts.contains(Expert::Relational) {
            self.rule_index.fired_from_head(self.store, self.context, head)
        } else {
            Default::default()
        };
        let h = EntityId::a(head);
        (0..self.store.side(KgTag::B).entity_count() as u32)
            .map(|t| {
                let f = fired.get(&t).map_or(&[][..], Vec::as_slice);
                self.model.score_parts(self.store, h, RelationId::SAME_AS, EntityId::b(t), f, self.experts).total(self.experts)
            })
            .collect()
    }

    /// Total `sameAs` score for every KG A entity as head of `tail`.
    pub fn head_scores(&self, tail: u32) -> Vec<f64> {
        let fired = if self.experts.contains(Expert::Relational) {
            self.rule_index.fired_from_tail(self.store, self.context, tail)
        } else {
            Default::default()
        };
        let t = EntityId::b(tail);
        (0..self.store.side(KgTag::A).entity_count() as u32)
            .map(|h| {
                let f = fired.get(&h).map_or(&[][..], Vec::as_slice);
                self.model.score_parts(self.store, EntityId::a(h), RelationId::SAME_AS, t, f, self.experts).total(self.experts)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntriples::{parse_str, ParseMode};
    use crate::rules::{mine_rules, MiningConfig};
    use crate::store::read_mmke;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_store() -> (KnowledgeGraphStore, Vec<Alignment>) {
        let mut s = KnowledgeGraphStore::new();
        let a = "<a1> <fatherOf> <a2> .\n<a3> <fatherOf> <a4> .\n";
        let b = "<b1> <childOf> <b2> .\n<b3> <childOf> <b4> .\n";
        s.ingest_relational(&parse_str(a, ParseMode::Strict).unwrap().statements, KgTag::A, ParseMode::Strict).unwrap();
        s.ingest_relational(&parse_str(b, ParseMode::Strict).unwrap().statements, KgTag::B, ParseMode::Strict).unwrap();
        let na = "<a1> <born> \"1900\" .\n<a2> <born> \"1930\" .\n<a3> <born> \"1950\" .\n";
        let nb = "<b1> <born> \"1901\" .\n<b2> <born> \"1929\" .\n<b3> <born> \"1950\" .\n<b4> <born> \"1980\" .\n";
        s.ingest_numeric(&parse_str(na, ParseMode::Strict).unwrap().statements, KgTag::A, ParseMode::Strict).unwrap();
        s.ingest_numeric(&parse_str(nb, ParseMode::Strict).unwrap().statements, KgTag::B, ParseMode::Strict).unwrap();
        let ia = read_mmke("MMKE 1 3\na1\t1 0 0\na2\t0 1 0\na3\t0 0 1\n".as_bytes(), "a").unwrap();
        let ib = read_mmke("MMKE 1 3\nb1\t2 0 0\nb2\t0 1 1\nb3\t0 0 5\nb4\t1 1 1\n".as_bytes(), "b").unwrap();
        s.ingest_embedding_rows(ia, KgTag::A).unwrap();
        s.ingest_embedding_rows(ib, KgTag::B).unwrap();
        let train = (0..4).map(|i| Alignment::new(i, i)).collect();
        (s, train)
    }

    fn toy_model(dim: usize) -> (KnowledgeGraphStore, Vec<Alignment>, PoeModel) {
        let (s, train) = toy_store();
        let rules = mine_rules(&s, &train, MiningConfig { min_support: 1, min_confidence: 0.0 });
        let features = NumericFeatureMap::for_same_as(&s, &train);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = PoeModel::new(&s, rules, features, ModelConfig { dim, numeric_all_relations: false }, &mut rng).unwrap();
        (s, train, m)
    }

    fn set(m: &mut PoeModel, at: usize, vals: &[f64]) {
        m.params_mut()[at..at + vals.len()].copy_from_slice(vals);
    }

    #[test]
    fn expert_set_parsing() {
        assert_eq!(ExpertSet::parse("lrni").unwrap(), ExpertSet::ALL);
        assert_eq!(ExpertSet::parse("inrl").unwrap().suffix(), "lrni");
        assert_eq!(ExpertSet::parse("rni").unwrap().to_string(), "PoE-rni");
        assert!(ExpertSet::parse("").is_err());
        assert!(ExpertSet::parse("lx").is_err());
        assert!(!ExpertSet::parse("i").unwrap().is_trainable());
    }

    #[test]
    fn latent_formula_and_symmetry() {
        let (_, _, mut m) = toy_model(2);
        let (h, t) = (EntityId::a(0), EntityId::b(1));
        let at_h = m.layout().entities + m.entity_slot(h) * 2;
        let at_t = m.layout().entities + m.entity_slot(t) * 2;
        let at_r = m.layout().relations + m.relation_slot(RelationId::SAME_AS) * 2;
        set(&mut m, at_h, &[1.0, 0.0]);
        set(&mut m, at_r, &[2.0, 3.0]);
        set(&mut m, at_t, &[1.0, 1.0]);
        assert_eq!(m.score_latent(h, RelationId::SAME_AS, t), 2.0);
        assert_eq!(m.score_latent(t, RelationId::SAME_AS, h), 2.0);
        set(&mut m, at_r, &[0.0, 0.0]);
        assert_eq!(m.score_latent(h, RelationId::SAME_AS, t), 0.0);
    }

    #[test]
    fn relational_linear_form() {
        let (s, train, mut m) = toy_model(2);
        let ctx = AlignmentIndex::new(&s, &train);
        let r = RelationId::SAME_AS;
        assert!(!m.rules().is_empty());
        assert_eq!(m.score_relational(&s, &ctx, EntityId::a(1), r, EntityId::b(3)), 0.0);
        assert_eq!(m.score_relational_fired(r, &[]), 0.0);
        let w0 = m.layout().rule_weights;
        m.params_mut()[w0] = 1.5;
        assert_eq!(m.score_relational_fired(r, &[0]), 1.5);
        if m.rules().len() >= 2 {
            set(&mut m, w0, &[0.5, 0.25]);
            let bias_at = m.layout().relational_bias + m.relation_slot(r);
            m.params_mut()[bias_at] = 0.1;
            assert!((m.score_relational_fired(r, &[0, 1]) - 0.85).abs() < 1e-12);
        }
        // slow path agrees with fired lists
        let idx = RuleIndex::new(m.rules());
        for h in 0..4 {
            let fired = idx.fired_from_head(&s, &ctx, h);
            for t in 0..4 {
                let f = fired.get(&t).cloned().unwrap_or_default();
                let slow = m.score_relational(&s, &ctx, EntityId::a(h), r, EntityId::b(t));
                assert!((slow - m.score_relational_fired(r, &f)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn numeric_rbf_slots() {
        let slot = NumericSlot { head_attr: 0, tail_attr: 0, sigma: 1.0 };
        assert_eq!(slot.value(Some(3.0), Some(3.0)), 1.0);
        assert_eq!(slot.value(Some(0.0), Some(1e6)), 0.0);
        assert_eq!(slot.value(None, Some(1.0)), 0.0);
        assert_eq!(slot.value(Some(1.0), None), 0.0);

        let (s, _, mut m) = toy_model(2);
        let r = RelationId::SAME_AS;
        assert_eq!(m.features().slots(m.relation_slot(r)).len(), 1);
        let at = m.layout().numeric_weights[m.relation_slot(r)];
        m.params_mut()[at] = 1.0;
        // a3 and b3 both born 1950
        assert_eq!(m.score_numerical(&s, EntityId::a(2), r, EntityId::b(2)), 1.0);
        // a4 has no value
        assert_eq!(m.score_numerical(&s, EntityId::a(3), r, EntityId::b(3)), 0.0);
    }

    #[test]
    fn bandwidth_is_std_of_differences() {
        let (s, train) = toy_store();
        let f = NumericFeatureMap::for_same_as(&s, &train);
        let slot = f.slots(s.relation_slot(RelationId::SAME_AS))[0];
        // differences over aligned pairs with both values: -1, 1, 0
        let want = (2.0f64 / 3.0).sqrt();
        assert!((slot.sigma - want).abs() < 1e-12);
        assert_eq!(bandwidth([5.0, 5.0].into_iter()), Some(SIGMA_FLOOR));
        assert_eq!(bandwidth([5.0].into_iter()), None);
    }

    #[test]
    fn visual_expert() {
        let (s, _, m) = toy_model(2);
        let r = RelationId::SAME_AS;
        // a1 = (1,0,0), b1 = (2,0,0) normalized: identical
        assert!((m.score_visual(&s, EntityId::a(0), r, EntityId::b(0)) - 1.0).abs() < 1e-12);
        assert_eq!(m.score_visual(&s, EntityId::a(0), r, EntityId::b(1)), 0.0);
        let other = RelationId::within(KgTag::A, 0);
        assert_eq!(m.score_visual(&s, EntityId::a(0), other, EntityId::a(0)), 0.0);
        // a4 has no image
        assert_eq!(m.score_visual(&s, EntityId::a(3), r, EntityId::b(3)), 0.0);
    }

    #[test]
    fn total_is_sum_of_selected_experts() {
        let (s, train, m) = toy_model(4);
        let ctx = AlignmentIndex::new(&s, &train);
        let (h, r, t) = (EntityId::a(0), RelationId::SAME_AS, EntityId::b(0));
        let sc = |e: &str| Scorer::new(&m, &s, &ctx, ExpertSet::parse(e).unwrap()).unwrap().score_total(h, r, t);
        assert!((sc("i") - 1.0).abs() < 1e-12);
        assert!((sc("li") - (m.score_latent(h, r, t) + m.score_visual(&s, h, r, t))).abs() < 1e-12);
        // N weights are zero at init, so dropping N changes nothing
        assert_eq!(sc("lrni"), sc("lri"));
    }

    #[test]
    fn same_as_symmetry_under_all_subsets() {
        let (s, train, mut m) = toy_model(3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in m.params_mut() {
            *p = rng.random_range(-1.0..1.0);
        }
        let ctx = AlignmentIndex::new(&s, &train);
        for bits in 1u8..16 {
            let experts = ExpertSet(bits);
            let scorer = Scorer::new(&m, &s, &ctx, experts).unwrap();
            for h in 0..4 {
                let tails = scorer.tail_scores(h);
                for t in 0..4u32 {
                    let heads = scorer.head_scores(t);
                    assert!((tails[t as usize] - heads[h as usize]).abs() < 1e-12);
                    let direct = scorer.score_total(EntityId::a(h), RelationId::SAME_AS, EntityId::b(t));
                    assert!((direct - tails[t as usize]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn linear_experts_scale_with_weights() {
        let (s, _, mut m) = toy_model(2);
        let r = RelationId::SAME_AS;
        let rs = m.relation_slot(r);
        let (w0, n0) = (m.layout().rule_weights, m.layout().numeric_weights[rs]);
        m.params_mut()[w0] = 0.7;
        m.params_mut()[n0] = 1.3;
        let (h, t) = (EntityId::a(0), EntityId::b(0));
        let base_r = m.score_relational_fired(r, &[0]);
        let base_n = m.score_numerical(&s, h, r, t);
        m.params_mut()[w0] *= 3.0;
        m.params_mut()[n0] *= 3.0;
        assert!((m.score_relational_fired(r, &[0]) - 3.0 * base_r).abs() < 1e-12);
        assert!((m.score_numerical(&s, h, r, t) - 3.0 * base_n).abs() < 1e-12);
    }

    #[test]
    fn init_ranges() {
        let (_, _, m) = toy_model(16);
        let bound = 6.0 / 4.0;
        let l = m.layout();
        assert!(m.params()[..l.rule_weights].iter().all(|p| p.abs() <= bound));
        assert!(m.params()[l.rule_weights..].iter().all(|&p| p == 0.0));
        assert!(m.all_finite());
    }

    #[test]
    fn snapshot_round_trip() {
        let (s, _, m) = toy_model(3);
        let bytes = m.to_bytes();
        let back = PoeModel::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);
        back.check_store(&s).unwrap();
        assert!(PoeModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(PoeModel::from_bytes(&bad).is_err());
    }
}
