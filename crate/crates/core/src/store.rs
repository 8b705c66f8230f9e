//! Interned storage for a pair of knowledge graphs and their modalities.
//!
//! Entities, relations and numeric attributes are interned per KG with dense
//! indexes starting at 0. Relational triples are deduplicated and indexed by
//! head and by tail. `sameAs` alignments are kept canonically oriented from
//! KG A to KG B. Once ingestion is done the store is only read.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexSet;

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::literal::parse_numeric;
use crate::ntriples::{ParseMode, RdfStatement, RdfTerm};

pub const OWL_SAME_AS: &str = "http://www.w3.org/2002/07/owl#sameAs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KgTag {
    A,
    B,
}

impl KgTag {
    pub fn other(self) -> KgTag {
        match self {
            KgTag::A => KgTag::B,
            KgTag::B => KgTag::A,
        }
    }
}

impl fmt::Display for KgTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KgTag::A => "A",
            KgTag::B => "B",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId {
    pub kg: KgTag,
    pub index: u32,
}

impl EntityId {
    pub fn a(index: u32) -> Self {
        EntityId { kg: KgTag::A, index }
    }

    pub fn b(index: u32) -> Self {
        EntityId { kg: KgTag::B, index }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RelationScope {
    A,
    B,
    Cross,
}

impl From<KgTag> for RelationScope {
    fn from(kg: KgTag) -> Self {
        match kg {
            KgTag::A => RelationScope::A,
            KgTag::B => RelationScope::B,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId {
    pub scope: RelationScope,
    pub index: u32,
}

impl RelationId {
    /// The single cross-KG relation.
    pub const SAME_AS: RelationId = RelationId { scope: RelationScope::Cross, index: 0 };

    pub fn within(kg: KgTag, index: u32) -> Self {
        RelationId { scope: kg.into(), index }
    }

    pub fn is_same_as(self) -> bool {
        self.scope == RelationScope::Cross
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

/// A `sameAs` pair, always oriented from KG A to KG B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Alignment {
    pub a: u32,
    pub b: u32,
}

impl Alignment {
    pub fn new(a: u32, b: u32) -> Self {
        Alignment { a, b }
    }

    pub fn entities(self) -> (EntityId, EntityId) {
        (EntityId::a(self.a), EntityId::b(self.b))
    }
}

/// Skips and duplicates seen while ingesting; all lenient-mode decisions are
/// counted here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestCounters {
    pub duplicate_triples: usize,
    pub literal_in_relational: usize,
    pub unparseable_literals: usize,
    pub non_literal_numeric: usize,
    pub duplicate_numeric: usize,
    pub unknown_numeric_entities: usize,
    pub unknown_embedding_entities: usize,
    pub duplicate_embeddings: usize,
    pub zero_embeddings: usize,
    pub unknown_alignment_entities: usize,
    pub duplicate_alignments: usize,
}

/// One knowledge graph: interners, triples, adjacency and modalities.
#[derive(Debug, Clone, Default)]
pub struct KgSide {
    entities: IndexSet<String>,
    relations: IndexSet<String>,
    attributes: IndexSet<String>,
    triples: IndexSet<(u32, u32, u32)>,
    out_edges: Vec<Vec<(u32, u32)>>,
    in_edges: Vec<Vec<(u32, u32)>>,
    numeric: Vec<Vec<(u32, f64)>>,
    numeric_count: usize,
    images: Vec<Option<Box<[f64]>>>,
    image_count: usize,
}

impl KgSide {
    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relations.len()
    }

    pub fn attribute_count(&self) -> usize {
        self.attributes.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn numeric_count(&self) -> usize {
        self.numeric_count
    }

    pub fn image_count(&self) -> usize {
        self.image_count
    }

    pub fn entity_iri(&self, index: u32) -> &str {
        &self.entities[index as usize]
    }

    pub fn entity_index(&self, iri: &str) -> Option<u32> {
        self.entities.get_index_of(iri).map(|i| i as u32)
    }

    pub fn relation_iri(&self, index: u32) -> &str {
        &self.relations[index as usize]
    }

    pub fn relation_index(&self, iri: &str) -> Option<u32> {
        self.relations.get_index_of(iri).map(|i| i as u32)
    }

    pub fn attribute_iri(&self, index: u32) -> &str {
        &self.attributes[index as usize]
    }

    pub fn attribute_index(&self, iri: &str) -> Option<u32> {
        self.attributes.get_index_of(iri).map(|i| i as u32)
    }

    /// `(head, relation, tail)` index triples in insertion order.
    pub fn triples(&self) -> impl ExactSizeIterator<Item = (u32, u32, u32)> + '_ {
        self.triples.iter().copied()
    }

    /// `(relation, tail)` pairs for triples with this head.
    pub fn out_edges(&self, entity: u32) -> &[(u32, u32)] {
        self.out_edges.get(entity as usize).map_or(&[], Vec::as_slice)
    }

    /// `(relation, head)` pairs for triples with this tail.
    pub fn in_edges(&self, entity: u32) -> &[(u32, u32)] {
        self.in_edges.get(entity as usize).map_or(&[], Vec::as_slice)
    }

    pub fn contains_triple(&self, head: u32, relation: u32, tail: u32) -> bool {
        self.triples.contains(&(head, relation, tail))
    }

    /// Numeric attribute value, if the entity has one.
    pub fn numeric_value(&self, entity: u32, attribute: u32) -> Option<f64> {
        let attrs = self.numeric.get(entity as usize)?;
        attrs.binary_search_by_key(&attribute, |&(a, _)| a).ok().map(|i| attrs[i].1)
    }

    /// `(attribute, value)` pairs of an entity, sorted by attribute.
    pub fn numeric_values(&self, entity: u32) -> &[(u32, f64)] {
        self.numeric.get(entity as usize).map_or(&[], Vec::as_slice)
    }

    /// Unit-normalized image embedding, if present.
    pub fn image(&self, entity: u32) -> Option<&[f64]> {
        self.images.get(entity as usize).and_then(|v| v.as_deref())
    }

    fn intern_entity(&mut self, iri: &str) -> u32 {
        if let Some(i) = self.entities.get_index_of(iri) {
            return i as u32;
        }
        let (i, _) = self.entities.insert_full(iri.to_string());
        self.out_edges.push(Vec::new());
        self.in_edges.push(Vec::new());
        self.numeric.push(Vec::new());
        self.images.push(None);
        i as u32
    }

    fn intern_relation(&mut self, iri: &str) -> u32 {
        self.relations.insert_full(iri.to_string()).0 as u32
    }

    fn intern_attribute(&mut self, iri: &str) -> u32 {
        self.attributes.insert_full(iri.to_string()).0 as u32
    }

    /// Returns false when the triple was already present.
    fn insert_triple(&mut self, h: u32, r: u32, t: u32) -> bool {
        if !self.triples.insert((h, r, t)) {
            return false;
        }
        self.out_edges[h as usize].push((r, t));
        self.in_edges[t as usize].push((r, h));
        true
    }

    /// Returns false when a value for the pair already exists.
    fn insert_numeric(&mut self, entity: u32, attribute: u32, value: f64) -> bool {
        let attrs = &mut self.numeric[entity as usize];
        match attrs.binary_search_by_key(&attribute, |&(a, _)| a) {
            Ok(_) => false,
            Err(pos) => {
                attrs.insert(pos, (attribute, value));
                self.numeric_count += 1;
                true
            }
        }
    }

    fn set_image(&mut self, entity: u32, vector: Box<[f64]>) -> bool {
        let slot = &mut self.images[entity as usize];
        if slot.is_some() {
            return false;
        }
        *slot = Some(vector);
        self.image_count += 1;
        true
    }
}

/// Two knowledge graphs, their modalities and the alignments between them.
#[derive(Debug, Clone)]
pub struct KnowledgeGraphStore {
    a: KgSide,
    b: KgSide,
    same_as_iri: String,
    alignments: IndexSet<Alignment>,
    attribute_pairs: Vec<(u32, u32)>,
    image_dim: Option<usize>,
    counters: IngestCounters,
}

impl Default for KnowledgeGraphStore {
    fn default() -> Self {
        KnowledgeGraphStore {
            a: KgSide::default(),
            b: KgSide::default(),
            same_as_iri: OWL_SAME_AS.to_string(),
            alignments: IndexSet::new(),
            attribute_pairs: Vec::new(),
            image_dim: None,
            counters: IngestCounters::default(),
        }
    }
}

impl KnowledgeGraphStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn side(&self, kg: KgTag) -> &KgSide {
        match kg {
            KgTag::A => &self.a,
            KgTag::B => &self.b,
        }
    }

    fn side_mut(&mut self, kg: KgTag) -> &mut KgSide {
        match kg {
            KgTag::A => &mut self.a,
            KgTag::B => &mut self.b,
        }
    }

    pub fn counters(&self) -> &IngestCounters {
        &self.counters
    }

    pub fn same_as_iri(&self) -> &str {
        &self.same_as_iri
    }

    pub fn image_dim(&self) -> Option<usize> {
        self.image_dim
    }

    pub fn alignments(&self) -> impl ExactSizeIterator<Item = Alignment> + '_ {
        self.alignments.iter().copied()
    }

    pub fn alignment_count(&self) -> usize {
        self.alignments.len()
    }

    pub fn contains_alignment(&self, al: Alignment) -> bool {
        self.alignments.contains(&al)
    }

    pub fn entity_iri(&self, e: EntityId) -> &str {
        self.side(e.kg).entity_iri(e.index)
    }

    pub fn entity_id(&self, kg: KgTag, iri: &str) -> Option<EntityId> {
        self.side(kg).entity_index(iri).map(|index| EntityId { kg, index })
    }

    pub fn relation_iri(&self, r: RelationId) -> &str {
        match r.scope {
            RelationScope::A => self.a.relation_iri(r.index),
            RelationScope::B => self.b.relation_iri(r.index),
            RelationScope::Cross => &self.same_as_iri,
        }
    }

    /// Entities of both KGs in one dense range: KG A first, then KG B.
    pub fn total_entities(&self) -> usize {
        self.a.entity_count() + self.b.entity_count()
    }

    pub fn entity_slot(&self, e: EntityId) -> usize {
        match e.kg {
            KgTag::A => e.index as usize,
            KgTag::B => self.a.entity_count() + e.index as usize,
        }
    }

    /// Relations in one dense range: KG A, then KG B, then `sameAs` last.
    pub fn total_relations(&self) -> usize {
        self.a.relation_count() + self.b.relation_count() + 1
    }

    pub fn relation_slot(&self, r: RelationId) -> usize {
        match r.scope {
            RelationScope::A => r.index as usize,
            RelationScope::B => self.a.relation_count() + r.index as usize,
            RelationScope::Cross => self.a.relation_count() + self.b.relation_count(),
        }
    }

    /// Cross-KG numeric attribute pairs: the ingested mapping if one was
    /// given, otherwise attributes whose IRIs are identical in both KGs.
    pub fn attribute_pairs(&self) -> Vec<(u32, u32)> {
        if !self.attribute_pairs.is_empty() {
            return self.attribute_pairs.clone();
        }
        (0..self.a.attribute_count() as u32)
            .filter_map(|ia| self.b.attribute_index(self.a.attribute_iri(ia)).map(|ib| (ia, ib)))
            .collect()
    }

    /// Adds relational triples to one KG. Statements with a literal object
    /// are an error in strict mode and a counted skip in lenient mode.
    pub fn ingest_relational(&mut self, statements: &[RdfStatement], kg: KgTag, mode: ParseMode) -> Result<()> {
        for (i, st) in statements.iter().enumerate() {
            let (Some(s), Some(p), Some(o)) = (term_key(&st.subject), st.predicate.as_iri(), term_key(&st.object))
            else {
                if mode == ParseMode::Strict {
                    return Err(Error::invalid(format!("statement {}: literal object in relational data: {st}", i + 1)));
                }
                self.counters.literal_in_relational += 1;
                continue;
            };
            let side = self.side_mut(kg);
            let h = side.intern_entity(s);
            let r = side.intern_relation(p);
            let t = side.intern_entity(o);
            if !side.insert_triple(h, r, t) {
                self.counters.duplicate_triples += 1;
            }
        }
        Ok(())
    }

    /// Adds numeric-literal triples to one KG. Only entities already present
    /// in the relational graph receive values.
    pub fn ingest_numeric(&mut self, statements: &[RdfStatement], kg: KgTag, mode: ParseMode) -> Result<()> {
        for (i, st) in statements.iter().enumerate() {
            let RdfTerm::Literal { value, .. } = &st.object else {
                if mode == ParseMode::Strict {
                    return Err(Error::invalid(format!("statement {}: numeric data needs a literal object: {st}", i + 1)));
                }
                self.counters.non_literal_numeric += 1;
                continue;
            };
            let Some(v) = parse_numeric(value) else {
                if mode == ParseMode::Strict {
                    return Err(Error::invalid(format!("statement {}: unparseable numeric literal {value:?}", i + 1)));
                }
                self.counters.unparseable_literals += 1;
                continue;
            };
            let side = self.side_mut(kg);
            let (Some(s), Some(p)) = (term_key(&st.subject), st.predicate.as_iri()) else {
                self.counters.unknown_numeric_entities += 1;
                continue;
            };
            let Some(entity) = side.entity_index(s) else {
                self.counters.unknown_numeric_entities += 1;
                continue;
            };
            let attr = side.intern_attribute(p);
            if !side.insert_numeric(entity, attr, v) {
                self.counters.duplicate_numeric += 1;
            }
        }
        Ok(())
    }

    /// Loads an MMKE/1 embedding file for one KG, normalizing each vector.
    pub fn ingest_embeddings(&mut self, path: impl AsRef<Path>, kg: KgTag) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let rows = read_mmke(BufReader::new(file), &path.display().to_string())?;
        self.ingest_embedding_rows(rows, kg)
    }

    pub fn ingest_embedding_rows(&mut self, file: MmkeFile, kg: KgTag) -> Result<()> {
        match self.image_dim {
            Some(d) if d != file.dim => {
                return Err(Error::DimensionMismatch { expected: d, found: file.dim, line: 1 });
            }
            _ => self.image_dim = Some(file.dim),
        }
        for (iri, mut vector) in file.rows {
            let side = self.side_mut(kg);
            let Some(entity) = side.entity_index(&iri) else {
                self.counters.unknown_embedding_entities += 1;
                continue;
            };
            let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 || !norm.is_finite() {
                self.counters.zero_embeddings += 1;
                continue;
            }
            vector.iter_mut().for_each(|x| *x /= norm);
            if !self.side_mut(kg).set_image(entity, vector.into_boxed_slice()) {
                self.counters.duplicate_embeddings += 1;
            }
        }
        Ok(())
    }

    /// Adds `sameAs` statements. Either orientation is accepted; pairs are
    /// stored as A→B. Statements naming an entity missing from the
    /// relational graphs are skipped and counted.
    pub fn ingest_alignments(&mut self, statements: &[RdfStatement]) -> Result<()> {
        for st in statements {
            let (Some(s), Some(o)) = (term_key(&st.subject), term_key(&st.object)) else {
                self.counters.unknown_alignment_entities += 1;
                continue;
            };
            if self.alignments.is_empty() {
                if let Some(p) = st.predicate.as_iri() {
                    self.same_as_iri = p.to_string();
                }
            }
            let pair = match (self.a.entity_index(s), self.b.entity_index(o)) {
                (Some(a), Some(b)) => Some(Alignment::new(a, b)),
                _ => match (self.b.entity_index(s), self.a.entity_index(o)) {
                    (Some(b), Some(a)) => Some(Alignment::new(a, b)),
                    _ => None,
                },
            };
            match pair {
                Some(al) => {
                    if !self.alignments.insert(al) {
                        self.counters.duplicate_alignments += 1;
                    }
                }
                None => self.counters.unknown_alignment_entities += 1,
            }
        }
        Ok(())
    }

    /// Registers cross-KG attribute pairs by IRI. Pairs naming unknown
    /// attributes are dropped; the number kept is returned.
    pub fn set_attribute_map(&mut self, pairs: &[(String, String)]) -> usize {
        self.attribute_pairs = pairs
            .iter()
            .filter_map(|(ia, ib)| Some((self.a.attribute_index(ia)?, self.b.attribute_index(ib)?)))
            .collect::<IndexSet<_>>()
            .into_iter()
            .collect();
        self.attribute_pairs.len()
    }

    /// Adds an alignment directly by index; used by generators and tests.
    pub fn insert_alignment(&mut self, al: Alignment) -> bool {
        self.alignments.insert(al)
    }

    /// Interns an entity without any triple.
    pub fn intern_entity(&mut self, kg: KgTag, iri: &str) -> EntityId {
        EntityId { kg, index: self.side_mut(kg).intern_entity(iri) }
    }

    pub fn stats(&self) -> StoreStats {
        let side_stats = |side: &KgSide| {
            let mut entity_freq = vec![0usize; side.entity_count()];
            let mut relation_freq = vec![0usize; side.relation_count()];
            for (h, r, t) in side.triples() {
                entity_freq[h as usize] += 1;
                entity_freq[t as usize] += 1;
                relation_freq[r as usize] += 1;
            }
            let sorted = |freq: Vec<usize>, name: &dyn Fn(u32) -> String| {
                let mut v: Vec<(String, usize)> =
                    freq.into_iter().enumerate().map(|(i, c)| (name(i as u32), c)).collect();
                v.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
                v
            };
            KgStats {
                entities: side.entity_count(),
                relations: side.relation_count(),
                triples: side.triple_count(),
                numeric_literals: side.numeric_count(),
                attributes: side.attribute_count(),
                images: side.image_count(),
                entity_histogram: sorted(entity_freq, &|i| side.entity_iri(i).to_string()),
                relation_histogram: sorted(relation_freq, &|i| side.relation_iri(i).to_string()),
            }
        };
        StoreStats {
            a: side_stats(&self.a),
            b: side_stats(&self.b),
            alignments: self.alignments.len(),
            image_dim: self.image_dim,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new(STORE_MAGIC, STORE_VERSION);
        enc.str(&self.same_as_iri);
        enc.u64(self.image_dim.map_or(0, |d| d as u64));
        for side in [&self.a, &self.b] {
            enc.usize(side.entities.len());
            side.entities.iter().for_each(|s| enc.str(s));
            enc.usize(side.relations.len());
            side.relations.iter().for_each(|s| enc.str(s));
            enc.usize(side.attributes.len());
            side.attributes.iter().for_each(|s| enc.str(s));
            enc.usize(side.triples.len());
            for &(h, r, t) in &side.triples {
                enc.u32(h);
                enc.u32(r);
                enc.u32(t);
            }
            for attrs in &side.numeric {
                enc.usize(attrs.len());
                for &(a, v) in attrs {
                    enc.u32(a);
                    enc.f64(v);
                }
            }
            for img in &side.images {
                match img {
                    Some(v) => {
                        enc.u8(1);
                        enc.f64s(v);
                    }
                    None => enc.u8(0),
                }
            }
        }
        enc.usize(self.alignments.len());
        for al in &self.alignments {
            enc.u32(al.a);
            enc.u32(al.b);
        }
        enc.usize(self.attribute_pairs.len());
        for &(a, b) in &self.attribute_pairs {
            enc.u32(a);
            enc.u32(b);
        }
        let c = &self.counters;
        for v in [
            c.duplicate_triples,
            c.literal_in_relational,
            c.unparseable_literals,
            c.non_literal_numeric,
            c.duplicate_numeric,
            c.unknown_numeric_entities,
            c.unknown_embedding_entities,
            c.duplicate_embeddings,
            c.zero_embeddings,
            c.unknown_alignment_entities,
            c.duplicate_alignments,
        ] {
            enc.usize(v);
        }
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let (mut dec, version) = Decoder::new(data, STORE_MAGIC, "store snapshot")?;
        if version != STORE_VERSION {
            return Err(Error::Snapshot(format!("unsupported store snapshot version {version}")));
        }
        let mut store = KnowledgeGraphStore { same_as_iri: dec.string()?, ..Default::default() };
        let dim = dec.u64()? as usize;
        store.image_dim = (dim > 0).then_some(dim);
        for kg in [KgTag::A, KgTag::B] {
            let mut side = KgSide::default();
            for _ in 0..dec.usize()? {
                side.intern_entity(&dec.string()?);
            }
            for _ in 0..dec.usize()? {
                side.intern_relation(&dec.string()?);
            }
            for _ in 0..dec.usize()? {
                side.intern_attribute(&dec.string()?);
            }
            let n_ent = side.entity_count() as u32;
            let n_rel = side.relation_count() as u32;
            for _ in 0..dec.usize()? {
                let (h, r, t) = (dec.u32()?, dec.u32()?, dec.u32()?);
                if h >= n_ent || t >= n_ent || r >= n_rel {
                    return Err(Error::Snapshot("triple index out of range".into()));
                }
                side.insert_triple(h, r, t);
            }
            for e in 0..n_ent {
                for _ in 0..dec.usize()? {
                    let (a, v) = (dec.u32()?, dec.f64()?);
                    if a as usize >= side.attribute_count() {
                        return Err(Error::Snapshot("attribute index out of range".into()));
                    }
                    side.insert_numeric(e, a, v);
                }
            }
            for e in 0..n_ent {
                if dec.u8()? == 1 {
                    side.set_image(e, dec.f64s()?.into_boxed_slice());
                }
            }
            *store.side_mut(kg) = side;
        }
        for _ in 0..dec.usize()? {
            let al = Alignment::new(dec.u32()?, dec.u32()?);
            if al.a as usize >= store.a.entity_count() || al.b as usize >= store.b.entity_count() {
                return Err(Error::Snapshot("alignment index out of range".into()));
            }
            store.alignments.insert(al);
        }
        for _ in 0..dec.usize()? {
            store.attribute_pairs.push((dec.u32()?, dec.u32()?));
        }
        let c = &mut store.counters;
        for slot in [
            &mut c.duplicate_triples,
            &mut c.literal_in_relational,
            &mut c.unparseable_literals,
            &mut c.non_literal_numeric,
            &mut c.duplicate_numeric,
            &mut c.unknown_numeric_entities,
            &mut c.unknown_embedding_entities,
            &mut c.duplicate_embeddings,
            &mut c.zero_embeddings,
            &mut c.unknown_alignment_entities,
            &mut c.duplicate_alignments,
        ] {
            *slot = dec.usize()?;
        }
        dec.finish()?;
        Ok(store)
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

const STORE_MAGIC: &[u8; 8] = b"MMKGSTOR";
const STORE_VERSION: u32 = 1;

/// IRI or blank-node label; `None` for literals.
fn term_key(term: &RdfTerm) -> Option<&str> {
    match term {
        RdfTerm::Iri(v) | RdfTerm::BlankNode(v) => Some(v),
        RdfTerm::Literal { .. } => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KgStats {
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub numeric_literals: usize,
    pub attributes: usize,
    pub images: usize,
    /// Mentions per entity (head and tail positions), most frequent first.
    pub entity_histogram: Vec<(String, usize)>,
    /// Triples per relation, most frequent first.
    pub relation_histogram: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreStats {
    pub a: KgStats,
    pub b: KgStats,
    pub alignments: usize,
    pub image_dim: Option<usize>,
}

impl fmt::Display for StoreStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<4} {:>10} {:>10} {:>12} {:>10} {:>10}", "kg", "entities", "relations", "triples", "literals", "images")?;
        for (name, s) in [("A", &self.a), ("B", &self.b)] {
            writeln!(
                f,
                "{:<4} {:>10} {:>10} {:>12} {:>10} {:>10}",
                name, s.entities, s.relations, s.triples, s.numeric_literals, s.images
            )?;
        }
        writeln!(f, "sameAs alignments: {}", self.alignments)?;
        if let Some(d) = self.image_dim {
            writeln!(f, "image embedding dimension: {d}")?;
        }
        Ok(())
    }
}

/// A parsed MMKE/1 embedding file: header `MMKE 1 <D>` followed by
/// `<entity-IRI>\t<D decimals>` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MmkeFile {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

pub fn read_mmke<R: BufRead>(reader: R, name: &str) -> Result<MmkeFile> {
    let mut lines = reader.lines().enumerate();
    let fmt_err = |line: usize, message: String| Error::Format { file: name.to_string(), line, message };
    let header = match lines.next() {
        Some((_, l)) => l.map_err(|e| Error::io(name, e))?,
        None => return Err(fmt_err(1, "missing MMKE header".into())),
    };
    let parts: Vec<&str> = header.split_whitespace().collect();
    let dim = match parts.as_slice() {
        ["MMKE", "1", d] => d.parse::<usize>().ok().filter(|&d| d > 0),
        _ => None,
    }
    .ok_or_else(|| fmt_err(1, format!("expected `MMKE 1 <D>` header, found {header:?}")))?;
    let mut rows = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(name, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (iri, values) = line
            .split_once('\t')
            .ok_or_else(|| fmt_err(lineno, "expected a TAB after the entity IRI".into()))?;
        let iri = strip_angle(iri.trim());
        let vector = values
            .split_whitespace()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| fmt_err(lineno, "non-numeric embedding component".into()))?;
        if vector.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: vector.len(), line: lineno });
        }
        rows.push((iri.to_string(), vector));
    }
    Ok(MmkeFile { dim, rows })
}

pub fn write_mmke<W: Write>(mut out: W, dim: usize, rows: &[(String, Vec<f64>)]) -> std::io::Result<()> {
    writeln!(out, "MMKE 1 {dim}")?;
    for (iri, v) in rows {
        write!(out, "{iri}\t")?;
        for (j, x) in v.iter().enumerate() {
            if j > 0 {
                out.write_all(b" ")?;
            }
            write!(out, "{x}")?;
        }
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads `attrA<TAB>attrB` lines. Angle brackets around IRIs are optional;
/// blank lines and `#` comments are ignored.
pub fn read_attribute_map<R: BufRead>(reader: R, name: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(name, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (a, b) = trimmed.split_once('\t').ok_or_else(|| Error::Format {
            file: name.to_string(),
            line: i + 1,
            message: "expected `attrA<TAB>attrB`".into(),
        })?;
        pairs.push((strip_angle(a.trim()).to_string(), strip_angle(b.trim()).to_string()));
    }
    Ok(pairs)
}

fn strip_angle(s: &str) -> &str {
    s.strip_prefix('<').and_then(|x| x.strip_suffix('>')).unwrap_or(s)
}
