//! Cross-KG horn rules with a `sameAs` head.
//!
//! Only the two-hop shape is mined:
//!
//! ```text
//! (x, r1, w) ∧ (w, sameAs, z) ∧ (z, r2, y)  ⇒  (x, sameAs, y)
//! ```
//!
//! where `r1` belongs to KG A, `r2` to KG B, and either atom may be read in
//! inverse direction. That gives at most four variables per rule. Support
//! counts distinct training pairs `(x, y)` for which the body holds;
//! confidence divides it by the number of distinct body instantiations.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::store::{Alignment, KgSide, KgTag, KnowledgeGraphStore, RelationId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Direction {
    pub fn flip(self) -> Direction {
        match self {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Inverse => "inverse",
        }
    }

    fn parse(s: &str) -> Option<Direction> {
        match s {
            "forward" => Some(Direction::Forward),
            "inverse" => Some(Direction::Inverse),
            _ => None,
        }
    }
}

/// A within-KG relation read forward `(u, r, v)` or inverse `(v, r, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BodyAtom {
    pub relation: u32,
    pub direction: Direction,
}

impl BodyAtom {
    pub fn new(relation: u32, direction: Direction) -> Self {
        BodyAtom { relation, direction }
    }

    /// Entities `v` with `(u, atom, v)`.
    pub fn step<'a>(self, side: &'a KgSide, u: u32) -> impl Iterator<Item = u32> + 'a {
        let edges = match self.direction {
            Direction::Forward => side.out_edges(u),
            Direction::Inverse => side.in_edges(u),
        };
        edges.iter().filter(move |&&(r, _)| r == self.relation).map(|&(_, v)| v)
    }

    fn flipped(self) -> BodyAtom {
        BodyAtom { relation: self.relation, direction: self.direction.flip() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HornRule {
    /// `(x, first, w)` in KG A.
    pub first: BodyAtom,
    /// `(z, last, y)` in KG B.
    pub last: BodyAtom,
    pub support: usize,
    pub confidence: f64,
}

impl HornRule {
    /// The body as three atoms, with `sameAs` in the middle.
    pub fn atoms(&self) -> [(RelationId, Direction); 3] {
        [
            (RelationId::within(KgTag::A, self.first.relation), self.first.direction),
            (RelationId::SAME_AS, Direction::Forward),
            (RelationId::within(KgTag::B, self.last.relation), self.last.direction),
        ]
    }

    fn shape_key(&self) -> (BodyAtom, BodyAtom) {
        (self.first, self.last)
    }
}

/// Alignments usable as the middle atom, indexed in both directions.
#[derive(Debug, Clone, Default)]
pub struct AlignmentIndex {
    a_to_b: Vec<Vec<u32>>,
    b_to_a: Vec<Vec<u32>>,
    pairs: HashSet<Alignment>,
}

impl AlignmentIndex {
    pub fn new(store: &KnowledgeGraphStore, alignments: &[Alignment]) -> Self {
        let mut idx = AlignmentIndex {
            a_to_b: vec![Vec::new(); store.side(KgTag::A).entity_count()],
            b_to_a: vec![Vec::new(); store.side(KgTag::B).entity_count()],
            pairs: HashSet::with_capacity(alignments.len()),
        };
        for &al in alignments {
            if idx.pairs.insert(al) {
                idx.a_to_b[al.a as usize].push(al.b);
                idx.b_to_a[al.b as usize].push(al.a);
            }
        }
        idx
    }

    pub fn partners_of_a(&self, a: u32) -> &[u32] {
        self.a_to_b.get(a as usize).map_or(&[], Vec::as_slice)
    }

    pub fn partners_of_b(&self, b: u32) -> &[u32] {
        self.b_to_a.get(b as usize).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, al: Alignment) -> bool {
        self.pairs.contains(&al)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Returns whether the body of `rule` connects `head ∈ A` to `tail ∈ B`
/// through some alignment in `context`.
pub fn evaluate_rule_body(
    store: &KnowledgeGraphStore,
    rule: &HornRule,
    head: u32,
    tail: u32,
    context: &AlignmentIndex,
) -> bool {
    let a = store.side(KgTag::A);
    let b = store.side(KgTag::B);
    rule.first
        .step(a, head)
        .any(|w| context.partners_of_a(w).iter().any(|&z| rule.last.step(b, z).any(|y| y == tail)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    pub min_support: usize,
    pub min_confidence: f64,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { min_support: 2, min_confidence: 0.1 }
    }
}

/// Mines every rule of the canonical shape whose support and confidence
/// reach the thresholds, using only `train` for the middle atom.
pub fn mine_rules(store: &KnowledgeGraphStore, train: &[Alignment], config: MiningConfig) -> Vec<HornRule> {
    if train.is_empty() {
        log::warn!("no training alignments: no rules mined");
        return Vec::new();
    }
    let a = store.side(KgTag::A);
    let b = store.side(KgTag::B);
    let train_set: HashSet<Alignment> = train.iter().copied().collect();
    let mut train_sorted: Vec<Alignment> = train_set.iter().copied().collect();
    train_sorted.sort_unstable();

    // For each alignment (w, z) the x's reaching w, grouped by first atom.
    let mut by_first: HashMap<BodyAtom, Vec<(u32, Vec<u32>)>> = HashMap::new();
    for (i, al) in train_sorted.iter().enumerate() {
        for (atom, xs) in group_incident(a, al.a, true) {
            by_first.entry(atom).or_default().push((i as u32, xs));
        }
    }
    let last_groups: Vec<Vec<(BodyAtom, Vec<u32>)>> =
        train_sorted.iter().map(|al| group_incident(b, al.b, false)).collect();

    let mut firsts: Vec<BodyAtom> = by_first.keys().copied().collect();
    firsts.sort_unstable();
    let mut rules: Vec<HornRule> = firsts
        .par_iter()
        .flat_map_iter(|first| {
            let mut bodies: HashMap<BodyAtom, HashSet<(u32, u32)>> = HashMap::new();
            for (i, xs) in &by_first[first] {
                for (last, ys) in &last_groups[*i as usize] {
                    let set = bodies.entry(*last).or_default();
                    for &x in xs {
                        for &y in ys {
                            set.insert((x, y));
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for (last, pairs) in bodies {
                let support = pairs.iter().filter(|&&(x, y)| train_set.contains(&Alignment::new(x, y))).count();
                let confidence = support as f64 / pairs.len() as f64;
                if support >= config.min_support && confidence >= config.min_confidence {
                    out.push(HornRule { first: *first, last, support, confidence });
                }
            }
            out
        })
        .collect();
    sort_rules(&mut rules);
    rules
}

/// Confidence descending, then support descending, then relation ids.
pub fn sort_rules(rules: &mut [HornRule]) {
    rules.sort_by(|p, q| {
        q.confidence
            .total_cmp(&p.confidence)
            .then(q.support.cmp(&p.support))
            .then(p.shape_key().cmp(&q.shape_key()))
    });
}

/// Groups the neighbours of `u` by the atom that connects them.
///
/// With `towards_u`, returns for each atom the entities `x` having
/// `(x, atom, u)`; otherwise the entities `y` having `(u, atom, y)`.
fn group_incident(side: &KgSide, u: u32, towards_u: bool) -> Vec<(BodyAtom, Vec<u32>)> {
    let mut groups: HashMap<BodyAtom, Vec<u32>> = HashMap::new();
    // (x, r, u) read forward lands on u via in_edges(u); read inverse via out_edges(u)
    let (fwd, inv) = if towards_u { (side.in_edges(u), side.out_edges(u)) } else { (side.out_edges(u), side.in_edges(u)) };
    for &(r, v) in fwd {
        groups.entry(BodyAtom::new(r, Direction::Forward)).or_default().push(v);
    }
    for &(r, v) in inv {
        groups.entry(BodyAtom::new(r, Direction::Inverse)).or_default().push(v);
    }
    let mut out: Vec<_> = groups
        .into_iter()
        .map(|(atom, mut vs)| {
            vs.sort_unstable();
            vs.dedup();
            (atom, vs)
        })
        .collect();
    out.sort_unstable_by_key(|(atom, _)| *atom);
    out
}

/// Precomputed lookup from rules to the pairs their bodies cover, for fast
/// scoring of whole candidate lists.
#[derive(Debug, Clone, Default)]
pub struct RuleIndex {
    by_first: HashMap<BodyAtom, Vec<(u32, BodyAtom)>>,
    by_last: HashMap<BodyAtom, Vec<(u32, BodyAtom)>>,
    len: usize,
}

impl RuleIndex {
    pub fn new(rules: &[HornRule]) -> Self {
        let mut idx = RuleIndex { len: rules.len(), ..Default::default() };
        for (k, rule) in rules.iter().enumerate() {
            idx.by_first.entry(rule.first).or_default().push((k as u32, rule.last));
            idx.by_last.entry(rule.last).or_default().push((k as u32, rule.first));
        }
        idx
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// For head `h ∈ A`: every tail `y ∈ B` with at least one firing rule,
    /// mapped to the sorted ids of the rules that fire.
    pub fn fired_from_head(
        &self,
        store: &KnowledgeGraphStore,
        context: &AlignmentIndex,
        h: u32,
    ) -> HashMap<u32, Vec<u32>> {
        let mut fired: HashMap<u32, Vec<u32>> = HashMap::new();
        if self.is_empty() {
            return fired;
        }
        let a = store.side(KgTag::A);
        let b = store.side(KgTag::B);
        for (first, ws) in group_incident(a, h, false) {
            let Some(rules) = self.by_first.get(&first) else { continue };
            let mut zs: Vec<u32> = ws.iter().flat_map(|&w| context.partners_of_a(w).iter().copied()).collect();
            zs.sort_unstable();
            zs.dedup();
            if zs.is_empty() {
                continue;
            }
            for &(k, last) in rules {
                let mut ys: Vec<u32> = zs.iter().flat_map(|&z| last.step(b, z)).collect();
                ys.sort_unstable();
                ys.dedup();
                for y in ys {
                    fired.entry(y).or_default().push(k);
                }
            }
        }
        fired.values_mut().for_each(|v| v.sort_unstable());
        fired
    }

    /// For tail `t ∈ B`: every head `x ∈ A` with at least one firing rule.
    pub fn fired_from_tail(
        &self,
        store: &KnowledgeGraphStore,
        context: &AlignmentIndex,
        t: u32,
    ) -> HashMap<u32, Vec<u32>> {
        let mut fired: HashMap<u32, Vec<u32>> = HashMap::new();
        if self.is_empty() {
            return fired;
        }
        let a = store.side(KgTag::A);
        let b = store.side(KgTag::B);
        for (last, zs) in group_incident(b, t, true) {
            let Some(rules) = self.by_last.get(&last) else { continue };
            let mut ws: Vec<u32> = zs.iter().flat_map(|&z| context.partners_of_b(z).iter().copied()).collect();
            ws.sort_unstable();
            ws.dedup();
            if ws.is_empty() {
                continue;
            }
            for &(k, first) in rules {
                let mut xs: Vec<u32> = ws.iter().flat_map(|&w| first.flipped().step(a, w)).collect();
                xs.sort_unstable();
                xs.dedup();
                for x in xs {
                    fired.entry(x).or_default().push(k);
                }
            }
        }
        fired.values_mut().for_each(|v| v.sort_unstable());
        fired
    }
}

/// Rules followed by their digest, as stored in snapshots.
pub(crate) fn encode_rules(enc: &mut Encoder, rules: &[HornRule]) {
    enc.usize(rules.len());
    for rule in rules {
        for atom in [rule.first, rule.last] {
            enc.u32(atom.relation);
            enc.u8(atom.direction as u8);
        }
        enc.usize(rule.support);
        enc.f64(rule.confidence);
    }
    enc.bytes(&rules_digest(rules));
}

pub(crate) fn decode_rules(dec: &mut Decoder<'_>) -> Result<Vec<HornRule>> {
    let n = dec.usize()?;
    let mut rules = Vec::new();
    for _ in 0..n {
        let mut atoms = [BodyAtom::new(0, Direction::Forward); 2];
        for atom in &mut atoms {
            let relation = dec.u32()?;
            let direction = match dec.u8()? {
                0 => Direction::Forward,
                1 => Direction::Inverse,
                d => return Err(Error::Snapshot(format!("bad rule direction {d}"))),
            };
            *atom = BodyAtom::new(relation, direction);
        }
        rules.push(HornRule { first: atoms[0], last: atoms[1], support: dec.usize()?, confidence: dec.f64()? });
    }
    if dec.bytes()? != rules_digest(&rules) {
        return Err(Error::Snapshot("rule list digest mismatch".into()));
    }
    Ok(rules)
}

/// Stable digest of a rule list, stored in model snapshots.
pub fn rules_digest(rules: &[HornRule]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for r in rules {
        for atom in [r.first, r.last] {
            hasher.update(atom.relation.to_le_bytes());
            hasher.update([atom.direction as u8]);
        }
        hasher.update((r.support as u64).to_le_bytes());
        hasher.update(r.confidence.to_bits().to_le_bytes());
    }
    hasher.finalize().into()
}

/// One rule per line: `conf<TAB>support<TAB>r1<TAB>dir1<TAB>r2<TAB>dir2`.
pub fn write_rules(store: &KnowledgeGraphStore, rules: &[HornRule]) -> String {
    let mut out = String::new();
    for r in rules {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.confidence,
            r.support,
            store.side(KgTag::A).relation_iri(r.first.relation),
            r.first.direction.as_str(),
            store.side(KgTag::B).relation_iri(r.last.relation),
            r.last.direction.as_str()
        )
        .unwrap();
    }
    out
}

/// Parses a rule file, resolving `r1` against KG A and `r2` against KG B.
/// File order is kept, so externally mined rule lists load unchanged.
pub fn read_rules(store: &KnowledgeGraphStore, text: &str, name: &str) -> Result<Vec<HornRule>> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |message: String| Error::Format { file: name.to_string(), line: i + 1, message };
        let fields: Vec<&str> = line.split('\t').collect();
        let [conf, support, r1, d1, r2, d2] = fields.as_slice() else {
            return Err(bad(format!("expected 6 tab-separated fields, found {}", fields.len())));
        };
        let confidence: f64 = conf.parse().map_err(|_| bad(format!("bad confidence {conf:?}")))?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(bad(format!("confidence {confidence} outside [0, 1]")));
        }
        let support: usize = support.parse().map_err(|_| bad(format!("bad support {support:?}")))?;
        let rel = |kg: KgTag, iri: &str| {
            store.side(kg).relation_index(iri).ok_or_else(|| bad(format!("unknown KG {kg} relation {iri:?}")))
        };
        let dir = |d: &str| Direction::parse(d).ok_or_else(|| bad(format!("bad direction {d:?}")));
        rules.push(HornRule {
            first: BodyAtom::new(rel(KgTag::A, r1)?, dir(d1)?),
            last: BodyAtom::new(rel(KgTag::B, r2)?, dir(d2)?),
            support,
            confidence,
        });
    }
    Ok(rules)
}

impl fmt::Display for HornRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let atom = |a: BodyAtom, l: &str, r: &str| match a.direction {
            Direction::Forward => format!("({l}, r{}, {r})", a.relation),
            Direction::Inverse => format!("({r}, r{}, {l})", a.relation),
        };
        write!(
            f,
            "{} ∧ (w, sameAs, z) ∧ {} ⇒ (x, sameAs, y)  [support {}, confidence {:.4}]",
            atom(self.first, "x", "w"),
            atom(self.last, "z", "y"),
            self.support,
            self.confidence
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ntriples::{parse_str, ParseMode};

    /// Two mirrored families: fatherOf in A, childOf in B.
    fn families() -> (KnowledgeGraphStore, Vec<Alignment>) {
        let mut s = KnowledgeGraphStore::new();
        let a = parse_str("<a1> <fatherOf> <a2> .\n<a3> <fatherOf> <a4> .\n", ParseMode::Strict).unwrap();
        let b = parse_str("<b1> <childOf> <b2> .\n<b3> <childOf> <b4> .\n", ParseMode::Strict).unwrap();
        s.ingest_relational(&a.statements, KgTag::A, ParseMode::Strict).unwrap();
        s.ingest_relational(&b.statements, KgTag::B, ParseMode::Strict).unwrap();
        let train = (0..4).map(|i| Alignment::new(i, i)).collect();
        (s, train)
    }

    #[test]
    fn toy_family_rule() {
        let (s, train) = families();
        let rules = mine_rules(&s, &train, MiningConfig::default());
        let father = s.side(KgTag::A).relation_index("fatherOf").unwrap();
        let child = s.side(KgTag::B).relation_index("childOf").unwrap();
        let r = rules
            .iter()
            .find(|r| r.first == BodyAtom::new(father, Direction::Forward) && r.last == BodyAtom::new(child, Direction::Inverse))
            .expect("rule mined");
        assert_eq!(r.support, 2);
        assert_eq!(r.confidence, 1.0);
        let ctx = AlignmentIndex::new(&s, &train);
        let a3 = s.side(KgTag::A).entity_index("a3").unwrap();
        let b3 = s.side(KgTag::B).entity_index("b3").unwrap();
        assert!(evaluate_rule_body(&s, r, a3, b3, &ctx));
        let a4 = s.side(KgTag::A).entity_index("a4").unwrap();
        assert!(!evaluate_rule_body(&s, r, a4, b3, &ctx));
        assert!(!evaluate_rule_body(&s, r, a3, b3, &AlignmentIndex::new(&s, &[])));
    }

    #[test]
    fn support_threshold_drops_single_instances() {
        let (s, mut train) = families();
        train.truncate(2);
        assert!(mine_rules(&s, &train, MiningConfig::default()).is_empty());
        let rules = mine_rules(&s, &train, MiningConfig { min_support: 1, min_confidence: 0.0 });
        assert!(!rules.is_empty());
    }

    #[test]
    fn empty_training_and_no_patterns() {
        let (s, train) = families();
        assert!(mine_rules(&s, &[], MiningConfig::default()).is_empty());
        let mut bare = KnowledgeGraphStore::new();
        bare.intern_entity(KgTag::A, "x");
        bare.intern_entity(KgTag::B, "y");
        assert!(mine_rules(&bare, &[Alignment::new(0, 0)], MiningConfig::default()).is_empty());
        let _ = train;
    }

    #[test]
    fn fired_indexes_match_direct_evaluation() {
        let (s, train) = families();
        let rules = mine_rules(&s, &train, MiningConfig { min_support: 1, min_confidence: 0.0 });
        let ctx = AlignmentIndex::new(&s, &train);
        let idx = RuleIndex::new(&rules);
        for h in 0..4 {
            let fired = idx.fired_from_head(&s, &ctx, h);
            for t in 0..4 {
                let want: Vec<u32> = (0..rules.len() as u32)
                    .filter(|&k| evaluate_rule_body(&s, &rules[k as usize], h, t, &ctx))
                    .collect();
                assert_eq!(fired.get(&t).cloned().unwrap_or_default(), want);
                let back = idx.fired_from_tail(&s, &ctx, t);
                assert_eq!(back.get(&h).cloned().unwrap_or_default(), want);
            }
        }
    }

    #[test]
    fn rule_file_round_trip() {
        let (s, train) = families();
        let rules = mine_rules(&s, &train, MiningConfig { min_support: 1, min_confidence: 0.0 });
        let text = write_rules(&s, &rules);
        let back = read_rules(&s, &text, "rules.tsv").unwrap();
        assert_eq!(back, rules);
        assert_eq!(rules_digest(&back), rules_digest(&rules));
        assert!(read_rules(&s, "0.5\t2\tnope\tforward\tchildOf\tforward\n", "r").is_err());
        assert!(read_rules(&s, "0.5\t2\tfatherOf\tsideways\tchildOf\tforward\n", "r").is_err());
    }
}
