//! Seeded train/validation/test partitions of the alignment set.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ntriples::{parse_str, serialize_ntriples, ParseMode, RdfStatement, RdfTerm};
use crate::store::{Alignment, KgTag, KnowledgeGraphStore};

/// Name written to split headers. Alignments are sorted by `(a, b)` index,
/// shuffled in place by Fisher-Yates driven by `ChaCha8Rng::seed_from_u64`,
/// and cut into train, validation and test in that order.
pub const SPLIT_GENERATOR: &str = "chacha8-fisher-yates-v1";

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSplit {
    pub train: Vec<Alignment>,
    pub valid: Vec<Alignment>,
    pub test: Vec<Alignment>,
    pub p_percent: f64,
    pub seed: u64,
}

/// Number of training alignments for `total` alignments at `p_percent`.
pub fn train_size(total: usize, p_percent: f64) -> usize {
    // multiply before dividing: p/100 is inexact for most p
    (p_percent * total as f64 / 100.0).floor() as usize
}

/// Splits `alignments` so that `|train| = floor(P/100 * n)` and the rest is
/// halved between validation and test, validation taking the odd element.
pub fn split_alignments(alignments: &[Alignment], p_percent: f64, seed: u64) -> Result<AlignmentSplit> {
    if alignments.is_empty() {
        return Err(Error::invalid("cannot split an empty alignment set"));
    }
    if !(p_percent > 0.0 && p_percent < 100.0) {
        return Err(Error::invalid(format!("known-alignment percentage must be in (0, 100), got {p_percent}")));
    }
    let mut pool: Vec<Alignment> = alignments.to_vec();
    pool.sort_unstable();
    pool.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);

    let n_train = train_size(pool.len(), p_percent);
    let rest = pool.len() - n_train;
    let n_valid = rest - rest / 2;
    let mut train = pool[..n_train].to_vec();
    let mut valid = pool[n_train..n_train + n_valid].to_vec();
    let mut test = pool[n_train + n_valid..].to_vec();
    train.sort_unstable();
    valid.sort_unstable();
    test.sort_unstable();
    Ok(AlignmentSplit { train, valid, test, p_percent, seed })
}

const PARTS: [&str; 3] = ["train", "valid", "test"];

impl AlignmentSplit {
    fn part(&self, name: &str) -> &[Alignment] {
        match name {
            "train" => &self.train,
            "valid" => &self.valid,
            _ => &self.test,
        }
    }

    /// Writes `train.nt`, `valid.nt`, `test.nt` and `split.header` into `dir`.
    /// `store_ref` is recorded in the header so later commands can find the
    /// store the split was made from.
    pub fn write_dir(&self, dir: &Path, store: &KnowledgeGraphStore, store_ref: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let same_as = RdfTerm::iri(store.same_as_iri()).map_err(|e| Error::invalid(e.0))?;
        for name in PARTS {
            let statements: Vec<RdfStatement> = self
                .part(name)
                .iter()
                .map(|al| {
                    let (a, b) = al.entities();
                    RdfStatement {
                        subject: RdfTerm::Iri(store.entity_iri(a).to_string()),
                        predicate: same_as.clone(),
                        object: RdfTerm::Iri(store.entity_iri(b).to_string()),
                    }
                })
                .collect();
            let path = dir.join(format!("{name}.nt"));
            fs::write(&path, serialize_ntriples(&statements)).map_err(|e| Error::io(&path, e))?;
        }
        let mut header = String::new();
        writeln!(header, "p_percent = {}", self.p_percent).unwrap();
        writeln!(header, "seed = {}", self.seed).unwrap();
        writeln!(header, "generator = {SPLIT_GENERATOR}").unwrap();
        writeln!(header, "train = {}", self.train.len()).unwrap();
        writeln!(header, "valid = {}", self.valid.len()).unwrap();
        writeln!(header, "test = {}", self.test.len()).unwrap();
        if let Some(s) = store_ref {
            writeln!(header, "store = {s}").unwrap();
        }
        let path = dir.join("split.header");
        fs::write(&path, header).map_err(|e| Error::io(&path, e))
    }

    /// Reads a split directory written by [`AlignmentSplit::write_dir`]. The
    /// three files are resolved against `store`; unknown IRIs are an error.
    pub fn read_dir(dir: &Path, store: &KnowledgeGraphStore) -> Result<Self> {
        let header = SplitHeader::read(dir)?;
        let mut parts: Vec<Vec<Alignment>> = Vec::new();
        for name in PARTS {
            let path = dir.join(format!("{name}.nt"));
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let statements = parse_str(&text, ParseMode::Strict)?.statements;
            let mut part = Vec::with_capacity(statements.len());
            for (i, st) in statements.iter().enumerate() {
                let resolve = |term: &RdfTerm, kg: KgTag| {
                    term.as_iri().and_then(|iri| store.entity_id(kg, iri)).ok_or_else(|| Error::Format {
                        file: path.display().to_string(),
                        line: i + 1,
                        message: format!("entity not in KG {kg}: {term}"),
                    })
                };
                let a = resolve(&st.subject, KgTag::A)?;
                let b = resolve(&st.object, KgTag::B)?;
                part.push(Alignment::new(a.index, b.index));
            }
            parts.push(part);
        }
        let test = parts.pop().unwrap();
        let valid = parts.pop().unwrap();
        let train = parts.pop().unwrap();
        let split = AlignmentSplit { train, valid, test, p_percent: header.p_percent, seed: header.seed };
        if [split.train.len(), split.valid.len(), split.test.len()] != header.counts {
            return Err(Error::invalid(format!("{}: split files disagree with header counts", dir.display())));
        }
        Ok(split)
    }
}

/// The `split.header` sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitHeader {
    pub p_percent: f64,
    pub seed: u64,
    pub generator: String,
    pub counts: [usize; 3],
    pub store: Option<String>,
}

impl SplitHeader {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join("split.header");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut h = SplitHeader { p_percent: 0.0, seed: 0, generator: String::new(), counts: [0; 3], store: None };
        for (i, line) in text.lines().enumerate() {
            let Some((k, v)) = line.split_once('=') else { continue };
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::Format { file: path.display().to_string(), line: i + 1, message: format!("bad value for {k}") };
            match k {
                "p_percent" => h.p_percent = v.parse().map_err(|_| bad())?,
                "seed" => h.seed = v.parse().map_err(|_| bad())?,
                "generator" => h.generator = v.to_string(),
                "train" => h.counts[0] = v.parse().map_err(|_| bad())?,
                "valid" => h.counts[1] = v.parse().map_err(|_| bad())?,
                "test" => h.counts[2] = v.parse().map_err(|_| bad())?,
                "store" => h.store = Some(v.to_string()),
                _ => {}
            }
        }
        Ok(h)
    }
}
