//! Loading a KG pair from its files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};

use crate::error::{Error, Result};
use crate::ntriples::{parse_ntriples, ParseMode, RdfStatement};
use crate::store::{read_attribute_map, KgTag, KnowledgeGraphStore};

pub const KG_A_FILE: &str = "kg_a.nt";
pub const KG_B_FILE: &str = "kg_b.nt";
pub const NUMERIC_A_FILE: &str = "numeric_a.nt";
pub const NUMERIC_B_FILE: &str = "numeric_b.nt";
pub const IMAGES_A_FILE: &str = "images_a.mmke";
pub const IMAGES_B_FILE: &str = "images_b.mmke";
pub const SAME_AS_FILE: &str = "same_as.nt";
pub const ATTR_MAP_FILE: &str = "attr_map.tsv";

/// Input files of one KG pair. Only the relational graphs are required.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetFiles {
    pub kg_a: PathBuf,
    pub kg_b: PathBuf,
    pub numeric_a: Option<PathBuf>,
    pub numeric_b: Option<PathBuf>,
    pub images_a: Option<PathBuf>,
    pub images_b: Option<PathBuf>,
    pub same_as: Option<PathBuf>,
    pub attr_map: Option<PathBuf>,
}

impl DatasetFiles {
    /// The standard file names inside `dir`; optional files are included
    /// only if they exist.
    pub fn in_dir(dir: &Path) -> Self {
        let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
        DatasetFiles {
            kg_a: dir.join(KG_A_FILE),
            kg_b: dir.join(KG_B_FILE),
            numeric_a: opt(NUMERIC_A_FILE),
            numeric_b: opt(NUMERIC_B_FILE),
            images_a: opt(IMAGES_A_FILE),
            images_b: opt(IMAGES_B_FILE),
            same_as: opt(SAME_AS_FILE),
            attr_map: opt(ATTR_MAP_FILE),
        }
    }

    /// Ingests relational graphs first so that literal, image and alignment
    /// files can be resolved against their entities.
    pub fn load(&self, mode: ParseMode) -> Result<KnowledgeGraphStore> {
        let mut store = KnowledgeGraphStore::new();
        store.ingest_relational(&read_statements(&self.kg_a, mode)?, KgTag::A, mode)?;
        store.ingest_relational(&read_statements(&self.kg_b, mode)?, KgTag::B, mode)?;
        for (path, kg) in [(&self.numeric_a, KgTag::A), (&self.numeric_b, KgTag::B)] {
            if let Some(p) = path {
                store.ingest_numeric(&read_statements(p, mode)?, kg, mode)?;
            }
        }
        for (path, kg) in [(&self.images_a, KgTag::A), (&self.images_b, KgTag::B)] {
            if let Some(p) = path {
                store.ingest_embeddings(p, kg)?;
            }
        }
        if let Some(p) = &self.same_as {
            store.ingest_alignments(&read_statements(p, mode)?)?;
        }
        if let Some(p) = &self.attr_map {
            let file = File::open(p).map_err(|e| Error::io(p, e))?;
            let pairs = read_attribute_map(BufReader::new(file), &p.display().to_string())?;
            let kept = store.set_attribute_map(&pairs);
            if kept < pairs.len() {
                warn!("{}: {} of {} attribute pairs name unknown attributes", p.display(), pairs.len() - kept, pairs.len());
            }
        }
        info!("ingested {} alignments", store.alignment_count());
        Ok(store)
    }
}

pub fn read_statements(path: &Path, mode: ParseMode) -> Result<Vec<RdfStatement>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let outcome = parse_ntriples(BufReader::new(file), mode)?;
    if outcome.skipped > 0 {
        warn!("{}: skipped {} malformed lines", path.display(), outcome.skipped);
        for e in &outcome.skipped_errors {
            warn!("{}: {e}", path.display());
        }
    }
    Ok(outcome.statements)
}
