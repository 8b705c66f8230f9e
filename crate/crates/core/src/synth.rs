//! Paired synthetic KGs with planted alignments and tunable signal per
//! modality.
//!
//! KG A gets random triples. Every A triple between two aligned entities is
//! copied into KG B under the paired relation unless dropped. Aligned pairs
//! share a latent value per numeric attribute and a latent unit image
//! vector; each side observes them with Gaussian noise. Unaligned entities
//! draw independently.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::dataset::{self, DatasetFiles};
use crate::error::{Error, Result};
use crate::ntriples::{serialize_ntriples, ParseMode, RdfStatement, RdfTerm};
use crate::store::{read_mmke, write_mmke, Alignment, KgTag, KnowledgeGraphStore, OWL_SAME_AS};

const BASE: &str = "http://synth.example.org/";
const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub entities_per_kg: usize,
    pub relation_types: usize,
    pub triples_per_kg: usize,
    pub aligned_fraction: f64,
    pub mirror_dropout: f64,
    pub numeric_attrs: usize,
    pub numeric_noise_sigma: f64,
    /// Probability that an entity has a given attribute.
    pub numeric_coverage: f64,
    pub image_dim: usize,
    pub image_noise_sigma: f64,
    /// Probability that an entity has an image.
    pub image_coverage: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities_per_kg: 200,
            relation_types: 6,
            triples_per_kg: 1200,
            aligned_fraction: 1.0,
            mirror_dropout: 0.2,
            numeric_attrs: 3,
            numeric_noise_sigma: 0.05,
            numeric_coverage: 1.0,
            image_dim: 16,
            image_noise_sigma: 0.05,
            image_coverage: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = self.entities_per_kg;
        if n < 2 || self.relation_types == 0 || self.image_dim == 0 {
            return Err(Error::invalid("entities_per_kg must be at least 2; relation_types and image_dim positive"));
        }
        if !(self.aligned_fraction > 0.0 && self.aligned_fraction <= 1.0) {
            return Err(Error::invalid("aligned_fraction must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.mirror_dropout) {
            return Err(Error::invalid("mirror_dropout must be in [0, 1)"));
        }
        for (name, v) in [("numeric_coverage", self.numeric_coverage), ("image_coverage", self.image_coverage)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1]")));
            }
        }
        for (name, v) in [("numeric_noise_sigma", self.numeric_noise_sigma), ("image_noise_sigma", self.image_noise_sigma)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative")));
            }
        }
        let capacity = n * (n - 1) * self.relation_types;
        if self.triples_per_kg > capacity {
            return Err(Error::invalid(format!(
                "{} triples requested but only {capacity} distinct (head, relation, tail) exist",
                self.triples_per_kg
            )));
        }
        if self.triples_per_kg < n {
            return Err(Error::invalid("triples_per_kg must be at least entities_per_kg so every entity appears"));
        }
        Ok(())
    }

    pub fn aligned_count(&self) -> usize {
        ((self.aligned_fraction * self.entities_per_kg as f64).round() as usize).clamp(1, self.entities_per_kg)
    }
}

/// Generated statements and vectors, in the external file formats' terms.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub relational_a: Vec<RdfStatement>,
    pub relational_b: Vec<RdfStatement>,
    pub numeric_a: Vec<RdfStatement>,
    pub numeric_b: Vec<RdfStatement>,
    pub same_as: Vec<RdfStatement>,
    pub images_a: Vec<(String, Vec<f64>)>,
    pub images_b: Vec<(String, Vec<f64>)>,
    pub attribute_map: Vec<(String, String)>,
    pub image_dim: usize,
}

fn entity_iri(kg: KgTag, i: usize) -> String {
    format!("{BASE}{}/e{i}", kg.to_string().to_lowercase())
}

fn relation_iri(kg: KgTag, r: usize) -> String {
    format!("{BASE}{}/rel{r}", kg.to_string().to_lowercase())
}

fn attribute_iri(kg: KgTag, j: usize) -> String {
    format!("{BASE}{}/attr{j}", kg.to_string().to_lowercase())
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn perturb<R: Rng>(rng: &mut R, v: &[f64], sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return v.to_vec();
    }
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let w: Vec<f64> = v.iter().map(|x| x + noise.sample(rng)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        w.into_iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Random distinct triples over `n` entities: one headed by each entity not
/// yet mentioned, then uniform draws up to `target`.
fn random_triples<R: Rng>(
    rng: &mut R,
    n: usize,
    relations: usize,
    target: usize,
    existing: &mut HashSet<(usize, usize, usize)>,
    order: &mut Vec<(usize, usize, usize)>,
) {
    let add = |t: (usize, usize, usize), existing: &mut HashSet<_>, order: &mut Vec<_>| {
        if existing.insert(t) {
            order.push(t);
        }
    };
    let covered: HashSet<usize> = order.iter().flat_map(|&(h, _, t)| [h, t]).collect();
    for h in 0..n {
        if covered.contains(&h) {
            continue;
        }
        loop {
            let t = rng.random_range(0..n);
            let r = rng.random_range(0..relations);
            if t != h && !existing.contains(&(h, r, t)) {
                add((h, r, t), existing, order);
                break;
            }
        }
    }
    while order.len() < target {
        let h = rng.random_range(0..n);
        let t = rng.random_range(0..n);
        let r = rng.random_range(0..relations);
        if h != t {
            add((h, r, t), existing, order);
        }
    }
}

pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.entities_per_kg;

    // A entity i is aligned with B entity partner[i] for the first m entries
    // of a random permutation of A.
    let mut a_order: Vec<usize> = (0..n).collect();
    a_order.shuffle(&mut rng);
    let mut b_order: Vec<usize> = (0..n).collect();
    b_order.shuffle(&mut rng);
    let m = config.aligned_count();
    let mut partner: Vec<Option<usize>> = vec![None; n];
    for k in 0..m {
        partner[a_order[k]] = Some(b_order[k]);
    }
    let mut alignments: Vec<(usize, usize)> = (0..n).filter_map(|i| partner[i].map(|j| (i, j))).collect();
    alignments.sort_unstable();

    let mut set_a = HashSet::new();
    let mut triples_a = Vec::new();
    random_triples(&mut rng, n, config.relation_types, config.triples_per_kg, &mut set_a, &mut triples_a);

    let mut set_b = HashSet::new();
    let mut triples_b = Vec::new();
    for &(h, r, t) in &triples_a {
        if let (Some(hb), Some(tb)) = (partner[h], partner[t]) {
            if rng.random::<f64>() >= config.mirror_dropout && set_b.insert((hb, r, tb)) {
                triples_b.push((hb, r, tb));
            }
        }
    }
    let target_b = config.triples_per_kg.max(triples_b.len());
    random_triples(&mut rng, n, config.relation_types, target_b, &mut set_b, &mut triples_b);

    let relational = |kg: KgTag, triples: &[(usize, usize, usize)]| -> Vec<RdfStatement> {
        triples
            .iter()
            .map(|&(h, r, t)| RdfStatement {
                subject: RdfTerm::Iri(entity_iri(kg, h)),
                predicate: RdfTerm::Iri(relation_iri(kg, r)),
                object: RdfTerm::Iri(entity_iri(kg, t)),
            })
            .collect()
    };
    let relational_a = relational(KgTag::A, &triples_a);
    let relational_b = relational(KgTag::B, &triples_b);

    // latent values in KG A order; B entities without a partner draw fresh
    let numeric_noise = Normal::new(0.0, config.numeric_noise_sigma).expect("validated sigma");
    let mut b_partner_of = vec![None; n];
    for &(i, j) in &alignments {
        b_partner_of[j] = Some(i);
    }
    let latent_a: Vec<Vec<f64>> = (0..n).map(|_| (0..config.numeric_attrs).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let latent_b: Vec<Vec<f64>> = (0..n)
        .map(|j| match b_partner_of[j] {
            Some(i) => latent_a[i].clone(),
            None => (0..config.numeric_attrs).map(|_| StandardNormal.sample(&mut rng)).collect(),
        })
        .collect();
    let numeric = |kg: KgTag, latent: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<RdfStatement> {
        let mut out = Vec::new();
        for (i, values) in latent.iter().enumerate() {
            for (j, &z) in values.iter().enumerate() {
                let present = rng.random::<f64>() < config.numeric_coverage;
                let observed = z + numeric_noise.sample(rng);
                if present {
                    out.push(RdfStatement {
                        subject: RdfTerm::Iri(entity_iri(kg, i)),
                        predicate: RdfTerm::Iri(attribute_iri(kg, j)),
                        object: RdfTerm::Literal {
                            value: format!("{observed}"),
                            datatype: Some(XSD_DOUBLE.to_string()),
                            language: None,
                        },
                    });
                }
            }
        }
        out
    };
    let numeric_a = numeric(KgTag::A, &latent_a, &mut rng);
    let numeric_b = numeric(KgTag::B, &latent_b, &mut rng);

    let img_a: Vec<Vec<f64>> = (0..n).map(|_| unit_gaussian(&mut rng, config.image_dim)).collect();
    let img_b: Vec<Vec<f64>> = (0..n)
        .map(|j| match b_partner_of[j] {
            Some(i) => img_a[i].clone(),
            None => unit_gaussian(&mut rng, config.image_dim),
        })
        .collect();
    let images = |kg: KgTag, latent: &[Vec<f64>], rng: &mut ChaCha8Rng| -> Vec<(String, Vec<f64>)> {
        let mut out = Vec::new();
        for (i, u) in latent.iter().enumerate() {
            let present = rng.random::<f64>() < config.image_coverage;
            let v = perturb(rng, u, config.image_noise_sigma);
            if present {
                out.push((entity_iri(kg, i), v));
            }
        }
        out
    };
    let images_a = images(KgTag::A, &img_a, &mut rng);
    let images_b = images(KgTag::B, &img_b, &mut rng);

    let same_as = alignments
        .iter()
        .map(|&(i, j)| RdfStatement {
            subject: RdfTerm::Iri(entity_iri(KgTag::A, i)),
            predicate: RdfTerm::Iri(OWL_SAME_AS.to_string()),
            object: RdfTerm::Iri(entity_iri(KgTag::B, j)),
        })
        .collect();
    let attribute_map =
        (0..config.numeric_attrs).map(|j| (attribute_iri(KgTag::A, j), attribute_iri(KgTag::B, j))).collect();

    Ok(SynthDataset {
        relational_a,
        relational_b,
        numeric_a,
        numeric_b,
        same_as,
        images_a,
        images_b,
        attribute_map,
        image_dim: config.image_dim,
    })
}

/// Generates a dataset and loads it through the regular ingestion path.
pub fn generate_store(config: &SynthConfig) -> Result<(KnowledgeGraphStore, Vec<Alignment>)> {
    let store = generate(config)?.to_store()?;
    let alignments = store.alignments().collect();
    Ok((store, alignments))
}

impl SynthDataset {
    /// Ingests the dataset as if read from its files.
    pub fn to_store(&self) -> Result<KnowledgeGraphStore> {
        let mode = ParseMode::Strict;
        let mut store = KnowledgeGraphStore::new();
        store.ingest_relational(&self.relational_a, KgTag::A, mode)?;
        store.ingest_relational(&self.relational_b, KgTag::B, mode)?;
        store.ingest_numeric(&self.numeric_a, KgTag::A, mode)?;
        store.ingest_numeric(&self.numeric_b, KgTag::B, mode)?;
        for (rows, kg) in [(&self.images_a, KgTag::A), (&self.images_b, KgTag::B)] {
            let mut buf = Vec::new();
            write_mmke(&mut buf, self.image_dim, rows).map_err(|e| Error::io("<memory>", e))?;
            store.ingest_embedding_rows(read_mmke(buf.as_slice(), "<memory>")?, kg)?;
        }
        store.ingest_alignments(&self.same_as)?;
        store.set_attribute_map(&self.attribute_map);
        Ok(store)
    }

    /// Writes the standard files of [`DatasetFiles::in_dir`].
    pub fn write_dir(&self, dir: &Path) -> Result<DatasetFiles> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, data: Vec<u8>| -> Result<()> {
            let path = dir.join(name);
            fs::write(&path, data).map_err(|e| Error::io(&path, e))
        };
        write(dataset::KG_A_FILE, serialize_ntriples(&self.relational_a).into_bytes())?;
        write(dataset::KG_B_FILE, serialize_ntriples(&self.relational_b).into_bytes())?;
        write(dataset::NUMERIC_A_FILE, serialize_ntriples(&self.numeric_a).into_bytes())?;
        write(dataset::NUMERIC_B_FILE, serialize_ntriples(&self.numeric_b).into_bytes())?;
        write(dataset::SAME_AS_FILE, serialize_ntriples(&self.same_as).into_bytes())?;
        for (name, rows) in [(dataset::IMAGES_A_FILE, &self.images_a), (dataset::IMAGES_B_FILE, &self.images_b)] {
            let mut buf = Vec::new();
            write_mmke(&mut buf, self.image_dim, rows).map_err(|e| Error::io(dir.join(name), e))?;
            write(name, buf)?;
        }
        let map: String = self.attribute_map.iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
        write(dataset::ATTR_MAP_FILE, map.into_bytes())?;
        Ok(DatasetFiles::in_dir(dir))
    }
}
