//! Flat `key = value` run configuration.
//!
//! Every key has a default. A config file may set any subset; unknown keys
//! and malformed values are rejected. Flags given on the command line win
//! over the file. The merged result is written next to each command's
//! artifacts so a run can be repeated from its own directory.

use std::fmt::Write as _;
use std::path::Path;

use mmkg_core::baselines::ConcatConfig;
use mmkg_core::ntriples::ParseMode;
use mmkg_core::{ExpertSet, MiningConfig, SynthConfig, TrainConfig};

use crate::CliError;

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 uses every available core.
    pub threads: usize,
    pub deterministic: bool,
    pub lenient: bool,

    pub p_percent: f64,

    pub min_support: usize,
    pub min_confidence: f64,

    pub experts: ExpertSet,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub num_negatives: usize,
    pub validate_every: usize,
    pub dim: usize,
    pub negatives_from_all_entities: bool,
    pub numeric_all_relations: bool,

    pub negatives_per_positive: usize,
    pub hits: Vec<usize>,

    pub entities_per_kg: usize,
    pub relation_types: usize,
    pub triples_per_kg: usize,
    pub aligned_fraction: f64,
    pub mirror_dropout: f64,
    pub numeric_attrs: usize,
    pub numeric_noise_sigma: f64,
    pub numeric_coverage: f64,
    pub image_dim: usize,
    pub image_noise_sigma: f64,
    pub image_coverage: f64,

    // paths; empty means not given
    pub store: String,
    pub split: String,
    pub rules: String,
    pub model: String,
    pub out: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        let s = SynthConfig::default();
        let m = MiningConfig::default();
        RunConfig {
            seed: 0,
            threads: 0,
            deterministic: false,
            lenient: false,
            p_percent: 80.0,
            min_support: m.min_support,
            min_confidence: m.min_confidence,
            experts: t.experts,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            num_negatives: t.num_negatives,
            validate_every: t.validate_every,
            dim: t.dim,
            negatives_from_all_entities: t.negatives_from_all_entities,
            numeric_all_relations: t.numeric_all_relations,
            negatives_per_positive: ConcatConfig::default().negatives_per_positive,
            hits: vec![1, 10],
            entities_per_kg: s.entities_per_kg,
            relation_types: s.relation_types,
            triples_per_kg: s.triples_per_kg,
            aligned_fraction: s.aligned_fraction,
            mirror_dropout: s.mirror_dropout,
            numeric_attrs: s.numeric_attrs,
            numeric_noise_sigma: s.numeric_noise_sigma,
            numeric_coverage: s.numeric_coverage,
            image_dim: s.image_dim,
            image_noise_sigma: s.image_noise_sigma,
            image_coverage: s.image_coverage,
            store: String::new(),
            split: String::new(),
            rules: String::new(),
            model: String::new(),
            out: String::new(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Usage(format!("bad value for {key}: {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Usage(format!("bad value for {key}: {v:?} (expected true or false)"))),
    }
}

pub fn parse_hits(v: &str) -> Result<Vec<usize>, CliError> {
    let hits: Vec<usize> = v.split(',').map(|x| num("hits", x.trim())).collect::<Result<_, _>>()?;
    if hits.is_empty() || hits.contains(&0) {
        return Err(CliError::Usage(format!("bad value for hits: {v:?}")));
    }
    Ok(hits)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        match key {
            "seed" => self.seed = num(key, v)?,
            "threads" => self.threads = num(key, v)?,
            "deterministic" => self.deterministic = boolean(key, v)?,
            "lenient" => self.lenient = boolean(key, v)?,
            "p_percent" => self.p_percent = num(key, v)?,
            "min_support" => self.min_support = num(key, v)?,
            "min_confidence" => self.min_confidence = num(key, v)?,
            "experts" => self.experts = ExpertSet::parse(v).map_err(|e| CliError::Usage(e.to_string()))?,
            "learning_rate" => self.learning_rate = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "max_epochs" => self.max_epochs = num(key, v)?,
            "num_negatives" => self.num_negatives = num(key, v)?,
            "validate_every" => self.validate_every = num(key, v)?,
            "dim" => self.dim = num(key, v)?,
            "negatives_from_all_entities" => self.negatives_from_all_entities = boolean(key, v)?,
            "numeric_all_relations" => self.numeric_all_relations = boolean(key, v)?,
            "negatives_per_positive" => self.negatives_per_positive = num(key, v)?,
            "hits" => self.hits = parse_hits(v)?,
            "entities_per_kg" => self.entities_per_kg = num(key, v)?,
            "relation_types" => self.relation_types = num(key, v)?,
            "triples_per_kg" => self.triples_per_kg = num(key, v)?,
            "aligned_fraction" => self.aligned_fraction = num(key, v)?,
            "mirror_dropout" => self.mirror_dropout = num(key, v)?,
            "numeric_attrs" => self.numeric_attrs = num(key, v)?,
            "numeric_noise_sigma" => self.numeric_noise_sigma = num(key, v)?,
            "numeric_coverage" => self.numeric_coverage = num(key, v)?,
            "image_dim" => self.image_dim = num(key, v)?,
            "image_noise_sigma" => self.image_noise_sigma = num(key, v)?,
            "image_coverage" => self.image_coverage = num(key, v)?,
            "store" => self.store = v.to_string(),
            "split" => self.split = v.to_string(),
            "rules" => self.rules = v.to_string(),
            "model" => self.model = v.to_string(),
            "out" => self.out = v.to_string(),
            _ => return Err(CliError::Usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, name: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("{name} line {}: expected key = value", i + 1)));
            };
            self.set(k.trim(), v.trim()).map_err(|e| CliError::Usage(format!("{name} line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// `KEY=VALUE` overrides from the command line.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<(), CliError> {
        for s in sets {
            let Some((k, v)) = s.split_once('=') else {
                return Err(CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")));
            };
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Every key, in a fixed order, so the output is stable.
    pub fn render(&self) -> String {
        let hits: Vec<String> = self.hits.iter().map(usize::to_string).collect();
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("deterministic", self.deterministic.to_string()),
            ("lenient", self.lenient.to_string()),
            ("p_percent", self.p_percent.to_string()),
            ("min_support", self.min_support.to_string()),
            ("min_confidence", self.min_confidence.to_string()),
            ("experts", self.experts.suffix()),
            ("learning_rate", self.learning_rate.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("max_epochs", self.max_epochs.to_string()),
            ("num_negatives", self.num_negatives.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("dim", self.dim.to_string()),
            ("negatives_from_all_entities", self.negatives_from_all_entities.to_string()),
            ("numeric_all_relations", self.numeric_all_relations.to_string()),
            ("negatives_per_positive", self.negatives_per_positive.to_string()),
            ("hits", hits.join(",")),
            ("entities_per_kg", self.entities_per_kg.to_string()),
            ("relation_types", self.relation_types.to_string()),
            ("triples_per_kg", self.triples_per_kg.to_string()),
            ("aligned_fraction", self.aligned_fraction.to_string()),
            ("mirror_dropout", self.mirror_dropout.to_string()),
            ("numeric_attrs", self.numeric_attrs.to_string()),
            ("numeric_noise_sigma", self.numeric_noise_sigma.to_string()),
            ("numeric_coverage", self.numeric_coverage.to_string()),
            ("image_dim", self.image_dim.to_string()),
            ("image_noise_sigma", self.image_noise_sigma.to_string()),
            ("image_coverage", self.image_coverage.to_string()),
            ("store", self.store.clone()),
            ("split", self.split.clone()),
            ("rules", self.rules.clone()),
            ("model", self.model.clone()),
            ("out", self.out.clone()),
        ];
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").unwrap();
        }
        out
    }

    pub fn parse_mode(&self) -> ParseMode {
        if self.lenient {
            ParseMode::Lenient
        } else {
            ParseMode::Strict
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            num_negatives: self.num_negatives,
            validate_every: self.validate_every,
            experts: self.experts,
            seed: self.seed,
            dim: self.dim,
            negatives_from_all_entities: self.negatives_from_all_entities,
            numeric_all_relations: self.numeric_all_relations,
            deterministic: self.deterministic,
        }
    }

    pub fn mining_config(&self) -> MiningConfig {
        MiningConfig { min_support: self.min_support, min_confidence: self.min_confidence }
    }

    /// Concat shares the trainer's optimizer settings.
    pub fn concat_config(&self) -> ConcatConfig {
        ConcatConfig {
            negatives_per_positive: self.negatives_per_positive,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.max_epochs,
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            entities_per_kg: self.entities_per_kg,
            relation_types: self.relation_types,
            triples_per_kg: self.triples_per_kg,
            aligned_fraction: self.aligned_fraction,
            mirror_dropout: self.mirror_dropout,
            numeric_attrs: self.numeric_attrs,
            numeric_noise_sigma: self.numeric_noise_sigma,
            numeric_coverage: self.numeric_coverage,
            image_dim: self.image_dim,
            image_noise_sigma: self.image_noise_sigma,
            image_coverage: self.image_coverage,
            seed: self.seed,
        }
    }
}
