use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::{info, warn};

use mmkg_core::baselines::{concat_train, ensemble_train, ConcatModel, ConcatScorer, EnsembleScorer, ENSEMBLE_FAMILIES};
use mmkg_core::ntriples::ParseMode;
use mmkg_core::rules::{read_rules, write_rules};
use mmkg_core::split::SplitHeader;
use mmkg_core::{
    evaluate, mine_rules, split_alignments, AlignmentIndex, AlignmentSplit, DatasetFiles, ExpertSet, HornRule,
    KnowledgeGraphStore, PoeModel, RankingReport, Scorer,
};

use crate::config::{parse_hits, RunConfig, CONFIG_FILE};
use crate::{CliError, Common};

type Result<T> = std::result::Result<T, CliError>;

pub const STORE_FILE: &str = "store.bin";
pub const RULES_FILE: &str = "rules.tsv";
pub const MODEL_FILE: &str = "model.bin";
pub const LOG_FILE: &str = "train.log";
pub const REPORT_FILE: &str = "report.csv";
pub const CONCAT_FILE: &str = "concat.bin";

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &common.config {
        cfg.apply_file(p)?;
    }
    cfg.apply_overrides(&common.set)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    if common.lenient {
        cfg.lenient = true;
    }
    if cfg.threads > 0 {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    Ok(cfg)
}

/// `flag` if given, else the config key, else a usage error.
fn required(flag: &Option<PathBuf>, slot: &mut String, name: &str) -> Result<PathBuf> {
    if let Some(p) = flag {
        *slot = p.display().to_string();
    }
    if slot.is_empty() {
        return Err(CliError::Usage(format!("missing --{name}")));
    }
    Ok(PathBuf::from(slot.as_str()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: &Path, data: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, data).map_err(|e| CliError::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_config(out: &Path, cfg: &RunConfig) -> Result<()> {
    write(&out.join(CONFIG_FILE), cfg.render())
}

/// A store snapshot file, a directory holding one, or a directory of raw
/// dataset files which is ingested on the fly.
fn load_store(path: &Path, mode: ParseMode) -> Result<KnowledgeGraphStore> {
    if path.is_dir() {
        let snapshot = path.join(STORE_FILE);
        if snapshot.exists() {
            return Ok(KnowledgeGraphStore::load(snapshot)?);
        }
        return Ok(DatasetFiles::in_dir(path).load(mode)?);
    }
    Ok(KnowledgeGraphStore::load(path)?)
}

/// The store named by `--store`, or the one recorded in the split header.
fn store_for_split(cfg: &mut RunConfig, flag: &Option<PathBuf>, split_dir: &Path) -> Result<KnowledgeGraphStore> {
    if let Some(p) = flag {
        cfg.store = p.display().to_string();
    }
    if cfg.store.is_empty() {
        match SplitHeader::read(split_dir)?.store {
            Some(s) => cfg.store = s,
            None => return Err(CliError::Usage("missing --store and the split header names none".into())),
        }
    }
    load_store(Path::new(&cfg.store), cfg.parse_mode())
}

fn load_rules(cfg: &mut RunConfig, flag: &Option<PathBuf>, store: &KnowledgeGraphStore, split: &AlignmentSplit) -> Result<Vec<HornRule>> {
    if let Some(p) = flag {
        cfg.rules = p.display().to_string();
    }
    if cfg.rules.is_empty() {
        let rules = mine_rules(store, &split.train, cfg.mining_config());
        info!("mined {} rules", rules.len());
        return Ok(rules);
    }
    let path = PathBuf::from(&cfg.rules);
    Ok(read_rules(store, &read_text(&path)?, &cfg.rules)?)
}

fn print_report(report: &RankingReport, label: &str, out: Option<&Path>) -> Result<()> {
    print!("{report}");
    println!("{}", report.summary_row(label));
    match out {
        Some(dir) => write(&dir.join(REPORT_FILE), report.to_csv()),
        None => {
            print!("{}", report.to_csv());
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory with the standard file names (kg_a.nt, kg_b.nt, ...).
    #[arg(long)]
    dir: Option<PathBuf>,
    #[arg(long)]
    kg_a: Option<PathBuf>,
    #[arg(long)]
    kg_b: Option<PathBuf>,
    #[arg(long)]
    numeric_a: Option<PathBuf>,
    #[arg(long)]
    numeric_b: Option<PathBuf>,
    #[arg(long)]
    images_a: Option<PathBuf>,
    #[arg(long)]
    images_b: Option<PathBuf>,
    #[arg(long)]
    same_as: Option<PathBuf>,
    #[arg(long)]
    attr_map: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let mut files = match &a.dir {
        Some(d) => DatasetFiles::in_dir(d),
        None => DatasetFiles::default(),
    };
    match (a.kg_a, a.kg_b) {
        (Some(x), Some(y)) => (files.kg_a, files.kg_b) = (x, y),
        (None, None) if a.dir.is_some() => {}
        _ => return Err(CliError::Usage("give --dir or both --kg-a and --kg-b".into())),
    }
    for (flag, slot) in [
        (a.numeric_a, &mut files.numeric_a),
        (a.numeric_b, &mut files.numeric_b),
        (a.images_a, &mut files.images_a),
        (a.images_b, &mut files.images_b),
        (a.same_as, &mut files.same_as),
        (a.attr_map, &mut files.attr_map),
    ] {
        if flag.is_some() {
            *slot = flag;
        }
    }
    let store = files.load(cfg.parse_mode())?;
    create_dir(&out)?;
    store.save(out.join(STORE_FILE))?;
    write_config(&out, &cfg)?;
    print!("{}", store.stats());
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Store snapshot, run directory, or raw dataset directory.
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    lenient: bool,
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let mode = if a.lenient { ParseMode::Lenient } else { ParseMode::Strict };
    print!("{}", load_store(&a.store, mode)?.stats());
    Ok(())
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    /// Percentage of alignments used for training.
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn split(a: SplitArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    if let Some(p) = a.p {
        cfg.p_percent = p;
    }
    let store_path = required(&a.store, &mut cfg.store, "store")?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let store = load_store(&store_path, cfg.parse_mode())?;
    let alignments: Vec<_> = store.alignments().collect();
    let split = split_alignments(&alignments, cfg.p_percent, cfg.seed)?;
    let store_ref = std::path::absolute(&store_path).map_err(|e| CliError::io(&store_path, e))?;
    split.write_dir(&out, &store, Some(&store_ref.display().to_string()))?;
    write_config(&out, &cfg)?;
    println!("train {}  valid {}  test {}", split.train.len(), split.valid.len(), split.test.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    min_support: Option<usize>,
    #[arg(long)]
    min_confidence: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn mine(a: MineArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    if let Some(s) = a.min_support {
        cfg.min_support = s;
    }
    if let Some(c) = a.min_confidence {
        cfg.min_confidence = c;
    }
    let split_dir = required(&a.split, &mut cfg.split, "split")?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let store = store_for_split(&mut cfg, &a.store, &split_dir)?;
    let split = AlignmentSplit::read_dir(&split_dir, &store)?;
    let rules = mine_rules(&store, &split.train, cfg.mining_config());
    create_dir(&out)?;
    write(&out.join(RULES_FILE), write_rules(&store, &rules))?;
    write_config(&out, &cfg)?;
    println!("{} rules", rules.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    /// Rule file; rules are mined from the split when omitted.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Non-empty subset of `lrni`.
    #[arg(long)]
    experts: Option<String>,
    /// Train on a single thread so runs repeat bit for bit.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    if let Some(e) = &a.experts {
        cfg.set("experts", e)?;
    }
    if a.deterministic {
        cfg.deterministic = true;
    }
    let split_dir = required(&a.split, &mut cfg.split, "split")?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let store = store_for_split(&mut cfg, &a.store, &split_dir)?;
    let split = AlignmentSplit::read_dir(&split_dir, &store)?;
    let rules = load_rules(&mut cfg, &a.rules, &store, &split)?;
    create_dir(&out)?;
    write_config(&out, &cfg)?;
    write(&out.join(RULES_FILE), write_rules(&store, &rules))?;
    let outcome = match mmkg_core::train(&store, &rules, &split, &cfg.train_config()) {
        Ok(o) => o,
        Err(mmkg_core::Error::Diverged { epoch, detail, last_finite }) => {
            if let Some(m) = &last_finite {
                let path = out.join("model.diverged.bin");
                m.save(&path)?;
                warn!("wrote last finite parameters to {}", path.display());
            }
            return Err(mmkg_core::Error::Diverged { epoch, detail, last_finite }.into());
        }
        Err(e) => return Err(e.into()),
    };
    outcome.model.save(out.join(MODEL_FILE))?;
    write(&out.join(LOG_FILE), outcome.log.to_string())?;
    print!("{}", outcome.log);
    match outcome.best_mrr {
        Some(m) => println!("{} best epoch {} validation MRR {m:.6}", cfg.experts, outcome.best_epoch),
        None => println!("{} trained {} epochs (no validation set)", cfg.experts, outcome.best_epoch),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Defaults to the store recorded in the split header.
    #[arg(long)]
    store: Option<PathBuf>,
    /// Defaults to the `experts` key of the config beside the model.
    #[arg(long)]
    experts: Option<String>,
    /// Comma-separated cut-offs.
    #[arg(long)]
    hits: Option<String>,
    /// Writes report.csv here; without it the CSV goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

fn experts_beside(model: &Path) -> Result<Option<ExpertSet>> {
    let path = model.with_file_name(CONFIG_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let mut cfg = RunConfig::default();
    cfg.apply_file(&path)?;
    Ok(Some(cfg.experts))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = RunConfig { lenient: a.lenient, ..Default::default() };
    let hits = match &a.hits {
        Some(h) => parse_hits(h)?,
        None => cfg.hits.clone(),
    };
    let experts = match &a.experts {
        Some(e) => ExpertSet::parse(e).map_err(|e| CliError::Usage(e.to_string()))?,
        None => experts_beside(&a.model)?.unwrap_or(ExpertSet::ALL),
    };
    let model = PoeModel::load(&a.model)?;
    let store = store_for_split(&mut cfg, &a.store, &a.split)?;
    let split = AlignmentSplit::read_dir(&a.split, &store)?;
    let context = AlignmentIndex::new(&store, &split.train);
    let report = evaluate(&Scorer::new(&model, &store, &context, experts)?, &split.test, &hits)?;
    if let Some(dir) = &a.out {
        create_dir(dir)?;
    }
    print_report(&report, &experts.to_string(), a.out.as_deref())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Method {
    Concat,
    Ensemble,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    hits: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn baseline(a: BaselineArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    if let Some(h) = &a.hits {
        cfg.hits = parse_hits(h)?;
    }
    if a.deterministic {
        cfg.deterministic = true;
    }
    let split_dir = required(&a.split, &mut cfg.split, "split")?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let store = store_for_split(&mut cfg, &a.store, &split_dir)?;
    let split = AlignmentSplit::read_dir(&split_dir, &store)?;
    let rules = load_rules(&mut cfg, &a.rules, &store, &split)?;
    create_dir(&out)?;
    write_config(&out, &cfg)?;
    let context = AlignmentIndex::new(&store, &split.train);
    let (report, label) = match a.method {
        Method::Concat => {
            let model: ConcatModel = concat_train(&store, &rules, &split, &cfg.concat_config())?;
            model.save(out.join(CONCAT_FILE))?;
            (evaluate(&ConcatScorer::new(&model, &store, &context)?, &split.test, &cfg.hits)?, "Concat")
        }
        Method::Ensemble => {
            let ensemble = ensemble_train(&store, &rules, &split, &ENSEMBLE_FAMILIES, &cfg.train_config())?;
            for (experts, model) in &ensemble.members {
                model.save(out.join(format!("ensemble_{}.bin", experts.suffix())))?;
            }
            (evaluate(&EnsembleScorer::new(&ensemble, &store, &context)?, &split.test, &cfg.hits)?, "Ensemble")
        }
    };
    print_report(&report, label, Some(&out))
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = resolve(&a.common)?;
    let out = required(&a.out, &mut cfg.out, "out")?;
    let data = mmkg_core::generate(&cfg.synth_config())?;
    data.write_dir(&out)?;
    write_config(&out, &cfg)?;
    println!(
        "{} + {} relational triples, {} alignments",
        data.relational_a.len(),
        data.relational_b.len(),
        data.same_as.len()
    );
    Ok(())
}
