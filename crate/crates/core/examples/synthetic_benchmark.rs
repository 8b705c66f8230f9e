//! Trains every method on the synthetic strong-signal benchmark and prints
//! test metrics per seed.
//!
//! cargo run --release -p mmkg-core --example synthetic_benchmark -- \
//!     [seeds image_coverage numeric_coverage dim lr negatives batch \
//!      triples_per_kg numeric_attrs image_dim relation_types]

use std::time::Instant;

use mmkg_core::baselines::{concat_train, ensemble_train, ConcatConfig, ConcatScorer, EnsembleScorer, ENSEMBLE_FAMILIES};
use mmkg_core::synth::generate_store;
use mmkg_core::{evaluate, mine_rules, split_alignments, train, AlignmentIndex, ExpertSet, MiningConfig, Scorer, SynthConfig, TrainConfig};

fn main() -> mmkg_core::Result<()> {
    let arg = |i: usize, d: f64| -> f64 {
         std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(d)
    };
    let seeds = arg(1, 1.0) as u64;
    let image_coverage = arg(2, 1.0);
    let numeric_coverage = arg(3, 1.0);
    let train_config = TrainConfig {
        dim: arg(4, 100.0) as usize,
        learning_rate: arg(5, 0.001),
        num_negatives: arg(6, 100.0) as usize,
        batch_size: arg(7, 32.0) as usize,
        ..Default::default()
    };
    for seed in 0..seeds {
        let (store, als) = generate_store(&SynthConfig { seed, image_coverage, numeric_coverage, triples_per_kg: arg(8, 1200.0) as usize, numeric_attrs: arg(9, 3.0) as usize, relation_types: arg(11, 6.0) as usize, image_dim: arg(10, 16.0) as usize, ..Default::default() })?;
        let split = split_alignments(&als, 80.0, seed)?;
        let rules = mine_rules(&store, &split.train, MiningConfig::default());
        let ctx = AlignmentIndex::new(&store, &split.train);
        println!("seed {seed}: {} rules", rules.len());
        for e in ["lrni", "l", "r", "n", "i"] {
            let t = Instant::now();
            let experts = ExpertSet::parse(e)?;
            let out = train(&store, &rules, &split, &TrainConfig { experts, seed, ..train_config.clone() })?;
            let r = evaluate(&Scorer::new(&out.model, &store, &ctx, experts)?, &split.test, &[1, 10])?;
            println!("  {}  best epoch {:3}  {:.1}s", r.summary_row(&experts.to_string()), out.best_epoch, t.elapsed().as_secs_f64());
        }
        let t = Instant::now();
        let ens = ensemble_train(&store, &rules, &split, &ENSEMBLE_FAMILIES, &TrainConfig { seed, ..train_config.clone() })?;
        let r = evaluate(&EnsembleScorer::new(&ens, &store, &ctx)?, &split.test, &[1, 10])?;
        println!("  {}  {:.1}s", r.summary_row("Ensemble"), t.elapsed().as_secs_f64());
        let t = Instant::now();
        let cm = concat_train(&store, &rules, &split, &ConcatConfig { seed, ..Default::default() })?;
        let r = evaluate(&ConcatScorer::new(&cm, &store, &ctx)?, &split.test, &[1, 10])?;
        println!("  {}  {:.1}s", r.summary_row("Concat"), t.elapsed().as_secs_f64());
    }
    Ok(())
}
