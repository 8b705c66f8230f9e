//! Multi-modal knowledge-graph entity alignment.
//!
//! Two knowledge graphs, their numeric literals and per-entity image vectors
//! are loaded into a [`KnowledgeGraphStore`]. A [`PoeModel`] combines latent,
//! relational, numerical and visual experts into one score for
//! `(a, sameAs, b)` and is trained with negative-sampled cross-entropy.

mod binio;

pub mod adam;
pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod experts;
pub mod literal;
pub mod ntriples;
pub mod rules;
pub mod split;
pub mod store;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use eval::{evaluate, RankingReport, SameAsScorer};
pub use experts::{Expert, ExpertSet, ModelConfig, NumericFeatureMap, PoeModel, Scorer};
pub use rules::{mine_rules, AlignmentIndex, HornRule, MiningConfig};
pub use split::{split_alignments, AlignmentSplit};
pub use store::{Alignment, EntityId, KgTag, KnowledgeGraphStore, RelationId};
pub use train::{train, TrainConfig, TrainLog, TrainOutcome};
pub use dataset::DatasetFiles;
pub use synth::{generate, SynthConfig};
