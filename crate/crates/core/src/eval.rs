//! Unfiltered ranking evaluation of `sameAs` completion queries.
//!
//! Each test alignment `(a, b)` yields a tail query `(a, sameAs, ?)` ranked
//! against every KG B entity and a head query `(?, sameAs, b)` ranked against
//! every KG A entity. Other true alignments are not filtered out. Ties with
//! the true entity count half, so a constant scorer gets the expected rank.

use std::fmt::{self, Write as _};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experts::Scorer;
use crate::store::Alignment;

/// Anything that can score every candidate of a `sameAs` query.
pub trait SameAsScorer: Sync {
    /// Score of `(head, sameAs, t)` for every KG B entity `t`.
    fn tail_scores(&self, head: u32) -> Vec<f64>;
    /// Score of `(h, sameAs, tail)` for every KG A entity `h`.
    fn head_scores(&self, tail: u32) -> Vec<f64>;
}

impl SameAsScorer for Scorer<'_> {
    fn tail_scores(&self, head: u32) -> Vec<f64> {
        Scorer::tail_scores(self, head)
    }

    fn head_scores(&self, tail: u32) -> Vec<f64> {
        Scorer::head_scores(self, tail)
    }
}

/// `1 + |{c : s_c > s_true}| + |{c ≠ true : s_c = s_true}| / 2`.
pub fn rank_of(scores: &[f64], truth: usize) -> Result<f64> {
    let Some(&target) = scores.get(truth) else {
        return Err(Error::invalid(format!("true entity {truth} not among {} candidates", scores.len())));
    };
    let (mut greater, mut ties) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if s > target {
            greater += 1;
        } else if s == target && i != truth {
            ties += 1;
        }
    }
    Ok(1.0 + greater as f64 + ties as f64 / 2.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub mean_rank: f64,
    pub mrr: f64,
    /// `(n, hits@n)` in ascending `n`.
    pub hits_at: Vec<(usize, f64)>,
    pub query_count: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[f64], hits_ns: &[usize]) -> Self {
        let n = ranks.len().max(1) as f64;
        let mut ns = hits_ns.to_vec();
        ns.sort_unstable();
        ns.dedup();
        Metrics {
            mean_rank: ranks.iter().sum::<f64>() / n,
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits_at: ns.iter().map(|&k| (k, ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / n)).collect(),
            query_count: ranks.len(),
        }
    }

    pub fn hits(&self, n: usize) -> Option<f64> {
        self.hits_at.iter().find(|(k, _)| *k == n).map(|&(_, v)| v)
    }

    /// Unweighted mean of two groups' metrics.
    fn mean_of(a: &Metrics, b: &Metrics) -> Metrics {
        Metrics {
            mean_rank: (a.mean_rank + b.mean_rank) / 2.0,
            mrr: (a.mrr + b.mrr) / 2.0,
            hits_at: a.hits_at.iter().zip(&b.hits_at).map(|(&(k, x), &(_, y))| (k, (x + y) / 2.0)).collect(),
            query_count: a.query_count + b.query_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingReport {
    /// `(h, sameAs, ?)` queries.
    pub tail: Metrics,
    /// `(?, sameAs, t)` queries.
    pub head: Metrics,
    /// All `2 × |test|` queries pooled.
    pub combined: Metrics,
    /// Mean of the two directions' metrics.
    pub combined_macro: Metrics,
}

/// Per-query ranks in test order, tail direction first.
pub fn query_ranks<S: SameAsScorer + ?Sized>(scorer: &S, test: &[Alignment]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs: Vec<(f64, f64)> = test
        .par_iter()
        .map(|al| {
            let tail = rank_of(&scorer.tail_scores(al.a), al.b as usize)?;
            let head = rank_of(&scorer.head_scores(al.b), al.a as usize)?;
            Ok((tail, head))
        })
        .collect::<Result<_>>()?;
    Ok(pairs.into_iter().unzip())
}

pub fn evaluate<S: SameAsScorer + ?Sized>(scorer: &S, test: &[Alignment], hits_ns: &[usize]) -> Result<RankingReport> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    let (tail_ranks, head_ranks) = query_ranks(scorer, test)?;
    let all: Vec<f64> = tail_ranks.iter().chain(&head_ranks).copied().collect();
    let tail = Metrics::from_ranks(&tail_ranks, hits_ns);
    let head = Metrics::from_ranks(&head_ranks, hits_ns);
    let combined = Metrics::from_ranks(&all, hits_ns);
    let combined_macro = Metrics::mean_of(&tail, &head);
    Ok(RankingReport { tail, head, combined, combined_macro })
}

impl RankingReport {
    /// `direction,metric,value` rows for tail, head and pooled queries.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("direction,metric,value\n");
        for (name, m) in [("tail", &self.tail), ("head", &self.head), ("combined", &self.combined)] {
            writeln!(out, "{name},mr,{}", m.mean_rank).unwrap();
            writeln!(out, "{name},mrr,{}", m.mrr).unwrap();
            for (k, v) in &m.hits_at {
                writeln!(out, "{name},hits@{k},{v}").unwrap();
            }
        }
        out
    }

    /// `MRR Hits@1 Hits@10` of the pooled queries, scaled by 100.
    pub fn summary_row(&self, label: &str) -> String {
        let mut row = format!("{label:<12} MRR {:6.1}", self.combined.mrr * 100.0);
        for (k, v) in &self.combined.hits_at {
            write!(row, "  Hits@{k} {:6.1}", v * 100.0).unwrap();
        }
        row
    }
}

impl fmt::Display for RankingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<16} {:>8} {:>10} {:>8}", "direction", "queries", "MR", "MRR")?;
        for (k, _) in &self.combined.hits_at {
            write!(f, " {:>8}", format!("hits@{k}"))?;
        }
        writeln!(f)?;
        for (name, m) in [
            ("tail", &self.tail),
            ("head", &self.head),
            ("combined", &self.combined),
            ("combined-macro", &self.combined_macro),
        ] {
            write!(f, "{name:<16} {:>8} {:>10.2} {:>8.4}", m.query_count, m.mean_rank, m.mrr)?;
            for (_, v) in &m.hits_at {
                write!(f, " {v:>8.4}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
