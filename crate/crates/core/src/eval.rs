//! Rank-based link-prediction metrics.
//!
//! Every evaluated triple contributes two directions: tail prediction with
//! `(h, r, ?)` and head prediction through the reciprocal `(t, r⁻¹, ?)`.
//! Ties are pessimistic: a candidate scoring equal to the target counts as
//! ranked above it.

use std::collections::HashSet;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Fold, KnowledgeGraph, KnownTrue, Triple};
use crate::models::Model;

/// Number of rank positions tracked by the hits-per-rank histogram.
pub const HISTOGRAM_RANKS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    Raw,
    Filtered,
}

impl std::str::FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(RankMode::Raw),
            "filtered" => Ok(RankMode::Filtered),
            other => Err(Error::InvalidArgument(format!("unknown rank mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Tail,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankRecord {
    pub triple: Triple,
    pub direction: Direction,
    pub raw_rank: usize,
    pub filtered_rank: usize,
}

impl RankRecord {
    pub fn rank(&self, mode: RankMode) -> usize {
        match mode {
            RankMode::Raw => self.raw_rank,
            RankMode::Filtered => self.filtered_rank,
        }
    }
}

/// `1 + #{c ≠ target : score_c ≥ score_target}`, skipping members of
/// `known` other than the target in filtered mode.
pub fn rank_of_target(
    scores: &[f64],
    target: EntityId,
    known: Option<&HashSet<EntityId>>,
    mode: RankMode,
) -> Result<usize> {
    let Some(&s) = scores.get(target) else {
        return Err(Error::IndexOutOfRange(format!(
            "target {target} outside 0..{}",
            scores.len()
        )));
    };
    if s.is_nan() {
        return Err(Error::Runtime(format!("NaN score for target {target}")));
    }
    let mut rank = 1;
    for (c, &v) in scores.iter().enumerate() {
        if c == target || v < s {
            continue;
        }
        if mode == RankMode::Filtered && known.is_some_and(|k| k.contains(&c)) {
            continue;
        }
        rank += 1;
    }
    Ok(rank)
}

pub fn hits_at(ranks: &[usize], n: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks to aggregate".into()));
    }
    Ok(ranks.iter().filter(|&&r| r <= n).count() as f64 / ranks.len() as f64)
}

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::InvalidArgument("no ranks to aggregate".into()));
    }
    Ok(ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub relation: String,
    /// Evaluated directions (two per triple).
    pub n: usize,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub mrr: f64,
    /// Hits at rank positions 1..=10.
    pub rank_histogram: Vec<usize>,
}

impl RelationMetrics {
    fn from_ranks(relation: String, ranks: &[usize]) -> Result<Self> {
        let mut rank_histogram = vec![0; HISTOGRAM_RANKS];
        for &r in ranks {
            if r <= HISTOGRAM_RANKS {
                rank_histogram[r - 1] += 1;
            }
        }
        Ok(Self {
            relation,
            n: ranks.len(),
            hits1: hits_at(ranks, 1)?,
            hits3: hits_at(ranks, 3)?,
            hits10: hits_at(ranks, 10)?,
            mrr: mrr(ranks)?,
            rank_histogram,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: RankMode,
    pub fold: Fold,
    pub overall: RelationMetrics,
    /// Per original relation, in relation-id order; relations absent from
    /// the fold are omitted.
    pub per_relation: Vec<RelationMetrics>,
}

impl MetricsReport {
    pub fn from_records(
        records: &[RankRecord],
        kg: &KnowledgeGraph,
        fold: Fold,
        mode: RankMode,
    ) -> Result<Self> {
        let all: Vec<usize> = records.iter().map(|r| r.rank(mode)).collect();
        let overall = RelationMetrics::from_ranks("all".into(), &all)?;
        let mut per_relation = Vec::new();
        for rel in 0..kg.n_base_relations() {
            let ranks: Vec<usize> =
                records.iter().filter(|r| r.triple.r == rel).map(|r| r.rank(mode)).collect();
            if ranks.is_empty() {
                continue;
            }
            let label = kg.relations().label(rel).unwrap_or_default().to_owned();
            per_relation.push(RelationMetrics::from_ranks(label, &ranks)?);
        }
        Ok(Self { mode, fold, overall, per_relation })
    }

    /// `relation,hits1,hits3,hits10,mrr,n`
    pub fn relation_csv(&self) -> String {
        let mut s = String::from("relation,hits1,hits3,hits10,mrr,n\n");
        for m in self.per_relation.iter().chain(std::iter::once(&self.overall)) {
            let _ = writeln!(s, "{},{},{},{},{},{}", m.relation, m.hits1, m.hits3, m.hits10, m.mrr, m.n);
        }
        s
    }

    /// `relation,rank,hits` for ranks 1..=10.
    pub fn rank_hits_csv(&self) -> String {
        let mut s = String::from("relation,rank,hits\n");
        for m in self.per_relation.iter().chain(std::iter::once(&self.overall)) {
            for (i, c) in m.rank_histogram.iter().enumerate() {
                let _ = writeln!(s, "{},{},{}", m.relation, i + 1, c);
            }
        }
        s
    }
}

/// Checks that a model was trained over this graph's vocabulary sizes.
pub fn check_compatible(model: &Model, kg: &KnowledgeGraph) -> Result<()> {
    if model.n_entities() != kg.n_entities() || model.n_relations() != kg.n_model_relations() {
        return Err(Error::Consistency(format!(
            "model has {} entities / {} relations but the graph needs {} / {}",
            model.n_entities(),
            model.n_relations(),
            kg.n_entities(),
            kg.n_model_relations()
        )));
    }
    Ok(())
}

/// Raw and filtered ranks of both directions for every triple in `fold`.
pub fn rank_fold(
    model: &Model,
    kg: &KnowledgeGraph,
    known: &KnownTrue,
    fold: Fold,
    threads: usize,
) -> Result<Vec<RankRecord>> {
    check_compatible(model, kg)?;
    let triples = kg.fold(fold);
    let rank_one = |t: &Triple| -> Result<[RankRecord; 2]> {
        let inv = kg.reciprocal_of(t.r);
        let tail_scores = model.score_all_tails(t.h, t.r)?;
        let head_scores = model.score_all_tails(t.t, inv)?;
        let tail_known = known.tails(t.h, t.r);
        let head_known = known.tails(t.t, inv);
        Ok([
            RankRecord {
                triple: *t,
                direction: Direction::Tail,
                raw_rank: rank_of_target(&tail_scores, t.t, None, RankMode::Raw)?,
                filtered_rank: rank_of_target(&tail_scores, t.t, tail_known, RankMode::Filtered)?,
            },
            RankRecord {
                triple: *t,
                direction: Direction::Head,
                raw_rank: rank_of_target(&head_scores, t.h, None, RankMode::Raw)?,
                filtered_rank: rank_of_target(&head_scores, t.h, head_known, RankMode::Filtered)?,
            },
        ])
    };
    let pairs: Vec<[RankRecord; 2]> = if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Runtime(e.to_string()))?;
        pool.install(|| triples.par_iter().map(rank_one).collect::<Result<Vec<_>>>())?
    } else {
        triples.iter().map(rank_one).collect::<Result<Vec<_>>>()?
    };
    Ok(pairs.into_iter().flatten().collect())
}

pub fn evaluate(
    model: &Model,
    kg: &KnowledgeGraph,
    known: &KnownTrue,
    fold: Fold,
    mode: RankMode,
    threads: usize,
) -> Result<MetricsReport> {
    if kg.fold(fold).is_empty() {
        return Err(Error::InvalidArgument(format!("{fold:?} fold is empty")));
    }
    let records = rank_fold(model, kg, known, fold, threads)?;
    MetricsReport::from_records(&records, kg, fold, mode)
}

/// `Π_{i=1}^{degree} (degree + 1 − i) / (n_e − i)`, evaluated in log space.
pub fn random_top_n_probability(n_e: u64, degree: u64) -> Result<f64> {
    if degree >= n_e {
        return Err(Error::InvalidArgument(format!("degree {degree} must be below n_e {n_e}")));
    }
    let log: f64 = (1..=degree)
        .map(|i| ((degree + 1 - i) as f64).ln() - ((n_e - i) as f64).ln())
        .sum();
    Ok(log.exp())
}

/// Expected MRR when the target's rank is uniform over `1..=n`.
pub fn uniform_rank_mrr(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum::<f64>() / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn simple_ranks() {
        assert_eq!(rank_of_target(&[1.0, 5.0, 2.0], 1, None, RankMode::Raw).unwrap(), 1);
        assert_eq!(rank_of_target(&[3.0, 2.0, 1.0], 1, None, RankMode::Raw).unwrap(), 2);
        // Ties count against the target.
        assert_eq!(rank_of_target(&[2.0, 2.0, 2.0], 0, None, RankMode::Raw).unwrap(), 3);
        let known: HashSet<usize> = [0, 1].into_iter().collect();
        assert_eq!(rank_of_target(&[3.0, 2.0, 1.0], 1, Some(&known), RankMode::Filtered).unwrap(), 1);
        assert_eq!(rank_of_target(&[3.0, 2.0, 1.0], 1, Some(&known), RankMode::Raw).unwrap(), 2);
        assert!(rank_of_target(&[1.0], 3, None, RankMode::Raw).is_err());
    }

    fn sort_oracle(scores: &[f64], target: usize, known: &HashSet<usize>, filtered: bool) -> usize {
        let mut cands: Vec<(usize, f64)> = scores
            .iter()
            .copied()
            .enumerate()
            .filter(|(c, _)| *c == target || !filtered || !known.contains(c))
            .collect();
        // Descending score; the target goes last among equals.
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then((a.0 == target).cmp(&(b.0 == target))));
        cands.iter().position(|(c, _)| *c == target).unwrap() + 1
    }

    #[test]
    fn ranks_match_sort_oracle() {
        let mut r = crate::rng::stream(1, crate::rng::Purpose::Test, 0, 0);
        for _ in 0..1000 {
            let n = r.random_range(1..60);
            // Coarse values force ties.
            let scores: Vec<f64> = (0..n).map(|_| r.random_range(0..8) as f64).collect();
            let target = r.random_range(0..n);
            let known: HashSet<usize> = (0..n).filter(|_| r.random::<f64>() < 0.3).collect();
            for (mode, filtered) in [(RankMode::Raw, false), (RankMode::Filtered, true)] {
                let got = rank_of_target(&scores, target, Some(&known), mode).unwrap();
                assert_eq!(got, sort_oracle(&scores, target, &known, filtered));
            }
            let raw = rank_of_target(&scores, target, Some(&known), RankMode::Raw).unwrap();
            let filt = rank_of_target(&scores, target, Some(&known), RankMode::Filtered).unwrap();
            assert!(filt <= raw);
        }
    }

    #[test]
    fn aggregate_metrics() {
        let ranks = [1, 4, 12];
        assert!((hits_at(&ranks, 1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((hits_at(&ranks, 3).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((hits_at(&ranks, 10).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((mrr(&ranks).unwrap() - (1.0 + 0.25 + 1.0 / 12.0) / 3.0).abs() < 1e-15);
        assert_eq!(hits_at(&[1, 1], 1).unwrap(), 1.0);
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert!(hits_at(&[], 1).is_err());
        assert!(mrr(&[]).is_err());
    }

    #[test]
    fn hits_monotone_in_n() {
        let mut r = crate::rng::stream(2, crate::rng::Purpose::Test, 0, 0);
        for _ in 0..100 {
            let ranks: Vec<usize> = (0..30).map(|_| r.random_range(1..50)).collect();
            let mut prev = 0.0;
            for n in 1..60 {
                let h = hits_at(&ranks, n).unwrap();
                assert!(h >= prev);
                prev = h;
            }
            let oracle: f64 = ranks.iter().map(|&x| 1.0 / x as f64).sum::<f64>() / 30.0;
            assert!((mrr(&ranks).unwrap() - oracle).abs() < 1e-15);
        }
    }

    #[test]
    fn random_top_n() {
        assert_eq!(random_top_n_probability(2, 1).unwrap(), 1.0);
        assert!((random_top_n_probability(11, 1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(random_top_n_probability(5, 0).unwrap(), 1.0);
        assert!(random_top_n_probability(5, 5).is_err());
        let direct: f64 = (1..=20).map(|i| (21 - i) as f64 / (19041 - i) as f64).product();
        let log = random_top_n_probability(19041, 20).unwrap();
        assert!(((log - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn uniform_mrr() {
        assert_eq!(uniform_rank_mrr(1), 1.0);
        assert!((uniform_rank_mrr(2) - 0.75).abs() < 1e-15);
    }
}
