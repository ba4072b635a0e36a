//! Exact top-k retrieval and trec-style ranking metrics.
//!
//! - **nDCG@k** uses linear gain `rel / log2(rank + 1)`; the ideal ranking
//!   is built from every judged grade of the query, retrieved or not.
//! - **MAP@k** averages precision at each relevant rank over `min(R, k)`.
//! - **Recall@k** is `|relevant ∩ top-k| / R`.
//!
//! `R` counts judgments with grade > 0. Queries with `R = 0` have no
//! defined score; they are skipped and excluded from the means.

use std::cmp::Ordering;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::EmbeddingMatrix;

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Dot,
    #[default]
    Cosine,
}

impl Similarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
        }
    }
}

/// Graded relevance judgments keyed by query id, then document id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QrelSet {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
    len: usize,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a judgment; returns `false` (and leaves the set unchanged) if the key already exists.
    pub fn insert(&mut self, qid: impl Into<String>, did: impl Into<String>, grade: u32) -> bool {
        match self
            .entries
            .entry(qid.into())
            .or_default()
            .entry(did.into())
        {
            Entry::Occupied(_) => false,
            Entry::Vacant(slot) => {
                slot.insert(grade);
                self.len += 1;
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn grade(&self, qid: &str, did: &str) -> u32 {
        self.entries
            .get(qid)
            .and_then(|docs| docs.get(did))
            .copied()
            .unwrap_or(0)
    }

    /// Judgments of one query, ordered by document id.
    pub fn judgments(&self, qid: &str) -> impl Iterator<Item = (&str, u32)> {
        self.entries
            .get(qid)
            .into_iter()
            .flat_map(|docs| docs.iter().map(|(d, &g)| (d.as_str(), g)))
    }

    /// Number of documents with grade > 0 for the query.
    pub fn relevant_count(&self, qid: &str) -> usize {
        self.judgments(qid).filter(|&(_, g)| g > 0).count()
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.entries
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    /// `-inf` (serialized as `null`) for zero-norm rows under cosine.
    pub score: f64,
}

/// Hits in descending score order; equal scores ordered by ascending doc id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    pub hits: Vec<Hit>,
}

fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Brute-force scorer over a fixed corpus.
#[derive(Debug)]
pub struct Searcher<'a> {
    corpus: &'a EmbeddingMatrix,
    sim: Similarity,
    norms: Vec<f64>,
}

impl<'a> Searcher<'a> {
    pub fn new(corpus: &'a EmbeddingMatrix, sim: Similarity) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let norms = match sim {
            Similarity::Dot => Vec::new(),
            Similarity::Cosine => corpus.iter_rows().map(|(_, r)| dot(r, r).sqrt()).collect(),
        };
        Ok(Self { corpus, sim, norms })
    }

    /// Score of every corpus row against `query`, in corpus order.
    pub fn scores(&self, query: &[f32]) -> Result<Vec<f64>> {
        check_dim("query dimension vs corpus", self.corpus.dim(), query.len())?;
        let scores = match self.sim {
            Similarity::Dot => self
                .corpus
                .iter_rows()
                .map(|(_, r)| dot(query, r) + 0.0)
                .collect(),
            Similarity::Cosine => {
                let qn = dot(query, query).sqrt();
                self.corpus
                    .iter_rows()
                    .zip(&self.norms)
                    .map(|((_, r), &cn)| {
                        if qn == 0.0 || cn == 0.0 {
                            f64::NEG_INFINITY
                        } else {
                            dot(query, r) / (qn * cn) + 0.0
                        }
                    })
                    .collect()
            }
        };
        Ok(scores)
    }

    pub fn search(&self, query_id: &str, query: &[f32], k: usize) -> Result<RankedList> {
        if k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        let scores = self.scores(query)?;
        let ids = self.corpus.ids();
        let order = |a: &usize, b: &usize| -> Ordering {
            scores[*b]
                .total_cmp(&scores[*a])
                .then_with(|| ids[*a].cmp(&ids[*b]))
        };
        let mut idx: Vec<usize> = (0..scores.len()).collect();
        if k < idx.len() {
            idx.select_nth_unstable_by(k - 1, order);
            idx.truncate(k);
        }
        idx.sort_unstable_by(order);
        Ok(RankedList {
            query_id: query_id.to_string(),
            hits: idx
                .into_iter()
                .map(|i| Hit {
                    doc_id: ids[i].clone(),
                    score: scores[i],
                })
                .collect(),
        })
    }
}

/// The `k` best corpus rows for one query vector.
pub fn top_k(
    query_id: &str,
    query: &[f32],
    corpus: &EmbeddingMatrix,
    k: usize,
    sim: Similarity,
) -> Result<RankedList> {
    Searcher::new(corpus, sim)?.search(query_id, query, k)
}

/// Ranked lists for every query row, in query order.
pub fn search_all(
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    k: usize,
    sim: Similarity,
) -> Result<Vec<RankedList>> {
    check_dim("query dimension vs corpus", corpus.dim(), queries.dim())?;
    let searcher = Searcher::new(corpus, sim)?;
    (0..queries.rows())
        .into_par_iter()
        .map(|i| searcher.search(queries.id(i), queries.row(i), k))
        .collect()
}

/// Discounted gain `grade / log2(rank + 1)` at 1-based `rank`.
fn discounted(grade: u32, rank: usize) -> f64 {
    f64::from(grade) / ((rank + 1) as f64).log2()
}

/// nDCG@k; `None` when the query has no relevant documents.
pub fn ndcg_at_k(ranked: &RankedList, qrels: &QrelSet, k: usize) -> Option<f64> {
    let qid = ranked.query_id.as_str();
    let mut ideal: Vec<u32> = qrels
        .judgments(qid)
        .map(|(_, g)| g)
        .filter(|&g| g > 0)
        .collect();
    if ideal.is_empty() || k == 0 {
        return None;
    }
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = ideal
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| discounted(g, i + 1))
        .sum();
    let dcg: f64 = ranked
        .hits
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, h)| discounted(qrels.grade(qid, &h.doc_id), i + 1))
        .sum();
    Some(dcg / idcg)
}

/// AP@k with binary relevance; `None` when the query has no relevant documents.
pub fn map_at_k(ranked: &RankedList, qrels: &QrelSet, k: usize) -> Option<f64> {
    let qid = ranked.query_id.as_str();
    let relevant = qrels.relevant_count(qid);
    if relevant == 0 || k == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, h) in ranked.hits.iter().take(k).enumerate() {
        if qrels.grade(qid, &h.doc_id) > 0 {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    Some(precision_sum / relevant.min(k) as f64)
}

/// Recall@k; `None` when the query has no relevant documents.
pub fn recall_at_k(ranked: &RankedList, qrels: &QrelSet, k: usize) -> Option<f64> {
    let qid = ranked.query_id.as_str();
    let relevant = qrels.relevant_count(qid);
    if relevant == 0 || k == 0 {
        return None;
    }
    let mut seen = HashSet::new();
    let found = ranked
        .hits
        .iter()
        .take(k)
        .filter(|h| qrels.grade(qid, &h.doc_id) > 0 && seen.insert(h.doc_id.as_str()))
        .count();
    Some(found as f64 / relevant as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryMetrics {
    pub ndcg: f64,
    pub map: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub k: usize,
    pub similarity: Similarity,
    pub per_query: BTreeMap<String, QueryMetrics>,
    pub means: QueryMetrics,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
}

/// Scores every query row against the corpus and aggregates the metrics.
pub fn evaluate_run(
    queries: &EmbeddingMatrix,
    corpus: &EmbeddingMatrix,
    qrels: &QrelSet,
    k: usize,
    sim: Similarity,
) -> Result<MetricsReport> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be >= 1".into()));
    }
    if qrels.is_empty() {
        return Err(Error::EmptyInput("qrels are empty"));
    }
    let ranked = search_all(queries, corpus, k, sim)?;
    let scored: Vec<(String, Option<QueryMetrics>)> = ranked
        .into_par_iter()
        .map(|list| {
            let metrics = ndcg_at_k(&list, qrels, k).map(|ndcg| QueryMetrics {
                ndcg,
                map: map_at_k(&list, qrels, k).unwrap_or(0.0),
                recall: recall_at_k(&list, qrels, k).unwrap_or(0.0),
            });
            (list.query_id, metrics)
        })
        .collect();

    let mut per_query = BTreeMap::new();
    let mut skipped = 0;
    for (qid, metrics) in scored {
        match metrics {
            Some(m) => {
                per_query.insert(qid, m);
            }
            None => skipped += 1,
        }
    }
    // Summed in query-id order so the means do not depend on scheduling.
    let mut means = QueryMetrics::default();
    for m in per_query.values() {
        means.ndcg += m.ndcg;
        means.map += m.map;
        means.recall += m.recall;
    }
    let n = per_query.len();
    if n > 0 {
        means.ndcg /= n as f64;
        means.map /= n as f64;
        means.recall /= n as f64;
    }
    Ok(MetricsReport {
        k,
        similarity: sim,
        per_query,
        means,
        evaluated_queries: n,
        skipped_queries: skipped,
    })
}
