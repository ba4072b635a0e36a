//! Reference retrieval scoring: score every document, sort everything, then count.

use std::collections::BTreeMap;

use dredit::eval::QueryMetrics;
use dredit::{EmbeddingMatrix, QrelSet, Similarity};

use super::{embeddings, TestRng};

pub fn naive_score(q: &[f32], c: &[f32], sim: Similarity) -> f64 {
    let dot: f64 = q
        .iter()
        .zip(c)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum();
    match sim {
        Similarity::Dot => dot + 0.0,
        Similarity::Cosine => {
            let nq: f64 = q
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            let nc: f64 = c
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if nq == 0.0 || nc == 0.0 {
                f64::NEG_INFINITY
            } else {
                dot / (nq * nc) + 0.0
            }
        }
    }
}

/// Full sort of the whole corpus: score descending, then doc id ascending.
pub fn naive_ranking(q: &[f32], corpus: &EmbeddingMatrix, sim: Similarity) -> Vec<(String, f64)> {
    let mut all: Vec<(String, f64)> = corpus
        .iter_rows()
        .map(|(id, row)| (id.to_string(), naive_score(q, row, sim)))
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all
}

pub fn naive_metrics(
    ranking: &[(String, f64)],
    judged: &BTreeMap<String, u32>,
    k: usize,
) -> Option<QueryMetrics> {
    let relevant = judged.values().filter(|&&g| g > 0).count();
    if relevant == 0 {
        return None;
    }
    let gain = |doc: &str| judged.get(doc).copied().unwrap_or(0);
    let mut dcg = 0.0;
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (i, (doc, _)) in ranking.iter().take(k).enumerate() {
        let g = gain(doc);
        dcg += f64::from(g) / ((i + 2) as f64).log2();
        if g > 0 {
            hits += 1;
            ap += hits as f64 / (i + 1) as f64;
        }
    }
    let mut grades: Vec<u32> = judged.values().copied().filter(|&g| g > 0).collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / ((i + 2) as f64).log2())
        .sum();
    Some(QueryMetrics {
        ndcg: dcg / idcg,
        map: ap / relevant.min(k) as f64,
        recall: hits as f64 / relevant as f64,
    })
}

/// A small random run with integer coordinates (exact ties, zero vectors) and
/// graded judgments that may name documents outside the corpus.
pub fn random_run(
    rng: &mut TestRng,
) -> (EmbeddingMatrix, EmbeddingMatrix, QrelSet, usize, Similarity) {
    let d = 1 + rng.below(5);
    let n_docs = 1 + rng.below(30);
    let n_queries = 1 + rng.below(8);
    let k = 1 + rng.below(12);
    let sim = if rng.below(2) == 0 {
        Similarity::Dot
    } else {
        Similarity::Cosine
    };
    // integer coordinates produce exact ties and the occasional zero vector
    let corpus = embeddings("doc", n_docs, d, rng.small_ints(n_docs * d, 2));
    let queries = embeddings("qry", n_queries, d, rng.small_ints(n_queries * d, 2));
    let mut qrels = QrelSet::new();
    for qi in 0..n_queries {
        for _ in 0..rng.below(5) {
            let doc = rng.below(n_docs + 2); // may name documents outside the corpus
            qrels.insert(format!("qry{qi}"), format!("doc{doc}"), rng.below(4) as u32);
        }
    }
    if qrels.is_empty() {
        qrels.insert("qry0", "doc0", 1);
    }
    (queries, corpus, qrels, k, sim)
}
