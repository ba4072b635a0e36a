//! Fit → calibrate → evaluate composition shared by the CLI and the bench harness.

use serde::Serialize;

use crate::calibration::{calibrate, CalibrationRequest};
use crate::error::Result;
use crate::eval::{evaluate_run, MetricsReport, QrelSet, Similarity};
use crate::matrix::{EmbeddingMatrix, QaPairSet};
use crate::solver::{fit, EditOperator, SolverConfig};

/// Held-out queries, the corpus they search, and their judgments.
#[derive(Debug, Clone)]
pub struct TestBundle {
    pub queries: EmbeddingMatrix,
    pub corpus: EmbeddingMatrix,
    pub qrels: QrelSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSettings {
    pub k: usize,
    pub similarity: Similarity,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            k: 10,
            similarity: Similarity::Cosine,
        }
    }
}

pub fn evaluate_uncalibrated(bundle: &TestBundle, eval: &EvalSettings) -> Result<MetricsReport> {
    evaluate_run(
        &bundle.queries,
        &bundle.corpus,
        &bundle.qrels,
        eval.k,
        eval.similarity,
    )
}

/// Calibrates the bundle with `op` (honouring the operator's edit side) and evaluates it.
pub fn evaluate_calibrated(
    op: &EditOperator,
    bundle: &TestBundle,
    eval: &EvalSettings,
) -> Result<MetricsReport> {
    let out = calibrate(&CalibrationRequest {
        operator: op,
        queries: Some(&bundle.queries),
        corpus: Some(&bundle.corpus),
        side: op.meta().edit_side,
    })?;
    let queries = out.queries.expect("queries were supplied");
    let corpus = out.corpus.expect("corpus was supplied");
    evaluate_run(&queries, &corpus, &bundle.qrels, eval.k, eval.similarity)
}

pub fn fit_and_evaluate(
    pairs: &QaPairSet,
    bundle: &TestBundle,
    solver: &SolverConfig,
    eval: &EvalSettings,
) -> Result<(EditOperator, MetricsReport)> {
    let op = fit(pairs, solver)?;
    let report = evaluate_calibrated(&op, bundle, eval)?;
    Ok((op, report))
}
