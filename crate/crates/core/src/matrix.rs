//! Row-major embedding containers.
//!
//! Embeddings are stored one item per row in single precision. Every
//! reduction over them (Gram products, scoring, calibration) widens to
//! `f64` first.

use std::collections::{HashMap, HashSet};

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::io::PairAlignment;

/// Dense `rows × dim` matrix of item embeddings with stable, unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    ids: Vec<String>,
    dim: usize,
    data: Vec<f32>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from ids and a row-major payload.
    ///
    /// Rejects duplicate ids, ids containing line breaks, a payload whose
    /// length is not `ids.len() * dim`, and non-finite entries.
    pub fn new(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimension must be >= 1".into(),
            ));
        }
        check_dim("embedding payload length", ids.len() * dim, data.len())?;
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.contains(['\n', '\r']) {
                return Err(Error::InvalidId(id.clone()));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEntry {
                row: pos / dim,
                col: pos % dim,
            });
        }
        Ok(Self { ids, dim, data })
    }

    /// Builds a matrix whose ids are the decimal row indices `"0"`, `"1"`, ...
    pub fn with_index_ids(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimension must be >= 1".into(),
            ));
        }
        let rows = data.len() / dim;
        Self::new((0..rows).map(|i| i.to_string()).collect(), dim, data)
    }

    /// Builds a matrix from `f64` rows, rounding to single precision.
    pub fn from_f64_rows(ids: Vec<String>, rows: &DMatrix<f64>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.nrows() * rows.ncols());
        for r in 0..rows.nrows() {
            data.extend(rows.row(r).iter().map(|&v| v as f32));
        }
        Self::new(ids, rows.ncols(), data)
    }

    pub(crate) fn from_parts_unchecked(ids: Vec<String>, dim: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(ids.len() * dim, data.len());
        Self { ids, dim, data }
    }

    pub fn rows(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.data.chunks_exact(self.dim))
    }

    /// Map from id to row index.
    pub fn index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Widened copy as an `f64` matrix with the same row layout.
    pub fn to_f64(&self) -> DMatrix<f64> {
        rows_to_f64(self.rows(), self.dim, &self.data)
    }

    pub fn into_parts(self) -> (Vec<String>, usize, Vec<f32>) {
        (self.ids, self.dim, self.data)
    }
}

pub(crate) fn rows_to_f64(rows: usize, dim: usize, data: &[f32]) -> DMatrix<f64> {
    DMatrix::from_fn(rows, dim, |r, c| f64::from(data[r * dim + c]))
}

/// Aligned question/answer embedding rows; row `i` of each side is one pair.
///
/// Unlike [`EmbeddingMatrix`] this carries no ids, since one-to-many
/// alignments repeat the same question or answer across pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct QaPairSet {
    dim: usize,
    questions: Vec<f32>,
    answers: Vec<f32>,
}

impl QaPairSet {
    /// Builds a pair set from two row-major payloads of equal shape.
    pub fn from_rows(dim: usize, questions: Vec<f32>, answers: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig(
                "embedding dimension must be >= 1".into(),
            ));
        }
        if questions.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                context: "question payload length",
                expected: questions.len() / dim * dim,
                found: questions.len(),
            });
        }
        check_dim("answer payload length", questions.len(), answers.len())?;
        for data in [&questions, &answers] {
            if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFiniteEntry {
                    row: pos / dim,
                    col: pos % dim,
                });
            }
        }
        Ok(Self {
            dim,
            questions,
            answers,
        })
    }

    /// Pairs row `i` of `questions` with row `i` of `answers`.
    pub fn from_matrices(questions: &EmbeddingMatrix, answers: &EmbeddingMatrix) -> Result<Self> {
        check_dim("question/answer dimension", questions.dim(), answers.dim())?;
        check_dim(
            "question/answer row count",
            questions.rows(),
            answers.rows(),
        )?;
        Ok(Self {
            dim: questions.dim(),
            questions: questions.as_slice().to_vec(),
            answers: answers.as_slice().to_vec(),
        })
    }

    /// Gathers pairs listed in an alignment file, in file order.
    pub fn from_alignment(
        questions: &EmbeddingMatrix,
        answers: &EmbeddingMatrix,
        alignment: &PairAlignment,
    ) -> Result<Self> {
        check_dim("question/answer dimension", questions.dim(), answers.dim())?;
        let q_index = questions.index();
        let a_index = answers.index();
        let dim = questions.dim();
        let mut q = Vec::with_capacity(alignment.len() * dim);
        let mut a = Vec::with_capacity(alignment.len() * dim);
        for (qid, did) in alignment.iter() {
            let qi = *q_index.get(qid).ok_or_else(|| Error::UnknownId {
                kind: "question",
                id: qid.to_string(),
            })?;
            let ai = *a_index.get(did).ok_or_else(|| Error::UnknownId {
                kind: "answer",
                id: did.to_string(),
            })?;
            q.extend_from_slice(questions.row(qi));
            a.extend_from_slice(answers.row(ai));
        }
        Ok(Self {
            dim,
            questions: q,
            answers: a,
        })
    }

    pub fn len(&self) -> usize {
        self.questions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn question(&self, i: usize) -> &[f32] {
        &self.questions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn answer(&self, i: usize) -> &[f32] {
        &self.answers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn questions(&self) -> &[f32] {
        &self.questions
    }

    pub fn answers(&self) -> &[f32] {
        &self.answers
    }

    pub fn questions_f64(&self) -> DMatrix<f64> {
        rows_to_f64(self.len(), self.dim, &self.questions)
    }

    pub fn answers_f64(&self) -> DMatrix<f64> {
        rows_to_f64(self.len(), self.dim, &self.answers)
    }

    /// New pair set made of the given pair indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut q = Vec::with_capacity(indices.len() * self.dim);
        let mut a = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            q.extend_from_slice(self.question(i));
            a.extend_from_slice(self.answer(i));
        }
        Self {
            dim: self.dim,
            questions: q,
            answers: a,
        }
    }
}
