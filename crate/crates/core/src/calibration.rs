//! Post-hoc application of an edit operator to embedding matrices.

use std::borrow::Cow;

use crate::error::{check_dim, Error, Result};
use crate::matrix::EmbeddingMatrix;
use crate::solver::{EditOperator, EditSide};

/// Returns `x · W` (accumulated in `f64`, stored as `f32`). Ids and shape are
/// preserved; rows are not renormalized.
pub fn apply_operator(op: &EditOperator, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    check_dim("embedding dimension vs operator", op.dim(), x.dim())?;
    let d = x.dim();
    // column-major storage of the transpose is the row-major product
    let product = (x.to_f64() * op.weights()).transpose();
    let mut out = Vec::with_capacity(x.as_slice().len());
    for (idx, &v) in product.as_slice().iter().enumerate() {
        let v = v as f32;
        if !v.is_finite() {
            return Err(Error::NonFiniteEntry {
                row: idx / d,
                col: idx % d,
            });
        }
        out.push(v);
    }
    Ok(EmbeddingMatrix::from_parts_unchecked(
        x.ids().to_vec(),
        d,
        out,
    ))
}

/// Inputs to [`calibrate`].
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRequest<'a> {
    pub operator: &'a EditOperator,
    pub queries: Option<&'a EmbeddingMatrix>,
    pub corpus: Option<&'a EmbeddingMatrix>,
    pub side: EditSide,
}

/// Calibrated outputs. A corpus left untouched by [`EditSide::QueriesOnly`] is borrowed, not copied.
#[derive(Debug)]
pub struct Calibrated<'a> {
    pub queries: Option<EmbeddingMatrix>,
    pub corpus: Option<Cow<'a, EmbeddingMatrix>>,
}

pub fn calibrate<'a>(req: &CalibrationRequest<'a>) -> Result<Calibrated<'a>> {
    if req.queries.is_none() && req.corpus.is_none() {
        return Err(Error::NothingToCalibrate);
    }
    for m in [req.queries, req.corpus].into_iter().flatten() {
        check_dim(
            "embedding dimension vs operator",
            req.operator.dim(),
            m.dim(),
        )?;
    }
    let queries = req
        .queries
        .map(|q| apply_operator(req.operator, q))
        .transpose()?;
    let corpus = match (req.corpus, req.side) {
        (None, _) => None,
        (Some(c), EditSide::QueriesOnly) => Some(Cow::Borrowed(c)),
        (Some(c), EditSide::QueriesAndAnswers) => {
            Some(Cow::Owned(apply_operator(req.operator, c)?))
        }
    };
    Ok(Calibrated { queries, corpus })
}
