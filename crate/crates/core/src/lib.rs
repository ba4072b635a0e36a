//! Closed-form embedding calibration for dense retrieval.
//!
//! A linear edit operator `W = I + ΔW` is fitted in closed form from
//! question/answer embedding pairs of a target domain and applied post hoc
//! to query and corpus embeddings (`x' = x · W`). No model is retrained:
//! fitting costs `O(n d² + d³)` for `n` pairs of dimension `d`.
//!
//! - [`solver`]: Gram statistics, the closed-form solve, and a
//!   gradient-descent oracle for verification.
//! - [`calibration`]: applying an operator to embedding matrices.
//! - [`eval`]: exact top-k retrieval, nDCG@k, MAP@k and Recall@k.
//! - [`io`]: the DRED1 matrix format, JSONL qrels/alignments, and the
//!   per-domain operator store.
//! - [`bench`]: seeded synthetic domains, timing, λ sweeps and data scaling.
//! - [`cli`]: the `dredit` command line.

pub mod bench;
pub mod calibration;
pub mod cli;
pub mod error;
pub mod eval;
pub mod io;
pub mod matrix;
pub mod pipeline;
pub mod solver;

pub use calibration::{apply_operator, calibrate, Calibrated, CalibrationRequest};
pub use error::{Error, ErrorKind, Result};
pub use eval::{evaluate_run, top_k, MetricsReport, QrelSet, RankedList, Similarity};
pub use matrix::{EmbeddingMatrix, QaPairSet};
pub use solver::{
    accumulate_grams, fit, gd_oracle_solve, normal_equation_residual, objective_value,
    solve_edit_operator, EditOperator, EditSide, GdConfig, GramSummary, OperatorMeta, Ridge,
    SolverConfig,
};
