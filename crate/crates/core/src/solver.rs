//! Closed-form edit operator.
//!
//! Operators act on row vectors from the right: a calibrated embedding is
//! `x' = x · W` with `W = I + ΔW`. For a pair set with question rows `x_q`
//! and answer rows `x_a` the operator minimises
//!
//! ```text
//! Σ ‖x_q (I + ΔW) − x_a‖² + λ Σ ‖x_a ΔW‖²
//! ```
//!
//! whose normal equations are `S ΔW = (C − Q)ᵀ` with
//! `Q = Σ x_qᵀ x_q`, `A = Σ x_aᵀ x_a`, `C = Σ x_aᵀ x_q` and `S = λA + Q`.
//! `S` is symmetric positive semidefinite; a ridge term makes it definite and
//! the system is solved with a Cholesky factorization.
//!
//! [`gd_oracle_solve`] minimises the same objective by full-batch gradient
//! descent over the raw pairs. It exists to cross-check the closed form and
//! as the timing baseline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::matrix::QaPairSet;

/// Which embeddings an operator is applied to at calibration time.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
pub enum EditSide {
    /// Calibrate queries only, leave the corpus untouched.
    #[serde(rename = "q")]
    #[value(name = "q")]
    QueriesOnly,
    /// Calibrate both queries and corpus.
    #[default]
    #[serde(rename = "qa")]
    #[value(name = "qa")]
    QueriesAndAnswers,
}

impl EditSide {
    pub fn as_str(self) -> &'static str {
        match self {
            EditSide::QueriesOnly => "q",
            EditSide::QueriesAndAnswers => "qa",
        }
    }
}

/// Tikhonov term added to the diagonal of the system matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Ridge {
    /// `1e-6 · trace(S) / d`.
    #[default]
    Auto,
    Fixed(f64),
}

/// Relative size of the automatic ridge.
pub const AUTO_RIDGE_SCALE: f64 = 1e-6;

impl Ridge {
    /// Absolute ridge value for a system matrix (before the ridge is added).
    pub fn resolve(self, system: &DMatrix<f64>) -> f64 {
        match self {
            Ridge::Auto => AUTO_RIDGE_SCALE * system.trace() / system.nrows() as f64,
            Ridge::Fixed(r) => r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Weight of the answer-invariance term.
    pub lambda: f64,
    pub ridge: Ridge,
    /// Recorded into operator metadata; consumed by calibration.
    pub edit_side: EditSide,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            ridge: Ridge::Auto,
            edit_side: EditSide::QueriesAndAnswers,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn with_ridge(mut self, ridge: Ridge) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_side(mut self, side: EditSide) -> Self {
        self.edit_side = side;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a positive finite number, got {}",
                self.lambda
            )));
        }
        if let Ridge::Fixed(r) = self.ridge {
            if !(r.is_finite() && r >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "ridge must be a nonnegative finite number, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Second-moment statistics of a pair set, accumulated in double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct GramSummary {
    /// `Σ x_qᵀ x_q`
    pub q_gram: DMatrix<f64>,
    /// `Σ x_aᵀ x_a`
    pub a_gram: DMatrix<f64>,
    /// `Σ x_aᵀ x_q`; entry `(i, j)` is `Σ x_a[i] · x_q[j]`.
    pub cross: DMatrix<f64>,
    pub n: usize,
}

impl GramSummary {
    pub fn dim(&self) -> usize {
        self.q_gram.nrows()
    }

    /// `λA + Q`, without ridge.
    pub fn system(&self, lambda: f64) -> DMatrix<f64> {
        &self.a_gram * lambda + &self.q_gram
    }

    /// `C − Q`
    pub fn numerator(&self) -> DMatrix<f64> {
        &self.cross - &self.q_gram
    }

    fn check(&self) -> Result<()> {
        let d = self.q_gram.nrows();
        for (ctx, m) in [
            ("q_gram shape", &self.q_gram),
            ("a_gram shape", &self.a_gram),
            ("cross shape", &self.cross),
        ] {
            check_dim(ctx, d, m.nrows())?;
            check_dim(ctx, d, m.ncols())?;
        }
        if d == 0 {
            return Err(Error::EmptyInput("gram summary has dimension 0"));
        }
        Ok(())
    }
}

/// Accumulates `Q`, `A` and `C` over all pairs.
pub fn accumulate_grams(pairs: &QaPairSet) -> Result<GramSummary> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair set has no rows"));
    }
    let xq = pairs.questions_f64();
    let xa = pairs.answers_f64();
    let xq_t = xq.transpose();
    let xa_t = xa.transpose();
    Ok(GramSummary {
        q_gram: &xq_t * &xq,
        a_gram: &xa_t * &xa,
        cross: &xa_t * &xq,
        n: pairs.len(),
    })
}

/// Provenance recorded with every operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorMeta {
    pub lambda: f64,
    /// Absolute ridge actually added to the diagonal.
    pub ridge: f64,
    pub n_pairs: usize,
    pub d: usize,
    pub edit_side: EditSide,
    #[serde(default)]
    pub source_dataset_id: Option<String>,
    /// Unix seconds.
    #[serde(default)]
    pub created_at: Option<u64>,
    /// CRC-32 of the little-endian `f64` row-major weight payload.
    pub payload_checksum: u32,
}

/// `W = I + ΔW` together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EditOperator {
    w: DMatrix<f64>,
    delta_norm: f64,
    meta: OperatorMeta,
}

impl EditOperator {
    /// Wraps a full weight matrix, recomputing the derived metadata fields.
    pub fn from_weights(w: DMatrix<f64>, mut meta: OperatorMeta) -> Result<Self> {
        if !w.is_square() {
            return Err(Error::DimensionMismatch {
                context: "operator must be square",
                expected: w.nrows(),
                found: w.ncols(),
            });
        }
        if let Some(pos) = w.iter().position(|v| !v.is_finite()) {
            // nalgebra storage is column-major
            return Err(Error::NonFiniteEntry {
                row: pos % w.nrows(),
                col: pos / w.nrows(),
            });
        }
        meta.d = w.nrows();
        meta.payload_checksum = crc32fast::hash(&weights_payload(&w));
        let delta_norm = delta_of(&w).norm();
        Ok(Self {
            w,
            delta_norm,
            meta,
        })
    }

    pub fn identity(d: usize) -> Self {
        let meta = OperatorMeta {
            lambda: 1.0,
            ridge: 0.0,
            n_pairs: 0,
            d,
            edit_side: EditSide::default(),
            source_dataset_id: None,
            created_at: None,
            payload_checksum: 0,
        };
        Self::from_weights(DMatrix::identity(d, d), meta).expect("identity is finite")
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    /// `W − I`
    pub fn delta(&self) -> DMatrix<f64> {
        delta_of(&self.w)
    }

    /// `‖W − I‖_F`
    pub fn delta_norm(&self) -> f64 {
        self.delta_norm
    }

    pub fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    pub fn with_source(mut self, dataset_id: Option<String>) -> Self {
        self.meta.source_dataset_id = dataset_id;
        self
    }

    pub fn with_created_at(mut self, unix_seconds: Option<u64>) -> Self {
        self.meta.created_at = unix_seconds;
        self
    }

    pub fn with_edit_side(mut self, side: EditSide) -> Self {
        self.meta.edit_side = side;
        self
    }
}

fn delta_of(w: &DMatrix<f64>) -> DMatrix<f64> {
    let mut delta = w.clone();
    for i in 0..delta.nrows() {
        delta[(i, i)] -= 1.0;
    }
    delta
}

/// Little-endian `f64` row-major bytes of a square weight matrix.
pub(crate) fn weights_payload(w: &DMatrix<f64>) -> Vec<u8> {
    let mut out = Vec::with_capacity(w.len() * 8);
    for r in 0..w.nrows() {
        for c in 0..w.ncols() {
            out.extend_from_slice(&w[(r, c)].to_le_bytes());
        }
    }
    out
}

/// Solves `(λA + Q + ridge·I) ΔW = (C − Q)ᵀ` and returns `W = I + ΔW`.
pub fn solve_edit_operator(grams: &GramSummary, cfg: &SolverConfig) -> Result<EditOperator> {
    cfg.validate()?;
    grams.check()?;
    let d = grams.dim();
    let mut system = grams.system(cfg.lambda);
    let ridge = cfg.ridge.resolve(&system);
    for i in 0..d {
        system[(i, i)] += ridge;
    }
    let max_diag = (0..d).map(|i| system[(i, i)]).fold(0.0_f64, f64::max);
    let chol = system.cholesky().ok_or(Error::SingularSystem { ridge })?;
    // Reject factorizations whose smallest pivot is at round-off level.
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    let well_conditioned = min_pivot > d as f64 * f64::EPSILON * max_diag;
    // also rejects a NaN pivot
    if !well_conditioned {
        return Err(Error::SingularSystem { ridge });
    }
    let delta = chol.solve(&grams.numerator().transpose());
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { ridge });
    }
    let w = delta + DMatrix::identity(d, d);
    let meta = OperatorMeta {
        lambda: cfg.lambda,
        ridge,
        n_pairs: grams.n,
        d,
        edit_side: cfg.edit_side,
        source_dataset_id: None,
        created_at: None,
        payload_checksum: 0,
    };
    EditOperator::from_weights(w, meta)
}

/// [`accumulate_grams`] followed by [`solve_edit_operator`].
pub fn fit(pairs: &QaPairSet, cfg: &SolverConfig) -> Result<EditOperator> {
    cfg.validate()?;
    let grams = accumulate_grams(pairs)?;
    solve_edit_operator(&grams, cfg)
}

/// `‖S ΔW − (C − Q)ᵀ‖_F / max(1, ‖C − Q‖_F)` with `S` built exactly as the solver builds it.
pub fn normal_equation_residual(
    op: &EditOperator,
    grams: &GramSummary,
    cfg: &SolverConfig,
) -> Result<f64> {
    cfg.validate()?;
    grams.check()?;
    check_dim("operator dimension", grams.dim(), op.dim())?;
    let d = grams.dim();
    let mut system = grams.system(cfg.lambda);
    let ridge = cfg.ridge.resolve(&system);
    for i in 0..d {
        system[(i, i)] += ridge;
    }
    let rhs = grams.numerator().transpose();
    let residual = &system * op.delta() - &rhs;
    Ok(residual.norm() / rhs.norm().max(1.0))
}

/// `Σ ‖x_q (I + ΔW) − x_a‖² + λ Σ ‖x_a ΔW‖²`, evaluated pair by pair.
pub fn objective_value(delta: &DMatrix<f64>, pairs: &QaPairSet, lambda: f64) -> Result<f64> {
    let d = pairs.dim();
    check_dim("delta rows", d, delta.nrows())?;
    check_dim("delta columns", d, delta.ncols())?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair set has no rows"));
    }
    let mut fit_term = 0.0;
    let mut keep_term = 0.0;
    for i in 0..pairs.len() {
        let q = pairs.question(i);
        let a = pairs.answer(i);
        for j in 0..d {
            let mut moved_q = f64::from(q[j]);
            let mut moved_a = 0.0;
            for k in 0..d {
                moved_q += f64::from(q[k]) * delta[(k, j)];
                moved_a += f64::from(a[k]) * delta[(k, j)];
            }
            let r = moved_q - f64::from(a[j]);
            fit_term += r * r;
            keep_term += moved_a * moved_a;
        }
    }
    Ok(fit_term + lambda * keep_term)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdConfig {
    pub lambda: f64,
    pub steps: usize,
    /// `None` picks `1 / (2 λ_max)` from a power-iteration estimate of `S`.
    pub step_size: Option<f64>,
}

pub const DEFAULT_GD_STEPS: usize = 20_000;
const POWER_ITERATIONS: usize = 10;
const DIVERGENCE_PATIENCE: usize = 10;

impl GdConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            steps: DEFAULT_GD_STEPS,
            step_size: None,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

/// Largest-eigenvalue estimate of `Xqᵀ Xq + λ Xaᵀ Xa` by power iteration, without forming it.
fn estimate_top_eigenvalue(
    xq: &DMatrix<f64>,
    xq_t: &DMatrix<f64>,
    xa: &DMatrix<f64>,
    xa_t: &DMatrix<f64>,
    lambda: f64,
) -> f64 {
    let d = xq.ncols();
    let mut v = DVector::from_element(d, 1.0 / (d as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let sv = xq_t * (xq * &v) + (xa_t * (xa * &v)) * lambda;
        estimate = v.dot(&sv);
        let norm = sv.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = sv / norm;
    }
    // Rayleigh quotient of the last iterate
    let sv = xq_t * (xq * &v) + (xa_t * (xa * &v)) * lambda;
    estimate.max(v.dot(&sv))
}

/// Full-batch gradient descent on [`objective_value`] from `ΔW = 0`.
pub fn gd_oracle_solve(pairs: &QaPairSet, cfg: &GdConfig) -> Result<DMatrix<f64>> {
    if cfg.steps == 0 {
        return Err(Error::InvalidConfig("steps must be >= 1".into()));
    }
    if !(cfg.lambda.is_finite() && cfg.lambda > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "lambda must be positive, got {}",
            cfg.lambda
        )));
    }
    if let Some(step) = cfg.step_size {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "step size must be positive, got {step}"
            )));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("pair set has no rows"));
    }
    let d = pairs.dim();
    let xq = pairs.questions_f64();
    let xa = pairs.answers_f64();
    let xq_t = xq.transpose();
    let xa_t = xa.transpose();
    let offset = &xq - &xa;

    let step = match cfg.step_size {
        Some(s) => s,
        None => {
            let top = estimate_top_eigenvalue(&xq, &xq_t, &xa, &xa_t, cfg.lambda);
            if top <= 0.0 {
                // all-zero data: the gradient vanishes everywhere
                return Ok(DMatrix::zeros(d, d));
            }
            0.5 / top
        }
    };

    let mut delta = DMatrix::<f64>::zeros(d, d);
    let mut previous = f64::INFINITY;
    let mut rising = 0;
    for step_index in 0..cfg.steps {
        let residual = &offset + &xq * &delta;
        let moved_answers = &xa * &delta;
        let objective = residual.norm_squared() + cfg.lambda * moved_answers.norm_squared();
        if !objective.is_finite() {
            return Err(Error::Diverged {
                step: step_index,
                reason: "objective became non-finite",
            });
        }
        if objective > previous {
            rising += 1;
            if rising >= DIVERGENCE_PATIENCE {
                return Err(Error::Diverged {
                    step: step_index,
                    reason: "objective increased for 10 consecutive steps",
                });
            }
        } else {
            rising = 0;
        }
        previous = objective;

        let gradient = (&xq_t * &residual + (&xa_t * &moved_answers) * cfg.lambda) * 2.0;
        delta -= gradient * step;
        if delta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged {
                step: step_index,
                reason: "iterate became non-finite",
            });
        }
    }
    Ok(delta)
}
