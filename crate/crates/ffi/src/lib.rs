//! C ABI for dredit.
//!
//! Conventions:
//! - Every fallible function returns a [`DreditStatus`]; results come back
//!   through out-pointers, which are written only on success.
//! - Objects are opaque handles created by `dredit_*_new`/`_read`/`_load`/
//!   `_fit`/`_apply` and released with the matching `_free` (which accepts NULL).
//! - On failure, [`dredit_last_error_message`] describes the most recent error
//!   on the calling thread.
//! - Panics never cross the boundary; they are reported as
//!   [`DreditStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dredit::io;
use dredit::{
    apply_operator, evaluate_run, fit, EditOperator, EditSide, EmbeddingMatrix, ErrorKind,
    QaPairSet, QrelSet, Ridge, Similarity, SolverConfig,
};

/// Status codes. Values 2–5 match the exit codes of the `dredit` command line.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DreditStatus {
    Ok = 0,
    /// A required pointer was NULL or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// Invalid configuration value (lambda, k, side, similarity, domain name).
    Usage = 2,
    /// Malformed or inconsistent data.
    Data = 3,
    /// The solve failed (singular system).
    Numeric = 4,
    /// Filesystem or operator-store failure.
    Io = 5,
    /// A bug inside the library (caught panic).
    Internal = 6,
}

/// Calibrate queries only.
pub const DREDIT_SIDE_Q: u32 = 0;
/// Calibrate queries and corpus.
pub const DREDIT_SIDE_QA: u32 = 1;

pub const DREDIT_SIM_DOT: u32 = 0;
pub const DREDIT_SIM_COSINE: u32 = 1;

/// Pass as `ridge` to use the automatic ridge (`1e-6 · trace / d`). Any negative value does the same.
pub const DREDIT_RIDGE_AUTO: f64 = -1.0;

/// Row-major embedding matrix with string ids.
pub struct DreditMatrix {
    inner: EmbeddingMatrix,
}

/// A fitted edit operator `W = I + ΔW`.
pub struct DreditOperator {
    inner: EditOperator,
}

/// Graded relevance judgments.
pub struct DreditQrels {
    inner: QrelSet,
}

/// Summary of an operator's metadata.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DreditOperatorInfo {
    pub dim: usize,
    pub n_pairs: usize,
    pub lambda: f64,
    /// Absolute ridge added to the system diagonal.
    pub ridge: f64,
    /// Frobenius norm of `ΔW`.
    pub delta_norm: f64,
    /// `DREDIT_SIDE_Q` or `DREDIT_SIDE_QA`.
    pub edit_side: u32,
    /// CRC-32 of the little-endian binary64 weight payload.
    pub payload_checksum: u32,
}

/// Mean metrics over queries with at least one relevant document.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct DreditMetrics {
    pub k: usize,
    pub ndcg: f64,
    pub map: f64,
    pub recall: f64,
    pub evaluated_queries: usize,
    pub skipped_queries: usize,
}

enum FfiError {
    Core(dredit::Error),
    Argument(String),
}

impl From<dredit::Error> for FfiError {
    fn from(e: dredit::Error) -> Self {
        FfiError::Core(e)
    }
}

type FfiResult<T> = Result<T, FfiError>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

fn status_for(err: &FfiError) -> DreditStatus {
    match err {
        FfiError::Argument(_) => DreditStatus::InvalidArgument,
        FfiError::Core(e) => match e.kind() {
            ErrorKind::Usage => DreditStatus::Usage,
            ErrorKind::Data => DreditStatus::Data,
            ErrorKind::Numeric => DreditStatus::Numeric,
            ErrorKind::Io => DreditStatus::Io,
        },
    }
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> FfiResult<()>) -> DreditStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DreditStatus::Ok,
        Ok(Err(err)) => {
            let status = status_for(&err);
            set_last_error(match err {
                FfiError::Core(e) => e.to_string(),
                FfiError::Argument(m) => m,
            });
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal error: {msg}"));
            DreditStatus::Internal
        }
    }
}

fn arg<'a, T>(ptr: *const T, name: &str) -> FfiResult<&'a T> {
    // SAFETY: the caller guarantees that non-NULL handles are live and were
    // produced by this library.
    unsafe { ptr.as_ref() }.ok_or_else(|| FfiError::Argument(format!("{name} is NULL")))
}

fn out<'a, T>(ptr: *mut T, name: &str) -> FfiResult<&'a mut T> {
    // SAFETY: the caller guarantees a non-NULL out-pointer is valid for writes.
    unsafe { ptr.as_mut() }.ok_or_else(|| FfiError::Argument(format!("{name} is NULL")))
}

fn string(ptr: *const c_char, name: &str) -> FfiResult<String> {
    if ptr.is_null() {
        return Err(FfiError::Argument(format!("{name} is NULL")));
    }
    // SAFETY: non-NULL and NUL-terminated per the API contract.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map(str::to_string)
        .map_err(|_| FfiError::Argument(format!("{name} is not valid UTF-8")))
}

fn path(ptr: *const c_char, name: &str) -> FfiResult<PathBuf> {
    string(ptr, name).map(PathBuf::from)
}

fn side(code: u32) -> FfiResult<EditSide> {
    match code {
        DREDIT_SIDE_Q => Ok(EditSide::QueriesOnly),
        DREDIT_SIDE_QA => Ok(EditSide::QueriesAndAnswers),
        other => Err(dredit::Error::InvalidConfig(format!("unknown edit side {other}")).into()),
    }
}

fn similarity(code: u32) -> FfiResult<Similarity> {
    match code {
        DREDIT_SIM_DOT => Ok(Similarity::Dot),
        DREDIT_SIM_COSINE => Ok(Similarity::Cosine),
        other => Err(dredit::Error::InvalidConfig(format!("unknown similarity {other}")).into()),
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Frees a handle created by this library. NULL is a no-op.
fn release<T>(ptr: *mut T) {
    if !ptr.is_null() {
        // SAFETY: the pointer came from `boxed` and is released exactly once.
        drop(unsafe { Box::from_raw(ptr) });
    }
}

/// Message for the last failed call on this thread, or NULL if none.
/// The string stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dredit_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(std::ptr::null(), |s| s.as_ptr())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dredit_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies `rows × dim` row-major values into a new matrix.
///
/// `ids` may be NULL (rows are named "0", "1", ...) or point to `rows`
/// NUL-terminated unique strings.
///
/// # Safety
/// `data` must point to `rows * dim` floats; `ids`, if non-NULL, to `rows` valid C strings.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_new(
    rows: usize,
    dim: usize,
    data: *const f32,
    ids: *const *const c_char,
    out_matrix: *mut *mut DreditMatrix,
) -> DreditStatus {
    guard(|| {
        let out_matrix = out(out_matrix, "out_matrix")?;
        let len = rows
            .checked_mul(dim)
            .ok_or_else(|| FfiError::Argument("rows * dim overflows".into()))?;
        let values = if len == 0 {
            Vec::new()
        } else {
            arg(data, "data")?;
            // SAFETY: caller guarantees `len` readable floats.
            unsafe { std::slice::from_raw_parts(data, len) }.to_vec()
        };
        let matrix = if ids.is_null() {
            EmbeddingMatrix::with_index_ids(dim, values)?
        } else {
            // SAFETY: caller guarantees `rows` string pointers.
            let raw = unsafe { std::slice::from_raw_parts(ids, rows) };
            let names = raw
                .iter()
                .enumerate()
                .map(|(i, &p)| string(p, &format!("ids[{i}]")))
                .collect::<FfiResult<Vec<_>>>()?;
            EmbeddingMatrix::new(names, dim, values)?
        };
        *out_matrix = boxed(DreditMatrix { inner: matrix });
        Ok(())
    })
}

/// Reads a DRED1 matrix (and its `.ids` sidecar, if present).
///
/// # Safety
/// `file` must be a valid C string; `out_matrix` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_read(
    file: *const c_char,
    out_matrix: *mut *mut DreditMatrix,
) -> DreditStatus {
    guard(|| {
        let out_matrix = out(out_matrix, "out_matrix")?;
        let matrix = io::read_matrix(&path(file, "file")?)?;
        *out_matrix = boxed(DreditMatrix { inner: matrix });
        Ok(())
    })
}

/// Writes a DRED1 matrix and its `.ids` sidecar atomically.
///
/// # Safety
/// `matrix` must be a live handle and `file` a valid C string.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_write(
    matrix: *const DreditMatrix,
    file: *const c_char,
) -> DreditStatus {
    guard(|| {
        let matrix = arg(matrix, "matrix")?;
        io::write_matrix(&path(file, "file")?, &matrix.inner)?;
        Ok(())
    })
}

/// Number of rows; 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_rows(matrix: *const DreditMatrix) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.inner.rows())
}

/// Row dimension; 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_dim(matrix: *const DreditMatrix) -> usize {
    unsafe { matrix.as_ref() }.map_or(0, |m| m.inner.dim())
}

/// Borrowed pointer to the row-major values, valid until the matrix is freed; NULL for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_data(matrix: *const DreditMatrix) -> *const f32 {
    unsafe { matrix.as_ref() }.map_or(std::ptr::null(), |m| m.inner.as_slice().as_ptr())
}

/// # Safety
/// `matrix` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dredit_matrix_free(matrix: *mut DreditMatrix) {
    release(matrix);
}

/// Fits an operator from row-aligned question/answer matrices (row `i` of each is pair `i`).
///
/// `ridge` is an absolute diagonal term, or negative for the automatic ridge.
/// `edit_side` is recorded in the operator metadata.
///
/// # Safety
/// Handles must be live; `out_operator` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_fit(
    questions: *const DreditMatrix,
    answers: *const DreditMatrix,
    lambda: f64,
    ridge: f64,
    edit_side: u32,
    out_operator: *mut *mut DreditOperator,
) -> DreditStatus {
    guard(|| {
        let out_operator = out(out_operator, "out_operator")?;
        let questions = arg(questions, "questions")?;
        let answers = arg(answers, "answers")?;
        let ridge = if ridge < 0.0 {
            Ridge::Auto
        } else {
            Ridge::Fixed(ridge)
        };
        let cfg = SolverConfig::new(lambda)
            .with_ridge(ridge)
            .with_side(side(edit_side)?);
        let pairs = QaPairSet::from_matrices(&questions.inner, &answers.inner)?;
        let op = fit(&pairs, &cfg)?;
        *out_operator = boxed(DreditOperator { inner: op });
        Ok(())
    })
}

/// # Safety
/// `operator` must be a live handle and `info` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_operator_info(
    operator: *const DreditOperator,
    info: *mut DreditOperatorInfo,
) -> DreditStatus {
    guard(|| {
        let op = &arg(operator, "operator")?.inner;
        let meta = op.meta();
        *out(info, "info")? = DreditOperatorInfo {
            dim: meta.d,
            n_pairs: meta.n_pairs,
            lambda: meta.lambda,
            ridge: meta.ridge,
            delta_norm: op.delta_norm(),
            edit_side: match meta.edit_side {
                EditSide::QueriesOnly => DREDIT_SIDE_Q,
                EditSide::QueriesAndAnswers => DREDIT_SIDE_QA,
            },
            payload_checksum: meta.payload_checksum,
        };
        Ok(())
    })
}

/// Copies the full weight matrix `W` (row-major, `dim × dim`) into `out_weights`.
/// `len` must be at least `dim * dim`.
///
/// # Safety
/// `out_weights` must be valid for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dredit_operator_weights(
    operator: *const DreditOperator,
    out_weights: *mut f64,
    len: usize,
) -> DreditStatus {
    guard(|| {
        let w = arg(operator, "operator")?.inner.weights();
        let d = w.nrows();
        if len < d * d {
            return Err(FfiError::Argument(format!(
                "buffer holds {len} values, need {}",
                d * d
            )));
        }
        out(out_weights, "out_weights")?;
        // SAFETY: checked non-NULL; caller guarantees `len` writable doubles.
        let dst = unsafe { std::slice::from_raw_parts_mut(out_weights, len) };
        for r in 0..d {
            for c in 0..d {
                dst[r * d + c] = w[(r, c)];
            }
        }
        Ok(())
    })
}

/// Saves under `<store>/<domain>/`. Fails with `Io` if the domain exists and `force` is 0.
///
/// # Safety
/// Strings must be valid C strings; `operator` a live handle.
#[no_mangle]
pub unsafe extern "C" fn dredit_operator_save(
    store: *const c_char,
    domain: *const c_char,
    operator: *const DreditOperator,
    force: bool,
) -> DreditStatus {
    guard(|| {
        let op = arg(operator, "operator")?;
        io::save_operator(
            &path(store, "store")?,
            &string(domain, "domain")?,
            &op.inner,
            force,
        )?;
        Ok(())
    })
}

/// Loads and checksum-verifies a stored operator.
///
/// # Safety
/// Strings must be valid C strings; `out_operator` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_operator_load(
    store: *const c_char,
    domain: *const c_char,
    out_operator: *mut *mut DreditOperator,
) -> DreditStatus {
    guard(|| {
        let out_operator = out(out_operator, "out_operator")?;
        let op = io::load_operator(&path(store, "store")?, &string(domain, "domain")?)?;
        *out_operator = boxed(DreditOperator { inner: op });
        Ok(())
    })
}

/// # Safety
/// `operator` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dredit_operator_free(operator: *mut DreditOperator) {
    release(operator);
}

/// Returns a new matrix `x · W` with the same ids.
///
/// # Safety
/// Handles must be live; `out_matrix` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_apply(
    operator: *const DreditOperator,
    matrix: *const DreditMatrix,
    out_matrix: *mut *mut DreditMatrix,
) -> DreditStatus {
    guard(|| {
        let out_matrix = out(out_matrix, "out_matrix")?;
        let op = arg(operator, "operator")?;
        let x = arg(matrix, "matrix")?;
        let y = apply_operator(&op.inner, &x.inner)?;
        *out_matrix = boxed(DreditMatrix { inner: y });
        Ok(())
    })
}

/// Reads JSONL judgments `{"qid", "did", "rel"}`.
///
/// # Safety
/// `file` must be a valid C string; `out_qrels` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_qrels_read(
    file: *const c_char,
    out_qrels: *mut *mut DreditQrels,
) -> DreditStatus {
    guard(|| {
        let out_qrels = out(out_qrels, "out_qrels")?;
        let qrels = io::read_qrels(&path(file, "file")?)?;
        *out_qrels = boxed(DreditQrels { inner: qrels });
        Ok(())
    })
}

/// # Safety
/// `qrels` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dredit_qrels_free(qrels: *mut DreditQrels) {
    release(qrels);
}

/// Exact top-`k` retrieval of every query against the corpus, scored against `qrels`.
///
/// # Safety
/// Handles must be live; `out_metrics` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dredit_evaluate(
    queries: *const DreditMatrix,
    corpus: *const DreditMatrix,
    qrels: *const DreditQrels,
    k: usize,
    sim: u32,
    out_metrics: *mut DreditMetrics,
) -> DreditStatus {
    guard(|| {
        let out_metrics = out(out_metrics, "out_metrics")?;
        let report = evaluate_run(
            &arg(queries, "queries")?.inner,
            &arg(corpus, "corpus")?.inner,
            &arg(qrels, "qrels")?.inner,
            k,
            similarity(sim)?,
        )?;
        *out_metrics = DreditMetrics {
            k: report.k,
            ndcg: report.means.ndcg,
            map: report.means.map,
            recall: report.means.recall,
            evaluated_queries: report.evaluated_queries,
            skipped_queries: report.skipped_queries,
        };
        Ok(())
    })
}
