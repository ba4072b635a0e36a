#ifndef DREDIT_H
#define DREDIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Calibrate queries only.
#define DREDIT_SIDE_Q 0

// Calibrate queries and corpus.
#define DREDIT_SIDE_QA 1

#define DREDIT_SIM_DOT 0

#define DREDIT_SIM_COSINE 1

// Pass as `ridge` to use the automatic ridge (`1e-6 · trace / d`). Any negative value does the same.
#define DREDIT_RIDGE_AUTO -1.0

// Status codes. Values 2–5 match the exit codes of the `dredit` command line.
typedef enum DreditStatus {
  DREDIT_STATUS_OK = 0,
  // A required pointer was NULL or a string was not valid UTF-8.
  DREDIT_STATUS_INVALID_ARGUMENT = 1,
  // Invalid configuration value (lambda, k, side, similarity, domain name).
  DREDIT_STATUS_USAGE = 2,
  // Malformed or inconsistent data.
  DREDIT_STATUS_DATA = 3,
  // The solve failed (singular system).
  DREDIT_STATUS_NUMERIC = 4,
  // Filesystem or operator-store failure.
  DREDIT_STATUS_IO = 5,
  // A bug inside the library (caught panic).
  DREDIT_STATUS_INTERNAL = 6,
} DreditStatus;

// Row-major embedding matrix with string ids.
typedef struct DreditMatrix DreditMatrix;

// A fitted edit operator `W = I + ΔW`.
typedef struct DreditOperator DreditOperator;

// Graded relevance judgments.
typedef struct DreditQrels DreditQrels;

// Summary of an operator's metadata.
typedef struct DreditOperatorInfo {
  size_t dim;
  size_t n_pairs;
  double lambda;
  // Absolute ridge added to the system diagonal.
  double ridge;
  // Frobenius norm of `ΔW`.
  double delta_norm;
  // `DREDIT_SIDE_Q` or `DREDIT_SIDE_QA`.
  uint32_t edit_side;
  // CRC-32 of the little-endian binary64 weight payload.
  uint32_t payload_checksum;
} DreditOperatorInfo;

// Mean metrics over queries with at least one relevant document.
typedef struct DreditMetrics {
  size_t k;
  double ndcg;
  double map;
  double recall;
  size_t evaluated_queries;
  size_t skipped_queries;
} DreditMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL if none.
// The string stays valid until the next failing call on the same thread.
const char *dredit_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *dredit_version(void);

// Copies `rows × dim` row-major values into a new matrix.
//
// `ids` may be NULL (rows are named "0", "1", ...) or point to `rows`
// NUL-terminated unique strings.
//
// # Safety
// `data` must point to `rows * dim` floats; `ids`, if non-NULL, to `rows` valid C strings.
enum DreditStatus dredit_matrix_new(size_t rows,
                                    size_t dim,
                                    const float *data,
                                    const char *const *ids,
                                    struct DreditMatrix **out_matrix);

// Reads a DRED1 matrix (and its `.ids` sidecar, if present).
//
// # Safety
// `file` must be a valid C string; `out_matrix` valid for writes.
enum DreditStatus dredit_matrix_read(const char *file, struct DreditMatrix **out_matrix);

// Writes a DRED1 matrix and its `.ids` sidecar atomically.
//
// # Safety
// `matrix` must be a live handle and `file` a valid C string.
enum DreditStatus dredit_matrix_write(const struct DreditMatrix *matrix, const char *file);

// Number of rows; 0 for NULL.
//
// # Safety
// `matrix` must be NULL or a live handle.
size_t dredit_matrix_rows(const struct DreditMatrix *matrix);

// Row dimension; 0 for NULL.
//
// # Safety
// `matrix` must be NULL or a live handle.
size_t dredit_matrix_dim(const struct DreditMatrix *matrix);

// Borrowed pointer to the row-major values, valid until the matrix is freed; NULL for NULL.
//
// # Safety
// `matrix` must be NULL or a live handle.
const float *dredit_matrix_data(const struct DreditMatrix *matrix);

// # Safety
// `matrix` must be NULL or a handle not yet freed.
void dredit_matrix_free(struct DreditMatrix *matrix);

// Fits an operator from row-aligned question/answer matrices (row `i` of each is pair `i`).
//
// `ridge` is an absolute diagonal term, or negative for the automatic ridge.
// `edit_side` is recorded in the operator metadata.
//
// # Safety
// Handles must be live; `out_operator` valid for writes.
enum DreditStatus dredit_fit(const struct DreditMatrix *questions,
                             const struct DreditMatrix *answers,
                             double lambda,
                             double ridge,
                             uint32_t edit_side,
                             struct DreditOperator **out_operator);

// # Safety
// `operator` must be a live handle and `info` valid for writes.
enum DreditStatus dredit_operator_info(const struct DreditOperator *operator_,
                                       struct DreditOperatorInfo *info);

// Copies the full weight matrix `W` (row-major, `dim × dim`) into `out_weights`.
// `len` must be at least `dim * dim`.
//
// # Safety
// `out_weights` must be valid for `len` doubles.
enum DreditStatus dredit_operator_weights(const struct DreditOperator *operator_,
                                          double *out_weights,
                                          size_t len);

// Saves under `<store>/<domain>/`. Fails with `Io` if the domain exists and `force` is 0.
//
// # Safety
// Strings must be valid C strings; `operator` a live handle.
enum DreditStatus dredit_operator_save(const char *store,
                                       const char *domain,
                                       const struct DreditOperator *operator_,
                                       bool force);

// Loads and checksum-verifies a stored operator.
//
// # Safety
// Strings must be valid C strings; `out_operator` valid for writes.
enum DreditStatus dredit_operator_load(const char *store,
                                       const char *domain,
                                       struct DreditOperator **out_operator);

// # Safety
// `operator` must be NULL or a handle not yet freed.
void dredit_operator_free(struct DreditOperator *operator_);

// Returns a new matrix `x · W` with the same ids.
//
// # Safety
// Handles must be live; `out_matrix` valid for writes.
enum DreditStatus dredit_apply(const struct DreditOperator *operator_,
                               const struct DreditMatrix *matrix,
                               struct DreditMatrix **out_matrix);

// Reads JSONL judgments `{"qid", "did", "rel"}`.
//
// # Safety
// `file` must be a valid C string; `out_qrels` valid for writes.
enum DreditStatus dredit_qrels_read(const char *file, struct DreditQrels **out_qrels);

// # Safety
// `qrels` must be NULL or a handle not yet freed.
void dredit_qrels_free(struct DreditQrels *qrels);

// Exact top-`k` retrieval of every query against the corpus, scored against `qrels`.
//
// # Safety
// Handles must be live; `out_metrics` valid for writes.
enum DreditStatus dredit_evaluate(const struct DreditMatrix *queries,
                                  const struct DreditMatrix *corpus,
                                  const struct DreditQrels *qrels,
                                  size_t k,
                                  uint32_t sim,
                                  struct DreditMetrics *out_metrics);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DREDIT_H */
