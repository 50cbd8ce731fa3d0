#ifndef CATEQ_H
#define CATEQ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `CATEQ_STATUS_OK` is zero.
 */
typedef enum CateqStatus {
  CATEQ_STATUS_OK = 0,
  CATEQ_STATUS_NULL_POINTER = 1,
  CATEQ_STATUS_INVALID_ARGUMENT = 2,
  CATEQ_STATUS_DIMENSION_MISMATCH = 3,
  CATEQ_STATUS_IO = 4,
  CATEQ_STATUS_FORMAT = 5,
  CATEQ_STATUS_NUMERIC = 6,
  CATEQ_STATUS_PANIC = 7,
} CateqStatus;

/**
 * Representation selector, numbered as in the command-line tool.
 */
typedef enum CateqKind {
  CATEQ_KIND_BASELINE_RAW = 0,
  CATEQ_KIND_GROUP_ONLY = 1,
  CATEQ_KIND_POSET_ONLY = 2,
  CATEQ_KIND_GROUP_POSET = 3,
} CateqKind;

/**
 * Opaque handle to a loaded classifier.
 */
typedef struct CateqModel CateqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cateq_version(void);

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *cateq_last_error_message(void);

/**
 * Feature length for `kind` with `k` bins on windows of `window_len` samples.
 *
 * # Safety
 * `out_dim` must be NULL or point to writable memory for one `size_t`.
 */
enum CateqStatus cateq_feature_dim(enum CateqKind kind,
                                   size_t k,
                                   size_t window_len,
                                   size_t *out_dim);

/**
 * Extracts one feature vector into `out`, which must hold exactly the
 * length reported by [`cateq_feature_dim`].
 *
 * # Safety
 * `acc` and `gyro` must each point to `3 * window_len` readable doubles and
 * `out` to `out_len` writable doubles.
 */
enum CateqStatus cateq_extract(enum CateqKind kind,
                               size_t k,
                               const double *acc,
                               const double *gyro,
                               size_t window_len,
                               double *out,
                               size_t out_len);

/**
 * Magnitudes of DFT bins `1..=k` of a real signal.
 *
 * # Safety
 * `x` must point to `len` readable doubles and `out` to `k` writable doubles.
 */
enum CateqStatus cateq_rfft_magnitude(const double *x, size_t len, size_t k, double *out);

/**
 * Loads a model file written by `cateq train`. Free with [`cateq_model_free`].
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum CateqStatus cateq_model_load(const char *path, struct CateqModel **out_model);

/**
 * Releases a model. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle from [`cateq_model_load`] not yet freed.
 */
void cateq_model_free(struct CateqModel *model);

/**
 * Window length, feature length, and class count of a model.
 *
 * # Safety
 * `model` must be a live handle; each output pointer may be NULL.
 */
enum CateqStatus cateq_model_info(const struct CateqModel *model,
                                  size_t *out_window_len,
                                  size_t *out_dim,
                                  size_t *out_num_classes);

/**
 * Class labels in the column order used by [`cateq_model_predict_proba`].
 *
 * # Safety
 * `out` must point to `len` writable bytes.
 */
enum CateqStatus cateq_model_classes(const struct CateqModel *model, uint8_t *out, size_t len);

/**
 * Predicted label for one window.
 *
 * # Safety
 * `acc` and `gyro` must each point to `3 * window_len` readable doubles.
 */
enum CateqStatus cateq_model_predict(const struct CateqModel *model,
                                     const double *acc,
                                     const double *gyro,
                                     size_t window_len,
                                     uint8_t *out_label);

/**
 * Class probabilities for one window, ordered as [`cateq_model_classes`].
 *
 * # Safety
 * `acc` and `gyro` must each point to `3 * window_len` readable doubles and
 * `out` to `len` writable doubles.
 */
enum CateqStatus cateq_model_predict_proba(const struct CateqModel *model,
                                           const double *acc,
                                           const double *gyro,
                                           size_t window_len,
                                           double *out,
                                           size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATEQ_H */
