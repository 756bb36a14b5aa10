#ifndef AEROMAP_H
#define AEROMAP_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum AeromapStatus {
  AEROMAP_STATUS_OK = 0,
  AEROMAP_STATUS_NULL_ARGUMENT = 1,
  AEROMAP_STATUS_INVALID_UTF8 = 2,
  AEROMAP_STATUS_CONTRACT = 3,
  AEROMAP_STATUS_EMPTY_TRAINING = 4,
  AEROMAP_STATUS_RANK_DEFICIENT = 5,
  AEROMAP_STATUS_OUT_OF_COVERAGE = 6,
  AEROMAP_STATUS_INSUFFICIENT_SENSORS = 7,
  AEROMAP_STATUS_NO_CONVERGENCE = 8,
  AEROMAP_STATUS_DIVERGED = 9,
  AEROMAP_STATUS_SINGULAR = 10,
  AEROMAP_STATUS_SCENE_TOO_LARGE = 11,
  AEROMAP_STATUS_UNKNOWN_MODEL = 12,
  AEROMAP_STATUS_PARSE = 13,
  AEROMAP_STATUS_IO = 14,
  AEROMAP_STATUS_BUFFER_TOO_SMALL = 15,
  AEROMAP_STATUS_PANIC = 16,
} AeromapStatus;

/**
 * Opaque dataset handle.
 */
typedef struct AeromapDataset AeromapDataset;

/**
 * Opaque trained-model handle.
 */
typedef struct AeromapModel AeromapModel;

/**
 * The four indicators plus the sample size.
 */
typedef struct AeromapMetrics {
  double rmse;
  double bias;
  /**
   * NaN when either series is constant.
   */
  double corr;
  /**
   * Maximum absolute error.
   */
  double mae;
  size_t n;
} AeromapMetrics;

/**
 * Byte length of the last error message on this thread, including the
 * terminating nul; 0 when there is none.
 */
size_t aeromap_last_error_length(void);

/**
 * Copies the last error message into `buf` (nul-terminated, truncated to
 * `len` bytes). Returns the number of bytes written including the nul.
 *
 * # Safety
 * `buf` must be valid for `len` bytes of writes.
 */
size_t aeromap_last_error_message(char *buf, size_t len);

/**
 * Number of registered models.
 */
size_t aeromap_model_count(void);

/**
 * Registered model name at `index` as a static string, or null when out
 * of range.
 */
const char *aeromap_model_name_at(size_t index);

/**
 * Reads a preprocessed dataset CSV.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid for writes.
 */
enum AeromapStatus aeromap_dataset_read_csv(const char *path, struct AeromapDataset **out);

/**
 * Number of observations, 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t aeromap_dataset_len(const struct AeromapDataset *ds);

/**
 * Copies the observed (log-space) values into `out`.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be valid for `len` writes.
 */
enum AeromapStatus aeromap_dataset_values(const struct AeromapDataset *ds, double *out, size_t len);

/**
 * Releases a dataset handle. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void aeromap_dataset_free(struct AeromapDataset *ds);

/**
 * Fits the named model with its default settings.
 *
 * # Safety
 * `ds` must be a live handle, `model` a nul-terminated string and `out`
 * valid for writes.
 */
enum AeromapStatus aeromap_model_fit(const struct AeromapDataset *ds,
                                     const char *model,
                                     uint64_t seed,
                                     struct AeromapModel **out);

/**
 * Predicts at every observation of `ds`, writing `aeromap_dataset_len(ds)`
 * values into `out`.
 *
 * # Safety
 * Handles must be live; `out` must be valid for `len` writes.
 */
enum AeromapStatus aeromap_model_predict(const struct AeromapModel *model,
                                         const struct AeromapDataset *ds,
                                         double *out,
                                         size_t len);

/**
 * Registered name of a trained model as a static string.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *aeromap_model_name(const struct AeromapModel *model);

/**
 * Writes a trained model as JSON.
 *
 * # Safety
 * `model` must be a live handle and `path` a nul-terminated string.
 */
enum AeromapStatus aeromap_model_save(const struct AeromapModel *model, const char *path);

/**
 * Reads a model written by `aeromap_model_save` or the command line tool.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid for writes.
 */
enum AeromapStatus aeromap_model_load(const char *path, struct AeromapModel **out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void aeromap_model_free(struct AeromapModel *model);

/**
 * Computes RMSE, bias, correlation and maximum absolute error of
 * `predicted` against `actual`, both of length `n`.
 *
 * # Safety
 * Both arrays must be valid for `n` reads; `out` must be valid for writes.
 */
enum AeromapStatus aeromap_metrics(const double *predicted,
                                   const double *actual,
                                   size_t n,
                                   struct AeromapMetrics *out);

#endif  /* AEROMAP_H */
