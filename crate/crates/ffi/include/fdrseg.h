/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef FDRSEG_H
#define FDRSEG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FdrsegStatus {
  FDRSEG_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FDRSEG_STATUS_NULL_POINTER = 1,
  /**
   * An argument lies outside the domain of the operation.
   */
  FDRSEG_STATUS_DOMAIN = 2,
  /**
   * Inconsistent configuration or no feasible segmentation.
   */
  FDRSEG_STATUS_CONFIG = 3,
  /**
   * A quantile table failed validation.
   */
  FDRSEG_STATUS_LOAD = 4,
  /**
   * Malformed input such as a non UTF-8 path or bad JSON.
   */
  FDRSEG_STATUS_PARSE = 5,
  FDRSEG_STATUS_IO = 6,
  /**
   * The output buffer is too small; the required length was written.
   */
  FDRSEG_STATUS_BUFFER_TOO_SMALL = 7,
  /**
   * A bug in the library (caught panic).
   */
  FDRSEG_STATUS_INTERNAL = 8,
} FdrsegStatus;

/**
 * Result of a segmentation.
 */
typedef struct FdrsegSegmentation FdrsegSegmentation;

/**
 * Local quantile table.
 */
typedef struct FdrsegTable FdrsegTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *fdrseg_last_error(void);

/**
 * Local level `beta / (2 + beta)` whose FDR bound is `beta`.
 */
double fdrseg_alpha_for_fdr(double beta);

/**
 * FDR bound `2 alpha / (1 - alpha)`.
 */
double fdrseg_fdr_bound(double alpha);

/**
 * Simulates a local quantile table for iid noise on the geometric grid
 * up to `n_max`.
 *
 * # Safety
 * `table_out` must be null or writable.
 */
enum FdrsegStatus fdrseg_table_simulate(double alpha,
                                        size_t n_max,
                                        size_t mc_reps,
                                        uint64_t seed,
                                        struct FdrsegTable **table_out);

/**
 * Like [`fdrseg_table_simulate`] for noise filtered by `taps` (normalised
 * to sum 1) and subsampled by `factor`.
 *
 * # Safety
 * `taps` must point to `num_taps` values; `table_out` must be null or
 * writable.
 */
enum FdrsegStatus fdrseg_table_simulate_filtered(double alpha,
                                                 size_t n_max,
                                                 size_t mc_reps,
                                                 uint64_t seed,
                                                 const double *taps,
                                                 size_t num_taps,
                                                 size_t factor,
                                                 struct FdrsegTable **table_out);

/**
 * Loads a table written by [`fdrseg_table_save`] or the command-line tool.
 *
 * # Safety
 * `file` must be a nul-terminated string; `table_out` null or writable.
 */
enum FdrsegStatus fdrseg_table_load(const char *file, struct FdrsegTable **table_out);

/**
 * # Safety
 * `table` must be a live handle; `file` a nul-terminated string.
 */
enum FdrsegStatus fdrseg_table_save(const struct FdrsegTable *table, const char *file);

/**
 * Quantile `q_alpha(m)` for a segment of `m` samples.
 *
 * # Safety
 * `table` must be a live handle; `value_out` null or writable.
 */
enum FdrsegStatus fdrseg_table_lookup(const struct FdrsegTable *table, size_t m, double *value_out);

/**
 * # Safety
 * `table` must be a live handle.
 */
double fdrseg_table_alpha(const struct FdrsegTable *table);

/**
 * Releases a table. Null is ignored.
 *
 * # Safety
 * `table` must be null or a handle not yet freed.
 */
void fdrseg_table_free(struct FdrsegTable *table);

/**
 * Global threshold for the simultaneous method at level `alpha_s`.
 *
 * # Safety
 * `value_out` must be null or writable.
 */
enum FdrsegStatus fdrseg_global_quantile(double alpha_s,
                                         size_t n,
                                         size_t mc_reps,
                                         uint64_t seed,
                                         double *value_out);

/**
 * Noise level from the interquartile range of first differences.
 *
 * # Safety
 * `y` must point to `n` values; `value_out` null or writable.
 */
enum FdrsegStatus fdrseg_estimate_sigma(const double *y, size_t n, double *value_out);

/**
 * FDR-controlling segmentation of `y` with an iid table at level `alpha`.
 *
 * # Safety
 * `y` must point to `n` values, `table` be a live handle and
 * `segmentation_out` null or writable.
 */
enum FdrsegStatus fdrseg_segment(const double *y,
                                 size_t n,
                                 double alpha,
                                 double sigma,
                                 const struct FdrsegTable *table,
                                 struct FdrsegSegmentation **segmentation_out);

/**
 * Dependence-adjusted segmentation: the table's noise model is used as is
 * and the first `trim` samples of every segment are left out of its tests.
 *
 * # Safety
 * As for [`fdrseg_segment`].
 */
enum FdrsegStatus fdrseg_segment_dependent(const double *y,
                                           size_t n,
                                           double alpha,
                                           double sigma,
                                           size_t trim,
                                           const struct FdrsegTable *table,
                                           struct FdrsegSegmentation **segmentation_out);

/**
 * Simultaneous segmentation with global threshold `q_tilde`.
 *
 * # Safety
 * `y` must point to `n` values and `segmentation_out` be null or writable.
 */
enum FdrsegStatus fdrseg_segment_smuce(const double *y,
                                       size_t n,
                                       double alpha_s,
                                       double sigma,
                                       double q_tilde,
                                       struct FdrsegSegmentation **segmentation_out);

/**
 * Number of change-points, or 0 for a null handle.
 *
 * # Safety
 * `seg` must be null or a live handle.
 */
size_t fdrseg_segmentation_num_changes(const struct FdrsegSegmentation *seg);

/**
 * Residual sum of squares of the fit, NaN for a null handle.
 *
 * # Safety
 * `seg` must be null or a live handle.
 */
double fdrseg_segmentation_rss(const struct FdrsegSegmentation *seg);

/**
 * Copies the change indices (index `i` separates samples `i-1` and `i`)
 * into `buf`. `written` receives the count, also when the buffer is too
 * small.
 *
 * # Safety
 * `buf` must hold `capacity` elements; `written` must be writable.
 */
enum FdrsegStatus fdrseg_segmentation_change_indices(const struct FdrsegSegmentation *seg,
                                                     size_t *buf,
                                                     size_t capacity,
                                                     size_t *written);

/**
 * Copies the segment levels (one more than the change-points).
 *
 * # Safety
 * As for [`fdrseg_segmentation_change_indices`].
 */
enum FdrsegStatus fdrseg_segmentation_levels(const struct FdrsegSegmentation *seg,
                                             double *buf,
                                             size_t capacity,
                                             size_t *written);

/**
 * Releases a segmentation. Null is ignored.
 *
 * # Safety
 * `seg` must be null or a handle not yet freed.
 */
void fdrseg_segmentation_free(struct FdrsegSegmentation *seg);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDRSEG_H */
