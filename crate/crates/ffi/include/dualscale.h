#ifndef DUALSCALE_H
#define DUALSCALE_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_INPUT = 2,
  /**
   * No expected disagreement, or an entry with no comparisons.
   */
  DS_STATUS_UNDEFINED = 3,
  DS_STATUS_DISCONNECTED = 4,
  DS_STATUS_NON_FINITE = 5,
  DS_STATUS_INTERNAL = 6,
} DsStatus;

typedef enum DsLevel {
  DS_LEVEL_NOMINAL = 0,
  DS_LEVEL_ORDINAL = 1,
} DsLevel;

/**
 * Opaque fitted-scale handle.
 */
typedef struct DsScale DsScale;

/**
 * Opaque win matrix handle.
 */
typedef struct DsWinMatrix DsWinMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *ds_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/**
 * Single comparison outcome: 1 if `x > y`, 0.5 if equal, 0 otherwise.
 */
double ds_win(double x, double y);

/**
 * Builds a matrix over items `0..n` from row-major `values` (`n * n` entries).
 *
 * # Safety
 * `values` must point to `n * n` readable doubles and `out` must be writable.
 */
enum DsStatus ds_win_matrix_from_dense(size_t n, const double *values, struct DsWinMatrix **out);

/**
 * # Safety
 * `m` must be null or a handle from this library not yet freed.
 */
void ds_win_matrix_free(struct DsWinMatrix *m);

/**
 * # Safety
 * `m` must be a live handle or null.
 */
size_t ds_win_matrix_size(const struct DsWinMatrix *m);

/**
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum DsStatus ds_win_matrix_get(const struct DsWinMatrix *m, size_t i, size_t j, double *out);

/**
 * Fits strengths with I-LSR.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum DsStatus ds_fit_bt(const struct DsWinMatrix *m,
                        double reg,
                        double tol,
                        size_t max_iter,
                        struct DsScale **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void ds_scale_free(struct DsScale *s);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
size_t ds_scale_len(const struct DsScale *s);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
bool ds_scale_converged(const struct DsScale *s);

/**
 * # Safety
 * `s` must be a live handle or null.
 */
size_t ds_scale_iterations(const struct DsScale *s);

/**
 * Copies the zero-mean strengths into `out` (`len` must equal the item count).
 *
 * # Safety
 * `s` must be a live handle and `out` must have room for `len` doubles.
 */
enum DsStatus ds_scale_theta(const struct DsScale *s, double *out, size_t len);

/**
 * Writes item indices from strongest to weakest into `out`.
 *
 * # Safety
 * `s` must be a live handle and `out` must have room for `len` entries.
 */
enum DsStatus ds_scale_ranking(const struct DsScale *s, size_t *out, size_t len);

/**
 * Probability that item `i` beats item `j`.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum DsStatus ds_scale_probability(const struct DsScale *s, size_t i, size_t j, double *out);

/**
 * Rankings are permutations of `0..n`, listed from first to last place.
 *
 * # Safety
 * `r1` and `r2` must each hold `n` entries and `out` must be writable.
 */
enum DsStatus ds_footrule_similarity(const size_t *r1, const size_t *r2, size_t n, double *out);

/**
 * # Safety
 * As for [`ds_footrule_similarity`].
 */
enum DsStatus ds_kendall_similarity(const size_t *r1, const size_t *r2, size_t n, double *out);

/**
 * # Safety
 * As for [`ds_footrule_similarity`].
 */
enum DsStatus ds_ordinal_alpha_rankings(const size_t *r1, const size_t *r2, size_t n, double *out);

/**
 * Alpha over a row-major `n_units × n_raters` grid; cells with `mask == 0` are missing.
 *
 * # Safety
 * `values` and `mask` must each hold `n_units * n_raters` entries and `out` must be writable.
 */
enum DsStatus ds_krippendorff_alpha(const int64_t *values,
                                    const uint8_t *mask,
                                    size_t n_units,
                                    size_t n_raters,
                                    enum DsLevel level,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALSCALE_H */
