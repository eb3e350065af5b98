#ifndef LLM_DMD_H
#define LLM_DMD_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DMD_STATUS_OK = 0,
  DMD_STATUS_NULL_POINTER = 1,
  DMD_STATUS_INVALID_UTF8 = 2,
  DMD_STATUS_PARSE = 3,
  DMD_STATUS_EVAL = 4,
  DMD_STATUS_DOMAIN_FAULT = 5,
  DMD_STATUS_INVALID_ARGUMENT = 6,
  DMD_STATUS_UNDEFINED = 7,
  DMD_STATUS_PANIC = 8,
} DmdStatus;

typedef enum {
  DMD_KIND_DE = 0,
  DMD_KIND_AE = 1,
} DmdKind;

typedef enum {
  DMD_TRIGGER_CONTINUE = 0,
  DMD_TRIGGER_EXTEND_VARIABLES = 1,
  DMD_TRIGGER_TERMINATE = 2,
} DmdTrigger;

/**
 * Opaque parsed skeleton.
 */
typedef struct DmdSkeleton DmdSkeleton;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *dmd_last_error(void);

/**
 * Parses `text` against the given states and variables. `targets` lists
 * the left-hand sides in order.
 *
 * # Safety
 * String arrays must hold `n_*` valid NUL-terminated strings and `out`
 * must be writable.
 */
DmdStatus dmd_skeleton_parse(const char *text,
                             DmdKind kind,
                             const char *const *states,
                             size_t n_states,
                             const char *const *variables,
                             size_t n_variables,
                             const char *const *targets,
                             size_t n_targets,
                             DmdSkeleton **out);

/**
 * # Safety
 * `h` must come from [`dmd_skeleton_parse`] and not be freed twice.
 */
void dmd_skeleton_free(DmdSkeleton *h);

/**
 * Canonical text; release it with [`dmd_string_free`].
 *
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
DmdStatus dmd_skeleton_serialize(const DmdSkeleton *h, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void dmd_string_free(char *s);

/**
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
DmdStatus dmd_skeleton_code_length(const DmdSkeleton *h, size_t *out);

/**
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
DmdStatus dmd_skeleton_num_params(const DmdSkeleton *h, size_t *out);

/**
 * # Safety
 * `h` must be a live handle and `out` writable.
 */
DmdStatus dmd_skeleton_num_targets(const DmdSkeleton *h, size_t *out);

/**
 * Evaluates every target on a column-major data block. `out` receives
 * `n_targets × n_samples` values, target-major.
 *
 * # Safety
 * Pointers must cover the stated lengths.
 */
DmdStatus dmd_skeleton_evaluate(const DmdSkeleton *h,
                                const double *params,
                                size_t n_params,
                                const char *const *names,
                                const double *data,
                                size_t n_cols,
                                size_t n_samples,
                                double *out,
                                size_t out_len);

/**
 * Fits the parameters against the `labels` columns (one per target) with
 * the default Adam settings, overriding steps and seed. Writes the
 * parameters to `out_params` and `-MSE` to `out_score`.
 *
 * # Safety
 * Pointers must cover the stated lengths.
 */
DmdStatus dmd_skeleton_fit(const DmdSkeleton *h,
                           const char *const *names,
                           const double *data,
                           size_t n_cols,
                           size_t n_samples,
                           const char *const *labels,
                           size_t n_labels,
                           size_t steps,
                           uint64_t seed,
                           double *out_params,
                           size_t n_params,
                           double *out_score);

/**
 * Trigger decision for the best-score history `s*_0..s*_t`.
 *
 * # Safety
 * `history` must hold `len` values and `out` be writable.
 */
DmdStatus dmd_check_trigger(const double *history,
                            size_t len,
                            double epsilon,
                            double gamma,
                            size_t window,
                            DmdTrigger *out);

/**
 * MAPE in percent; near-zero truth samples are skipped.
 *
 * # Safety
 * `truth` and `pred` must hold `n` values and `out` be writable.
 */
DmdStatus dmd_mape(const double *truth, const double *pred, size_t n, double *out);

/**
 * # Safety
 * `truth` and `pred` must hold `n` values and `out` be writable.
 */
DmdStatus dmd_r_squared(const double *truth, const double *pred, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LLM_DMD_H */
