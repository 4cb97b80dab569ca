#ifndef WAVG_H
#define WAVG_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WavgStatus {
  WAVG_STATUS_OK = 0,
  WAVG_STATUS_NULL_POINTER = 1,
  WAVG_STATUS_INVALID_UTF8 = 2,
  WAVG_STATUS_UNKNOWN_NAME = 3,
  WAVG_STATUS_DOMAIN = 4,
  WAVG_STATUS_INVALID_ARGUMENT = 5,
  WAVG_STATUS_NUMERICAL = 6,
  WAVG_STATUS_PANIC = 7,
} WavgStatus;

/**
 * Opaque weight scheme.
 */
typedef struct WavgScheme WavgScheme;

/**
 * Opaque bounded complex sequence.
 */
typedef struct WavgSequence WavgSequence;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the next failing call.
 */
const char *wavg_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wavg_version(void);

/**
 * Looks up a built-in scheme such as `"cesaro"`, `"log"`, `"exp_sqrt"` or `"power:2"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a writable pointer.
 */
enum WavgStatus wavg_scheme_builtin(const char *name, struct WavgScheme **out);

/**
 * # Safety
 * `scheme` must come from [`wavg_scheme_builtin`] and not be used afterwards. Null is ignored.
 */
void wavg_scheme_free(struct WavgScheme *scheme);

/**
 * ΔV(n)/V(N).
 *
 * # Safety
 * `scheme` must be a live handle and `out` writable.
 */
enum WavgStatus wavg_normalized_weight(const struct WavgScheme *scheme,
                                       uint64_t n,
                                       uint64_t big_n,
                                       double *out);

/**
 * Catalog sequence such as `"exp_log_phase"` or `"constant:3"`; `len` sizes random sequences.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` writable.
 */
enum WavgStatus wavg_sequence_named(const char *spec,
                                    uint64_t seed,
                                    uint64_t len,
                                    struct WavgSequence **out);

/**
 * Sequence x_1..x_len from parallel real/imaginary arrays; zero past the end.
 * `im` may be null for a real sequence.
 *
 * # Safety
 * `re` (and `im` if non-null) must point to `len` readable doubles.
 */
enum WavgStatus wavg_sequence_from_values(const double *re,
                                          const double *im,
                                          uintptr_t len,
                                          struct WavgSequence **out);

/**
 * # Safety
 * `seq` must come from a `wavg_sequence_*` constructor and not be used afterwards. Null is ignored.
 */
void wavg_sequence_free(struct WavgSequence *seq);

/**
 * Σ ΔV(n)/V(N) x_n; the result is written to `out_re`/`out_im`.
 *
 * # Safety
 * Handles must be live; output pointers writable.
 */
enum WavgStatus wavg_weighted_avg(const struct WavgScheme *scheme,
                                  const struct WavgSequence *seq,
                                  uint64_t big_n,
                                  double *out_re,
                                  double *out_im);

/**
 * k-fold iterated weighted average at N.
 *
 * # Safety
 * Handles must be live; output pointers writable.
 */
enum WavgStatus wavg_iterated_avg(const struct WavgScheme *scheme,
                                  const struct WavgSequence *seq,
                                  uint32_t k,
                                  uint64_t big_n,
                                  double *out_re,
                                  double *out_im);

/**
 * μ(A ∩ T^{−m₁}A ∩ …) for rotation by `alpha`, with A the union of arcs
 * `[arcs[2i], arcs[2i+1])`.
 *
 * # Safety
 * `arcs` must hold `2 * n_arcs` doubles and `shifts` `n_shifts` integers.
 */
enum WavgStatus wavg_rotation_correlation(double alpha,
                                          const double *arcs,
                                          uintptr_t n_arcs,
                                          const int64_t *shifts,
                                          uintptr_t n_shifts,
                                          double *out);

/**
 * Same as [`wavg_rotation_correlation`] on ℤ_q with x ↦ x + step and A given by its elements.
 *
 * # Safety
 * `elements` must hold `n_elements` values and `shifts` `n_shifts` integers.
 */
enum WavgStatus wavg_cyclic_correlation(uint32_t q,
                                        uint32_t step,
                                        const uint32_t *elements,
                                        uintptr_t n_elements,
                                        const int64_t *shifts,
                                        uintptr_t n_shifts,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVG_H */
