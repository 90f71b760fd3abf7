#ifndef VCSD_H
#define VCSD_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VcsdStatus {
  VCSD_STATUS_OK = 0,
  VCSD_STATUS_INVALID_INPUT = 1,
  VCSD_STATUS_DIMENSION_MISMATCH = 2,
  VCSD_STATUS_NON_FINITE = 3,
  VCSD_STATUS_USAGE = 4,
  VCSD_STATUS_SINGULAR_INPUT = 5,
  VCSD_STATUS_DEGENERATE_GEOMETRY = 6,
  VCSD_STATUS_NULL_POINTER = 7,
  VCSD_STATUS_INTERNAL = 8,
} VcsdStatus;

typedef enum VcsdDecision {
  VCSD_DECISION_UNDECIDED = 0,
  VCSD_DECISION_TARGET_PRESENT = 1,
  VCSD_DECISION_TARGET_ABSENT = 2,
} VcsdDecision;

typedef enum VcsdHypothesis {
  VCSD_HYPOTHESIS_PRESENT = 0,
  VCSD_HYPOTHESIS_ABSENT = 1,
} VcsdHypothesis;

/**
 * Opaque streaming detector.
 */
typedef struct VcsdDetector VcsdDetector;

/**
 * Detector settings. Obtain defaults from [`vcsd_detector_params_default`].
 */
typedef struct VcsdDetectorParams {
  /**
   * Non-zero if `noise_variance` should be used by the rank rule.
   */
  int32_t has_noise_variance;
  double noise_variance;
  double rank_gap_factor;
  double divergence_threshold;
  double stall_epsilon;
  size_t stall_patience;
  size_t max_samples;
  double zero_volume_tol;
} VcsdDetectorParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default detector settings (no noise variance, `max_samples = 512`).
 */
struct VcsdDetectorParams vcsd_detector_params_default(void);

/**
 * Creates a detector for the `n x d2` target basis (column-major,
 * orthonormal within 1e-8). `params` may be null for defaults.
 *
 * # Safety
 * `basis` must point to `n * d2` doubles; `out` must be a valid pointer.
 */
enum VcsdStatus vcsd_detector_new(const double *basis,
                                  size_t n,
                                  size_t d2,
                                  const struct VcsdDetectorParams *params,
                                  struct VcsdDetector **out);

/**
 * Releases a detector. Null is ignored.
 *
 * # Safety
 * `det` must come from [`vcsd_detector_new`] and not be used afterwards.
 */
void vcsd_detector_free(struct VcsdDetector *det);

/**
 * Feeds one length-`n` sample. `decision` (nullable) receives the decision
 * after this sample.
 *
 * # Safety
 * `det` must be a live handle and `y` must point to `n` doubles.
 */
enum VcsdStatus vcsd_detector_ingest(struct VcsdDetector *det,
                                     const double *y,
                                     size_t n,
                                     enum VcsdDecision *decision);

/**
 * Number of samples ingested so far (0 for a null handle).
 *
 * # Safety
 * `det` must be a live handle or null.
 */
size_t vcsd_detector_sample_count(const struct VcsdDetector *det);

/**
 * Current decision; `decided_at` (nullable) receives the deciding sample
 * index, or 0 while undecided.
 *
 * # Safety
 * `det` must be a live handle or null.
 */
enum VcsdDecision vcsd_detector_decision(const struct VcsdDetector *det, size_t *decided_at);

/**
 * Statistic after the latest sample. Any output pointer may be null.
 * Fails with `Usage` before the first sample.
 *
 * # Safety
 * `det` must be a live handle; non-null outputs must be valid.
 */
enum VcsdStatus vcsd_detector_latest(const struct VcsdDetector *det,
                                     double *t,
                                     double *inv_t,
                                     size_t *rank);

/**
 * Volume correlation of two subspaces given by column-major orthonormal
 * bases `a` (`n x da`) and `b` (`n x db`).
 *
 * # Safety
 * `a`, `b` must point to `n * da` and `n * db` doubles; `out` must be valid.
 */
enum VcsdStatus vcsd_volume_correlation(const double *a,
                                        size_t da,
                                        const double *b,
                                        size_t db,
                                        size_t n,
                                        double *out);

/**
 * Sample-size bound for one hypothesis. `eigs` holds `len` population
 * eigenvalues in descending order. Either output may be null.
 *
 * # Safety
 * `eigs` must point to `len` doubles; non-null outputs must be valid.
 */
enum VcsdStatus vcsd_sample_bound(enum VcsdHypothesis hypothesis,
                                  const double *eigs,
                                  size_t len,
                                  double noise_variance,
                                  size_t n,
                                  double delta,
                                  double epsilon,
                                  uint64_t *m_required,
                                  double *exponent_argument);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *vcsd_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VCSD_H */
