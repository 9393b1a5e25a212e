#ifndef DCMATCH_H
#define DCMATCH_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum DcmStatus {
  DcmOk = 0,
  DcmNullArgument = 1,
  DcmInvalidArgument = 2,
  DcmSizeMismatch = 3,
  DcmNumericalFailure = 4,
  DcmPanic = 5,
} DcmStatus;

/**
 * Minorant construction used by the discrete solver.
 */
typedef enum DcmMinorant {
  DcmMinorantNaive = 0,
  DcmMinorantUniform = 1,
  DcmMinorantIterative = 2,
  DcmMinorantHierarchical = 3,
} DcmMinorant;

/**
 * Opaque matcher; create with `dcm_matcher_new`, destroy with
 * `dcm_matcher_free`.
 */
typedef struct DcmMatcher DcmMatcher;

/**
 * Matcher configuration; fill with `dcm_options_default` first.
 */
typedef struct DcmOptions {
  /**
   * Smallest and largest stereo disparity (inclusive).
   */
  int32_t disparity_min;
  int32_t disparity_max;
  /**
   * Flow displacement ranges (inclusive).
   */
  int32_t flow_x_min;
  int32_t flow_x_max;
  int32_t flow_y_min;
  int32_t flow_y_max;
  /**
   * Truncated penalty: slope near zero, knee location, truncation value.
   */
  double penalty_epsilon;
  double penalty_delta;
  double penalty_trunc;
  /**
   * Census window (odd, >= 3).
   */
  uint32_t census_window;
  /**
   * Full iterations of the dual solver.
   */
  uint32_t discrete_iterations;
  enum DcmMinorant minorant;
  /**
   * Continuous refinement: warps and iterations per warp (0 disables).
   */
  uint32_t warps;
  uint32_t iterations_per_warp;
  /**
   * Trust radius of the data approximation, in label steps.
   */
  double trust_radius;
  /**
   * Edge-aware weights `strength * max(w_min, exp(-a |dI|^b))`.
   */
  double edge_a;
  double edge_b;
  double edge_w_min;
  double regularization_strength;
} DcmOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Fill `out` with the default configuration.
 *
 * # Safety
 * `out` must be null or point to writable memory for one `DcmOptions`.
 */
enum DcmStatus dcm_options_default(struct DcmOptions *out);

/**
 * Validate the options and allocate a matcher.  Returns null when the
 * options are invalid.
 *
 * # Safety
 * `options` must be null or point to a valid `DcmOptions`.
 */
struct DcmMatcher *dcm_matcher_new(const struct DcmOptions *options);

/**
 * Release a matcher created by `dcm_matcher_new`.
 *
 * # Safety
 * `matcher` must be null or a pointer returned by `dcm_matcher_new` that
 * has not been freed yet.
 */
void dcm_matcher_free(struct DcmMatcher *matcher);

/**
 * Dense stereo matching.  `left`, `right` and `disparity` are row-major
 * `width * height` buffers; intensities in `[0, 1]`; the disparity of the
 * left view is written in pixels.
 *
 * # Safety
 * All pointers must be valid for `width * height` floats; `matcher` must
 * come from `dcm_matcher_new`.
 */
enum DcmStatus dcm_matcher_stereo(const struct DcmMatcher *matcher,
                                  const float *left,
                                  const float *right,
                                  uintptr_t width,
                                  uintptr_t height,
                                  float *disparity);

/**
 * Dense optical flow.  Buffers are row-major `width * height` floats; the
 * two flow components are written separately.
 *
 * # Safety
 * All pointers must be valid for `width * height` floats; `matcher` must
 * come from `dcm_matcher_new`.
 */
enum DcmStatus dcm_matcher_flow(const struct DcmMatcher *matcher,
                                const float *first,
                                const float *second,
                                uintptr_t width,
                                uintptr_t height,
                                float *flow_x,
                                float *flow_y);

/**
 * Human-readable description of a status code (static storage).
 */
const char *dcm_status_message(enum DcmStatus status);

/**
 * Library version (static storage).
 */
const char *dcm_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCMATCH_H */
