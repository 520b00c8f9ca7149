#ifndef KOPPELMAN_H
#define KOPPELMAN_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum KopStatus {
  KOP_STATUS_OK = 0,
  KOP_STATUS_NULL_POINTER = 1,
  KOP_STATUS_INVALID_ARGUMENT = 2,
  KOP_STATUS_UNKNOWN_VARIETY = 3,
  KOP_STATUS_INVALID_VARIETY = 4,
  KOP_STATUS_UNSUPPORTED_DEGREE = 5,
  KOP_STATUS_NEAR_SINGULAR = 6,
  KOP_STATUS_POLE = 7,
  KOP_STATUS_UNKNOWN_EXPERIMENT = 8,
  KOP_STATUS_NUMERICAL = 9,
  KOP_STATUS_PARSE = 10,
  KOP_STATUS_IO = 11,
  KOP_STATUS_PANIC = 12,
} KopStatus;

// Opaque variety handle.
typedef struct KopVariety KopVariety;

typedef struct KopComplex {
  double re;
  double im;
} KopComplex;

typedef struct KopThresholds {
  double p_min;
  double p_min_w;
  bool canonical;
  bool main1_applicable;
  bool main4_applicable;
} KopThresholds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a catalog variety (`hyperplane`, `a1`, `fermat2`..`fermat4`, `ci22`).
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum KopStatus kop_variety_from_catalog(const char *name, struct KopVariety **out);

// Creates a variety from its JSON description.
//
// # Safety
// `json` must be a NUL-terminated string and `out` a valid pointer.
enum KopStatus kop_variety_from_json(const char *json, struct KopVariety **out);

// Releases a handle; null is ignored.
//
// # Safety
// `v` must come from this library and not be used afterwards.
void kop_variety_free(struct KopVariety *v);

// Ambient dimension `N`, dimension `n` and codimension `nu`.
//
// # Safety
// All pointers must be valid.
enum KopStatus kop_variety_dims(const struct KopVariety *v,
                                size_t *ambient_dim,
                                size_t *dim,
                                size_t *codim);

// Writes `f_1(zeta), ..., f_nu(zeta)` into `out`, which holds `out_len >= nu` entries.
//
// # Safety
// `zeta` must hold `len` entries and `out` `out_len` entries.
enum KopStatus kop_variety_eval_tuple(const struct KopVariety *v,
                                      const struct KopComplex *zeta,
                                      size_t len,
                                      struct KopComplex *out,
                                      size_t out_len);

// Norm of the maximal minors of the Jacobian at `zeta`.
//
// # Safety
// `zeta` must hold `len` entries; `out` must be valid.
enum KopStatus kop_variety_minors_norm(const struct KopVariety *v,
                                       const struct KopComplex *zeta,
                                       size_t len,
                                       double *out);

// Degree-derived exponent thresholds.
//
// # Safety
// `out` must be valid.
enum KopStatus kop_variety_thresholds(const struct KopVariety *v, struct KopThresholds *out);

// Monte Carlo estimate of `v(r, z) = Vol(X cap B_r(z)) / r^{2n}`.
//
// # Safety
// `z` must hold `len` entries; `value` and `stderr` must be valid.
enum KopStatus kop_estimate_v(const struct KopVariety *v,
                              double r,
                              const struct KopComplex *z,
                              size_t len,
                              size_t samples,
                              uint64_t seed,
                              double *value,
                              double *stderr);

// Runs a registered experiment and returns its report as JSON in `*json_out`.
//
// # Safety
// `name` must be a NUL-terminated string and `json_out` valid. Release the
// result with `kop_string_free`.
enum KopStatus kop_run_experiment(const struct KopVariety *v,
                                  const char *name,
                                  size_t samples,
                                  uint64_t seed,
                                  double tolerance_scale,
                                  char **json_out);

// Releases a string returned by this library; null is ignored.
//
// # Safety
// `s` must come from this library and not be used afterwards.
void kop_string_free(char *s);

// Message for the last failed call on this thread, empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *kop_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KOPPELMAN_H */
