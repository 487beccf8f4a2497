#ifndef RAILGNSS_H
#define RAILGNSS_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RgStatus {
  RG_STATUS_OK = 0,
  RG_STATUS_NULL_POINTER = 1,
  RG_STATUS_INVALID_ARGUMENT = 2,
  RG_STATUS_INPUT_ERROR = 3,
  RG_STATUS_NUMERICAL_ERROR = 4,
  RG_STATUS_NOT_FOUND = 5,
  RG_STATUS_BUFFER_TOO_SMALL = 6,
  RG_STATUS_PANIC = 7,
} RgStatus;

/**
 * Loaded environment classifier.
 */
typedef struct RgClassifier RgClassifier;

/**
 * Loaded per-environment error model map.
 */
typedef struct RgErrorModelSet RgErrorModelSet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rg_version(void);

/**
 * Writes the last error message of this thread into `buf` (truncated to
 * `len`). Returns the full length including the terminator, 0 if none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rg_last_error_message(char *buf, size_t len);

/**
 * Klobuchar ionospheric delay in meters on a carrier of `frequency_hz`.
 *
 * # Safety
 * `alpha` and `beta` must point to 4 doubles each; `out_m` must be writable.
 */
enum RgStatus rg_klobuchar_delay(const double *alpha,
                                 const double *beta,
                                 double lat_rad,
                                 double lon_rad,
                                 double azimuth_rad,
                                 double elevation_rad,
                                 double gps_sow,
                                 double frequency_hz,
                                 double *out_m);

/**
 * Saastamoinen slant tropospheric delay in meters.
 *
 * # Safety
 * `out_m` must be writable.
 */
enum RgStatus rg_tropo_delay(double elevation_rad,
                             double height_m,
                             double relative_humidity,
                             double *out_m);

/**
 * Loads a `model.json` written by the `train` subcommand.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RgStatus rg_classifier_load(const char *path, struct RgClassifier **out);

/**
 * # Safety
 * `clf` must be null or a handle from [`rg_classifier_load`] not yet freed.
 */
void rg_classifier_free(struct RgClassifier *clf);

/**
 * Number of input features expected by [`rg_classifier_predict`].
 *
 * # Safety
 * `clf` must be a live handle.
 */
size_t rg_classifier_feature_count(const struct RgClassifier *clf);

/**
 * Number of output classes.
 *
 * # Safety
 * `clf` must be a live handle.
 */
size_t rg_classifier_class_count(const struct RgClassifier *clf);

/**
 * Name of feature `index`, copied into `buf`. `out_len` receives the
 * length needed including the terminator.
 *
 * # Safety
 * `clf` must be a live handle, `buf` null or valid for `len` bytes.
 */
enum RgStatus rg_classifier_feature_name(const struct RgClassifier *clf,
                                         size_t index,
                                         char *buf,
                                         size_t len,
                                         size_t *out_len);

/**
 * Label of class `index`, copied into `buf`.
 *
 * # Safety
 * As for [`rg_classifier_feature_name`].
 */
enum RgStatus rg_classifier_class_name(const struct RgClassifier *clf,
                                       size_t index,
                                       char *buf,
                                       size_t len,
                                       size_t *out_len);

/**
 * Classifies one feature row. `present[i] == 0` marks a masked feature.
 * Writes the winning class index and, when `probabilities` is not null,
 * `n_probabilities` class probabilities.
 *
 * # Safety
 * `values` and `present` must hold `n_features` entries; `probabilities`
 * must be null or hold `n_probabilities` entries.
 */
enum RgStatus rg_classifier_predict(const struct RgClassifier *clf,
                                    const double *values,
                                    const uint8_t *present,
                                    size_t n_features,
                                    size_t *out_class,
                                    double *probabilities,
                                    size_t n_probabilities);

/**
 * Loads an `error_models.json` written by the `fit-errors` subcommand.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RgStatus rg_error_models_load(const char *path, struct RgErrorModelSet **out);

/**
 * # Safety
 * `set` must be null or a handle from [`rg_error_models_load`] not yet freed.
 */
void rg_error_models_free(struct RgErrorModelSet *set);

/**
 * Gaussian model used for a signal in an environment, falling back to the
 * pooled model when the group was not fitted.
 *
 * # Safety
 * String arguments must be NUL-terminated (`class` may be null);
 * `out_mean_m` and `out_var_m2` must be writable.
 */
enum RgStatus rg_error_models_lookup(const struct RgErrorModelSet *set,
                                     const char *class_,
                                     const char *satellite,
                                     const char *band,
                                     double *out_mean_m,
                                     double *out_var_m2);

/**
 * Error for one signal at one instant, identical to the value the
 * `simulate` subcommand writes for the same seed.
 *
 * # Safety
 * As for [`rg_error_models_lookup`]; `out_error_m` must be writable.
 */
enum RgStatus rg_error_models_sample(const struct RgErrorModelSet *set,
                                     const char *class_,
                                     const char *satellite,
                                     const char *band,
                                     int32_t gps_week,
                                     double gps_sow,
                                     uint64_t seed,
                                     double *out_error_m);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RAILGNSS_H */
