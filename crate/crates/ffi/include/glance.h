#ifndef GLANCE_H
#define GLANCE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum GlanceStatus {
  GLANCE_STATUS_OK = 0,
  GLANCE_STATUS_NULL_ARGUMENT = 1,
  GLANCE_STATUS_INVALID_ARGUMENT = 2,
  GLANCE_STATUS_IO = 3,
  GLANCE_STATUS_PARSE = 4,
  GLANCE_STATUS_VALIDATION = 5,
  GLANCE_STATUS_PRECONDITION = 6,
  GLANCE_STATUS_RUNTIME = 7,
  GLANCE_STATUS_PANIC = 8,
} GlanceStatus;

/**
 * Built-in driver populations.
 */
typedef enum GlanceProfile {
  GLANCE_PROFILE_MIXED = 0,
  GLANCE_PROFILE_ALL_OWL = 1,
  GLANCE_PROFILE_ALL_LIZARD = 2,
} GlanceProfile;

/**
 * Opaque dataset handle.
 */
typedef struct GlanceDataset GlanceDataset;

typedef struct GlanceMetrics {
  double accuracy;
  double f1;
  double kappa;
} GlanceMetrics;

/**
 * Head rotation in degrees: pitch, yaw, roll.
 */
typedef struct GlanceRotation {
  double rot_x;
  double rot_y;
  double rot_z;
} GlanceRotation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static nul-terminated string.
 */
const char *glance_version(void);

/**
 * Message of the last failed call on this thread, or null after a success.
 * Valid until the next call into the library on this thread.
 */
const char *glance_last_error(void);

/**
 * Load a CSV or JSON dataset (chosen by extension).
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be valid for writes.
 */
enum GlanceStatus glance_dataset_load(const char *path, struct GlanceDataset **out);

/**
 * Generate a built-in synthetic population; `profile` is a [`GlanceProfile`] value.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GlanceStatus glance_dataset_synthesize(uint32_t profile,
                                            size_t subjects,
                                            uint64_t seed,
                                            struct GlanceDataset **out);

/**
 * Generate a dataset from a scenario JSON document.
 *
 * # Safety
 * `scenario_json` must be a nul-terminated string; `out` must be valid for writes.
 */
enum GlanceStatus glance_dataset_synthesize_json(const char *scenario_json,
                                                 struct GlanceDataset **out);

/**
 * Release a dataset handle. Null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle from this library that has not been freed.
 */
void glance_dataset_free(struct GlanceDataset *ds);

/**
 * Number of samples.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be valid for writes.
 */
enum GlanceStatus glance_dataset_len(const struct GlanceDataset *ds, size_t *out);

/**
 * Number of distinct subjects.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be valid for writes.
 */
enum GlanceStatus glance_dataset_subject_count(const struct GlanceDataset *ds, size_t *out);

/**
 * Samples labelled with `region` (for example "center-stack").
 *
 * # Safety
 * `ds` must be a live handle; `region` a nul-terminated string; `out` valid for writes.
 */
enum GlanceStatus glance_dataset_count_label(const struct GlanceDataset *ds,
                                             const char *region_name,
                                             size_t *out);

/**
 * Write the dataset as CSV or JSON (chosen by extension).
 *
 * # Safety
 * `ds` must be a live handle; `path` a nul-terminated string.
 */
enum GlanceStatus glance_dataset_write(const struct GlanceDataset *ds, const char *path);

/**
 * New dataset holding only samples of the two regions.
 *
 * # Safety
 * `ds` must be a live handle; `a` and `b` nul-terminated strings; `out` valid for writes.
 */
enum GlanceStatus glance_dataset_filter_pair(const struct GlanceDataset *ds,
                                             const char *a,
                                             const char *b,
                                             struct GlanceDataset **out);

/**
 * Accuracy, F1 and Cohen's kappa of a binary confusion table.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GlanceStatus glance_metrics_from_counts(uint64_t tp,
                                             uint64_t fp,
                                             uint64_t fn_,
                                             uint64_t tn,
                                             struct GlanceMetrics *out);

/**
 * Head rotation from seven merged landmarks with the built-in reference face.
 *
 * `xy` holds 14 values (x, y pairs in pixels) in the order right-eye-outer,
 * right-eye-inner, left-eye-outer, left-eye-inner, nose-tip, mouth-right,
 * mouth-left.
 *
 * # Safety
 * `xy` must point to 14 readable doubles; `out` must be valid for writes.
 */
enum GlanceStatus glance_estimate_rotation(const double *xy, struct GlanceRotation *out);

/**
 * Run one Monte-Carlo experiment.
 *
 * `setup_json` is an experiment setup object (class_a, class_b, condition,
 * plan, normalize, optional balance_scope). `classifier` is one of "knn",
 * "forest", "mlp", "hmm". `params_json` may be null for defaults. The mean
 * metrics go to `mean`; when `report_json` is non-null it receives the full
 * report, to be released with [`glance_string_free`].
 *
 * # Safety
 * `ds` must be a live handle; string arguments nul-terminated or null where
 * allowed; output pointers valid for writes or null where allowed.
 */
enum GlanceStatus glance_run_experiment(const struct GlanceDataset *ds,
                                        const char *setup_json,
                                        const char *classifier,
                                        const char *params_json,
                                        struct GlanceMetrics *mean,
                                        char **report_json);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library that has not been freed.
 */
void glance_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GLANCE_H */
