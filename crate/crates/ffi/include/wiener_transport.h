#ifndef WIENER_TRANSPORT_H
#define WIENER_TRANSPORT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum WtStatus {
  WT_STATUS_OK = 0,
  WT_STATUS_NULL_POINTER = 1,
  WT_STATUS_INVALID_UTF8 = 2,
  WT_STATUS_INVALID_PRESET = 3,
  WT_STATUS_DIMENSION = 4,
  WT_STATUS_NUMERICAL = 5,
  WT_STATUS_INVALID_INPUT = 6,
  WT_STATUS_IO = 7,
  WT_STATUS_PANIC = 8,
} WtStatus;

/**
 * Verdict of an inequality check.
 */
typedef enum WtVerdict {
  WT_VERDICT_HOLDS = 0,
  WT_VERDICT_HOLDS_WITH_EQUALITY = 1,
  WT_VERDICT_VIOLATED = 2,
} WtVerdict;

/**
 * Opaque experiment config.
 */
typedef struct WtConfig WtConfig;

/**
 * Opaque experiment report.
 */
typedef struct WtReport WtReport;

/**
 * Two estimated sides of `lhs <= rhs` and their verdict.
 */
typedef struct WtInequality {
  double lhs;
  double lhs_stderr;
  double rhs;
  double rhs_stderr;
  double slack;
  enum WtVerdict verdict;
} WtInequality;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *wt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *wt_version(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void wt_string_free(char *s);

/**
 * Parse a JSON experiment config.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum WtStatus wt_config_from_json(const char *json, struct WtConfig **out);

/**
 * Apply one `path=value` override, e.g. `params.eps=1.5`.
 *
 * # Safety
 * `config` must be a live handle; `assignment` a NUL-terminated string.
 */
enum WtStatus wt_config_set(struct WtConfig *config, const char *assignment);

/**
 * Hash naming the run's output directory, as a string to free with
 * `wt_string_free`.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum WtStatus wt_config_hash(const struct WtConfig *config, char **out);

/**
 * # Safety
 * `config` must be null or a live handle, not used afterwards.
 */
void wt_config_free(struct WtConfig *config);

/**
 * Run the experiment in memory.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum WtStatus wt_execute(const struct WtConfig *config, struct WtReport **out);

/**
 * Run the experiment and write its artifacts under the output root.
 *
 * # Safety
 * `config` must be a live handle; `out` must be writable.
 */
enum WtStatus wt_run(const struct WtConfig *config, struct WtReport **out);

/**
 * 1 if every check passed, 0 otherwise, -1 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
int32_t wt_report_pass(const struct WtReport *report);

/**
 * Number of checks in the report, 0 for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t wt_report_check_count(const struct WtReport *report);

/**
 * The report document, byte-identical to `report.json`. Owned by the
 * handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *wt_report_json(const struct WtReport *report);

/**
 * # Safety
 * `report` must be null or a live handle, not used afterwards.
 */
void wt_report_free(struct WtReport *report);

/**
 * `det_2(I + A)` from the eigenvalues of `A`.
 *
 * # Safety
 * `eigenvalues` must point to `len` doubles; `out` must be writable.
 */
enum WtStatus wt_det2(const double *eigenvalues, size_t len, double *out);

/**
 * Transport cost against twice the entropy for the density preset `preset`
 * in dimension `dim`, with `n` samples.
 *
 * # Safety
 * `preset` must be a NUL-terminated string; `out` must be writable.
 */
enum WtStatus wt_talagrand(const char *preset,
                           size_t dim,
                           size_t n,
                           uint64_t seed,
                           struct WtInequality *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WIENER_TRANSPORT_H */
