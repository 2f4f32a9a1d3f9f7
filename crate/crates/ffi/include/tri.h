#ifndef TRI_H
#define TRI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes of every fallible call.
 */
typedef enum TriStatus {
  TRI_STATUS_OK = 0,
  TRI_STATUS_NULL_ARGUMENT = 1,
  TRI_STATUS_INVALID_UTF8 = 2,
  TRI_STATUS_INVALID_ARGUMENT = 3,
  TRI_STATUS_PARSE = 4,
  TRI_STATUS_CORPUS = 5,
  TRI_STATUS_RUN = 6,
  TRI_STATUS_OUT_OF_RANGE = 7,
  TRI_STATUS_PANIC = 8,
} TriStatus;

/**
 * Outcome of a property evaluation.
 */
typedef enum TriTruth {
  TRI_TRUTH_FALSE = 0,
  TRI_TRUTH_TRUE = 1,
  TRI_TRUTH_ANGELIC = 2,
  TRI_TRUTH_DEMONIC = 3,
  TRI_TRUTH_UNDEFINED = 4,
} TriTruth;

/**
 * Decisions and metrics of one session run.
 */
typedef struct TriReport TriReport;

/**
 * A problem manifest with its transcript directory, run offline.
 */
typedef struct TriSession TriSession;

/**
 * Borrowed view of one decision; strings belong to the report.
 */
typedef struct TriDecisionView {
  const char *problem_id;
  const char *strategy;
  /**
   * Null when the strategy abstained.
   */
  const char *class_id;
  /**
   * Abstention reason, or null.
   */
  const char *reason;
  bool selected;
} TriDecisionView;

/**
 * Select-or-abstain confusion counts.
 */
typedef struct TriCounts {
  uint64_t n1;
  uint64_t n2;
  uint64_t n3;
  uint64_t n4;
  uint64_t n5;
} TriCounts;

/**
 * Metrics of a strategy; `NAN` marks an undefined `0/0` ratio.
 */
typedef struct TriMetrics {
  double reliable_accuracy;
  double overall_accuracy;
  double abstention_rate;
  double precision_abs;
  double recall_abs;
  double f1_abs;
} TriMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a
 * success. Valid until the next call on this thread.
 */
const char *tri_last_error(void);

/**
 * Library version as a static string.
 */
const char *tri_version(void);

/**
 * Opens a manifest. `transcripts` may be null when every problem bundles
 * its inputs and samples.
 *
 * # Safety
 *
 * `manifest` and a non-null `transcripts` must be NUL-terminated strings;
 * `out` must be valid for writes.
 */
enum TriStatus tri_session_open(const char *manifest,
                                const char *transcripts,
                                struct TriSession **out);

/**
 * Number of problems in the session.
 *
 * # Safety
 *
 * `session` must be null or a live session handle.
 */
size_t tri_session_len(const struct TriSession *session);

/**
 * Releases a session; null is ignored.
 *
 * # Safety
 *
 * `session` must be null or a handle from [`tri_session_open`] not freed
 * before.
 */
void tri_session_free(struct TriSession *session);

/**
 * Decides every problem offline. `strategies` is a comma-separated list
 * or null for all; `jobs` is the number of problems run concurrently.
 * Metrics are computed when every problem has a judge.
 *
 * # Safety
 *
 * `session` must be a live session handle, `strategies` null or a
 * NUL-terminated string, `out` valid for writes.
 */
enum TriStatus tri_session_run(const struct TriSession *session,
                               const char *strategies,
                               size_t jobs,
                               struct TriReport **out);

/**
 * Number of decisions in the report (problems times strategies).
 *
 * # Safety
 *
 * `report` must be null or a live report handle.
 */
size_t tri_report_len(const struct TriReport *report);

/**
 * Number of problems skipped after a soft failure.
 *
 * # Safety
 *
 * `report` must be null or a live report handle.
 */
size_t tri_report_errors(const struct TriReport *report);

/**
 * Decision `index`, in problem order then strategy order.
 *
 * # Safety
 *
 * `report` must be a live report handle and `out` valid for writes.
 */
enum TriStatus tri_report_get(const struct TriReport *report,
                              size_t index,
                              struct TriDecisionView *out);

/**
 * Decision records as line-delimited JSON, owned by the report.
 *
 * # Safety
 *
 * `report` must be null or a live report handle.
 */
const char *tri_report_json(const struct TriReport *report);

/**
 * Confusion counts and metrics of one strategy.
 *
 * # Safety
 *
 * `report` must be a live report handle, `strategy` a NUL-terminated
 * string, `counts` and `out` null or valid for writes.
 */
enum TriStatus tri_report_metrics(const struct TriReport *report,
                                  const char *strategy,
                                  struct TriCounts *counts,
                                  struct TriMetrics *out);

/**
 * Releases a report; null is ignored.
 *
 * # Safety
 *
 * `report` must be null or a handle from [`tri_session_run`] not freed
 * before.
 */
void tri_report_free(struct TriReport *report);

/**
 * Metrics of arbitrary confusion counts.
 *
 * # Safety
 *
 * `counts` must be readable and `out` valid for writes.
 */
enum TriStatus tri_metrics(const struct TriCounts *counts, struct TriMetrics *out);

/**
 * Natural-log entropy of class masses that sum to one.
 *
 * # Safety
 *
 * `masses` must point to `len` readable doubles; `out` valid for writes.
 */
enum TriStatus tri_entropy(const double *masses, size_t len, double *out);

/**
 * Evaluates a closed property term in s-expression form that makes no
 * program calls. The angelic fraction is `numer/denom`.
 *
 * # Safety
 *
 * `term` must be a NUL-terminated string and `out` valid for writes.
 */
enum TriStatus tri_property_eval(const char *term,
                                 uint64_t numer,
                                 uint64_t denom,
                                 enum TriTruth *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRI_H */
