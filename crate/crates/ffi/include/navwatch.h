#ifndef NAVWATCH_H
#define NAVWATCH_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NwStatus {
  NW_STATUS_OK = 0,
  NW_STATUS_NULL_POINTER = 1,
  NW_STATUS_INVALID_UTF8 = 2,
  NW_STATUS_INVALID_ARGUMENT = 3,
  NW_STATUS_PARSE_ERROR = 4,
  NW_STATUS_PIPELINE_ERROR = 5,
  NW_STATUS_OUT_OF_RANGE = 6,
  NW_STATUS_PANIC = 7,
} NwStatus;

typedef enum NwRegion {
  NW_REGION_LEFT = 0,
  NW_REGION_RIGHT = 1,
  NW_REGION_FRONT = 2,
  NW_REGION_GROUND = 3,
} NwRegion;

typedef enum NwOutputMode {
  NW_OUTPUT_MODE_FULL = 0,
  NW_OUTPUT_MODE_VOICE = 1,
  NW_OUTPUT_MODE_ANNOTATION = 2,
} NwOutputMode;

/**
 * Result of one run: per-frame scores, baseline labels, and the event log.
 */
typedef struct NwReport NwReport;

/**
 * Configured pipeline; reusable across runs.
 */
typedef struct NwSession NwSession;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string.
 */
const char *nw_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *nw_last_error(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void nw_string_free(char *s);

/**
 * Region of a detection center.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum NwStatus nw_assign_region(double cx, double cy, enum NwRegion *out);

/**
 * Rule-baseline verdict for one frame given as a feed-format JSON object.
 *
 * # Safety
 * `frame_json` must be a NUL-terminated string; `out_anomaly` valid for writes.
 */
enum NwStatus nw_classify_frame(const char *frame_json, double area_threshold, bool *out_anomaly);

/**
 * Effective frames per second when detection runs every `interval` frames.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum NwStatus nw_effective_fps(double per_detection_ms,
                               uint32_t interval,
                               double overhead_ms,
                               double *out);

/**
 * Parses a model reply and returns its frame-level anomaly score.
 *
 * # Safety
 * `raw` must be a NUL-terminated string; `out_score` valid for writes.
 */
enum NwStatus nw_parse_response(const char *raw, enum NwOutputMode mode, double *out_score);

/**
 * Daily cost in USD for calls of the given token sizes at default prices.
 *
 * # Safety
 * `out_per_day` must be valid for writes.
 */
enum NwStatus nw_estimate_daily_cost(uint64_t prompt_tokens,
                                     uint64_t completion_tokens,
                                     double *out_per_day);

/**
 * Creates a session from `key = value` settings; `config` may be null for
 * defaults (mock backend).
 *
 * # Safety
 * `config` must be null or NUL-terminated; `out` valid for writes.
 */
enum NwStatus nw_session_new(const char *config, struct NwSession **out);

/**
 * # Safety
 * `session` must be null or a handle from [`nw_session_new`], not yet freed.
 */
void nw_session_free(struct NwSession *session);

/**
 * Runs an in-memory feed (one JSON frame per line) through the pipeline.
 * A feed error part way still yields a report for the frames before it,
 * with status [`NwStatus::PipelineError`].
 *
 * # Safety
 * `session` must be a live handle; `feed` NUL-terminated; `out` valid for writes.
 */
enum NwStatus nw_session_run(const struct NwSession *session,
                             const char *feed,
                             struct NwReport **out);

/**
 * # Safety
 * `report` must be null or a handle from [`nw_session_run`], not yet freed.
 */
void nw_report_free(struct NwReport *report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
size_t nw_report_frame_count(const struct NwReport *report);

/**
 * Held model score and baseline label of frame `index`.
 *
 * # Safety
 * `report` must be a live handle; out-pointers valid for writes.
 */
enum NwStatus nw_report_frame(const struct NwReport *report,
                              size_t index,
                              double *out_score,
                              bool *out_label);

/**
 * AUC and AP of the run's scores against the baseline labels.
 *
 * # Safety
 * `report` must be a live handle; out-pointers valid for writes.
 */
enum NwStatus nw_report_metrics(const struct NwReport *report, double *out_auc, double *out_ap);

/**
 * Event log as newline-delimited JSON; free with [`nw_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` valid for writes.
 */
enum NwStatus nw_report_event_log(const struct NwReport *report, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NAVWATCH_H */
