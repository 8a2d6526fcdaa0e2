#ifndef MINIMMIT_H
#define MINIMMIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MmStatus {
  MM_OK = 0,
  MM_NULL_ARG = 1,
  MM_INVALID_UTF8 = 2,
  MM_CONFIG_ERROR = 3,
  MM_PARSE_ERROR = 4,
  /**
   * The call succeeded and at least one check failed.
   */
  MM_CHECK_FAILED = 5,
  MM_PANIC = 6,
} MmStatus;

typedef enum MmProgression {
  /**
   * Advance on 2f+1 votes.
   */
  MM_MINI = 0,
  /**
   * Advance on n-f votes.
   */
  MM_LARGE = 1,
} MmProgression;

/**
 * A scenario configuration; validated when run.
 */
typedef struct MmScenario MmScenario;

/**
 * A completed run or a parsed trace file.
 */
typedef struct MmTrace MmTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a scenario from JSON. On success `*out` owns a new handle.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_scenario_from_json(const char *json, struct MmScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
void mm_scenario_free(struct MmScenario *scenario);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_scenario_set_seed(struct MmScenario *scenario, uint64_t seed);

/**
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_scenario_set_progression(struct MmScenario *scenario,
                                          enum MmProgression progression);

/**
 * Simulates the scenario. On success `*out` owns a new trace handle.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_run(const struct MmScenario *scenario, struct MmTrace **out);

/**
 * Parses a JSON Lines trace. On success `*out` owns a new handle.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_trace_from_jsonl(const char *jsonl, struct MmTrace **out);

/**
 * Releases a trace. Null is ignored.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
void mm_trace_free(struct MmTrace *trace);

/**
 * Number of events in the trace; 0 for null.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
size_t mm_trace_event_count(const struct MmTrace *trace);

/**
 * Serializes the trace as JSON Lines into `*out`.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_trace_to_jsonl(const struct MmTrace *trace, char **out);

/**
 * Runs every check and writes the verdicts as JSON into `*out`.
 * Returns `MM_CHECK_FAILED` when any check fails; `*out` is still set.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_trace_check(const struct MmTrace *trace, char **out);

/**
 * Computes latency metrics, skipping `warmup_views` views, as JSON into `*out`.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_trace_metrics(const struct MmTrace *trace, uint64_t warmup_views, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
void mm_string_free(char *s);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into this library on the same thread.
 */
const char *mm_last_error(void);

/**
 * Votes needed for an M-notarization or a nullification.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_m_quorum(uint32_t n, uint32_t f, uint32_t *out);

/**
 * Votes needed for an L-notarization.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_l_quorum(uint32_t n, uint32_t f, uint32_t *out);

/**
 * Leader of `view` among `n` processors. View 0 has no leader.
 *
 * # Safety
 *
 * Pointer arguments must be null or valid for the access described, and
 * handles must come from this library and not yet be freed.
 */
enum MmStatus mm_leader(uint64_t view, uint32_t n, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MINIMMIT_H */
