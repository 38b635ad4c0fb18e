#ifndef GROUNDQA_H
#define GROUNDQA_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum GqStatus {
  GQ_STATUS_OK = 0,
  GQ_STATUS_NULL_POINTER = 1,
  GQ_STATUS_INVALID_UTF8 = 2,
  GQ_STATUS_INVALID_ARGUMENT = 3,
  GQ_STATUS_NOT_FOUND = 4,
  GQ_STATUS_CONFIG = 5,
  GQ_STATUS_ENGINE = 6,
  GQ_STATUS_PANIC = 7,
} GqStatus;

// Which text metric [`gq_metric`] computes.
typedef enum GqMetric {
  GQ_METRIC_TOKEN_F1 = 0,
  GQ_METRIC_EXACT_MATCH = 1,
  GQ_METRIC_METEOR = 2,
} GqMetric;

// Opaque engine handle with its live sessions.
typedef struct GqEngine GqEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next call into this library on the same thread.
const char *gq_last_error(void);

// Library version as a static string.
const char *gq_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void gq_string_free(char *s);

// Engine over the bundled sample manual with the scripted offline
// provider.
//
// # Safety
// `out` must be a valid pointer.
enum GqStatus gq_engine_new_fixture(struct GqEngine **out);

// Engine from a TOML config file (null for defaults); environment
// overrides apply.
//
// # Safety
// `config_path` must be null or a NUL-terminated string; `out` must be a
// valid pointer.
enum GqStatus gq_engine_new(const char *config_path, struct GqEngine **out);

// # Safety
// `engine` must be null or a handle from this library, freed only once.
void gq_engine_free(struct GqEngine *engine);

// Starts a session. `config_json` is a JSON system config or null for the
// engine defaults; the new session id is written to `out_id`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum GqStatus gq_session_create(const struct GqEngine *engine,
                                const char *config_json,
                                char **out_id);

// Handles one user message and writes the turn as JSON to `out_json`.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum GqStatus gq_session_send(const struct GqEngine *engine,
                              const char *session_id,
                              const char *text,
                              char **out_json);

// Top-`k` retrieval. `mode` is "bm25", "dense", "hybrid_rrf" or null for the
// engine default. Writes a JSON array of results.
//
// # Safety
// Pointers must be valid; strings NUL-terminated.
enum GqStatus gq_search(const struct GqEngine *engine,
                        const char *query,
                        uintptr_t k,
                        const char *mode,
                        char **out_json);

// Extraction Score of `answer` against `n` paragraphs with the default cost
// table and stopword list. Input-class tokens come from the paragraphs, or
// from `utterance` when it is not null.
//
// # Safety
// `paragraphs` must point to `n` NUL-terminated strings.
enum GqStatus gq_extraction_score(const char *answer,
                                  const char *const *paragraphs,
                                  uintptr_t n,
                                  const char *utterance,
                                  double *out_score);

// Scores `prediction` against `reference`.
//
// # Safety
// Strings must be NUL-terminated; `out` must be valid.
enum GqStatus gq_metric(enum GqMetric metric,
                        const char *prediction,
                        const char *reference,
                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUNDQA_H */
