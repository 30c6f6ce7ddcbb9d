#ifndef EXLENS_H
#define EXLENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call.
typedef enum {
  EXLENS_STATUS_OK = 0,
  // A required pointer argument was null.
  EXLENS_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  EXLENS_STATUS_INVALID_UTF8 = 2,
  // A request document was not valid JSON for its type.
  EXLENS_STATUS_INVALID_JSON = 3,
  // The request was well formed but cannot be served (length, mask,
  // bounds, head selection, k).
  EXLENS_STATUS_INVALID_REQUEST = 4,
  // The sentence was empty.
  EXLENS_STATUS_EMPTY_INPUT = 5,
  // The index was built with a different model.
  EXLENS_STATUS_INCOMPATIBLE = 6,
  // A file could not be read or failed its integrity checks.
  EXLENS_STATUS_IO = 7,
  // The model or index files are malformed.
  EXLENS_STATUS_FORMAT = 8,
  EXLENS_STATUS_INTERNAL = 9,
} ExlensStatus;

// A model bound to a built index, ready to search.
typedef struct ExlensEngine ExlensEngine;

// A loaded model.
typedef struct ExlensModel ExlensModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failed call on this thread, or null. Valid
// until the next exlens call on the same thread.
const char *exlens_last_error(void);

// Library version as a static string.
const char *exlens_version(void);

// Releases a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void exlens_string_free(char *s);

// Loads a model directory. `vocab_path` may be null to use
// `<model_dir>/vocab.txt`.
//
// # Safety
// String arguments must be null-terminated; `out` must be writable.
ExlensStatus exlens_model_open(const char *model_dir, const char *vocab_path, ExlensModel **out);

// Releases a model. Engines opened from it stay valid. Null is ignored.
//
// # Safety
// `model` must come from [`exlens_model_open`] and not have been freed.
void exlens_model_free(ExlensModel *model);

// Writes `{"config": ..., "fingerprint": ...}` to `out_json`.
//
// # Safety
// `model` must be a live handle; `out_json` must be writable.
ExlensStatus exlens_model_info(const ExlensModel *model, char **out_json);

// Runs an analyze request (same JSON as `POST /api/analyze`).
//
// # Safety
// `model` must be a live handle, `request_json` null-terminated and
// `out_json` writable.
ExlensStatus exlens_analyze(const ExlensModel *model, const char *request_json, char **out_json);

// Opens the index directory written by `exlens build-index` for `model`.
//
// # Safety
// `model` must be a live handle, `index_dir` null-terminated and `out`
// writable.
ExlensStatus exlens_engine_open(const ExlensModel *model,
                                const char *index_dir,
                                ExlensEngine **out);

// Releases an engine. Null is ignored.
//
// # Safety
// `engine` must come from [`exlens_engine_open`] and not have been freed.
void exlens_engine_free(ExlensEngine *engine);

// Runs a search request (same JSON as `POST /api/search`). Engines may be
// shared across threads.
//
// # Safety
// `engine` must be a live handle, `request_json` null-terminated and
// `out_json` writable.
ExlensStatus exlens_search(const ExlensEngine *engine, const char *request_json, char **out_json);

// Writes the `GET /api/info` document to `out_json`.
//
// # Safety
// `engine` must be a live handle; `out_json` must be writable.
ExlensStatus exlens_engine_info(const ExlensEngine *engine, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXLENS_H */
