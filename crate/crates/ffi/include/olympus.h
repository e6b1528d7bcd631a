/* SPDX-License-Identifier: Apache-2.0 */

#ifndef OLYMPUS_H
#define OLYMPUS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum OlympusStatus {
  OLYMPUS_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  OLYMPUS_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  OLYMPUS_STATUS_INVALID_UTF8 = 2,
  /**
   * The operation failed; see the last error code and message.
   */
  OLYMPUS_STATUS_FAILED = 3,
  /**
   * The library panicked. The handle should not be used further.
   */
  OLYMPUS_STATUS_PANIC = 4,
} OlympusStatus;

/**
 * Opaque service handle.
 */
typedef struct OlympusService OlympusService;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Opens (creating if needed) a service persisted under `data_dir`.
 *
 * # Safety
 * `data_dir` is a NUL-terminated string; `out` points to writable storage.
 */
enum OlympusStatus olympus_open(const char *data_dir, struct OlympusService **out);

/**
 * Opens a service that keeps everything in memory.
 *
 * # Safety
 * `out` points to writable storage.
 */
enum OlympusStatus olympus_open_in_memory(struct OlympusService **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `svc` is null or a handle not yet closed.
 */
void olympus_close(struct OlympusService *svc);

/**
 * Performs one API request, exactly as the HTTP server would.
 *
 * `token`, `body` and `content_type` may be null. `path` may include a
 * query string. On `OLYMPUS_STATUS_OK` the HTTP status is written to
 * `out_status` and the response body to `out_body`/`out_len`, including
 * for error responses, whose body is the JSON error object.
 *
 * # Safety
 * String arguments are null or NUL-terminated; `body` points to `body_len`
 * readable bytes when non-null; out pointers are writable.
 */
enum OlympusStatus olympus_request(const struct OlympusService *svc,
                                   const char *method,
                                   const char *path,
                                   const char *token,
                                   const char *content_type,
                                   const uint8_t *body,
                                   size_t body_len,
                                   uint16_t *out_status,
                                   uint8_t **out_body,
                                   size_t *out_len);

/**
 * Creates or updates a user and returns a fresh bearer token.
 * `roles` is a comma-separated list such as `"crowd_worker,student"`.
 *
 * # Safety
 * String arguments are NUL-terminated; `out_token` is writable.
 */
enum OlympusStatus olympus_issue_token(const struct OlympusService *svc,
                                       const char *display_name,
                                       const char *roles,
                                       char **out_token);

/**
 * Writes the interchange document as JSON.
 *
 * # Safety
 * `out_json` is writable.
 */
enum OlympusStatus olympus_export_json(const struct OlympusService *svc, char **out_json);

/**
 * Imports a document. `mode` is `"replace"` or `"fail_on_conflict"`.
 * Asset bytes must already be in the store. The summary is returned as
 * JSON in `out_summary`, which may be null.
 *
 * # Safety
 * String arguments are NUL-terminated; `out_summary` is null or writable.
 */
enum OlympusStatus olympus_import_json(const struct OlympusService *svc,
                                       const char *json,
                                       const char *mode,
                                       char **out_summary);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *olympus_last_error_message(void);

/**
 * Stable code of the last failure on this thread (for example
 * `"not_found"`), or null. Same lifetime as the message.
 */
const char *olympus_last_error_code(void);

/**
 * # Safety
 * `s` is null or a string returned by this library, not yet freed.
 */
void olympus_string_free(char *s);

/**
 * # Safety
 * `buf`/`len` are null/any or exactly a buffer returned by
 * `olympus_request`, not yet freed.
 */
void olympus_buffer_free(uint8_t *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OLYMPUS_H */
