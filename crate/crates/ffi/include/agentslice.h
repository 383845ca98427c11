/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef AGENTSLICE_H
#define AGENTSLICE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes shared by every entry point.
 */
typedef enum AsStatus {
  AS_STATUS_OK = 0,
  AS_STATUS_NULL_ARGUMENT = 1,
  AS_STATUS_INVALID_UTF8 = 2,
  AS_STATUS_INVALID_JSON = 3,
  AS_STATUS_WORKSPACE = 4,
  AS_STATUS_CRITERION = 5,
  AS_STATUS_LLM = 6,
  AS_STATUS_PIPELINE = 7,
  AS_STATUS_PANIC = 8,
} AsStatus;

/**
 * A loaded workspace together with its syntax index.
 */
typedef struct AsWorkspace AsWorkspace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string; do not free.
 */
const char *as_version(void);

/**
 * Message of the last failure on this thread, or NULL. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *as_last_error(void);

/**
 * Releases a string returned by the library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void as_string_free(char *s);

/**
 * Loads every Java and Python file under `root`.
 *
 * # Safety
 * `root` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AsStatus as_workspace_open_dir(const char *root, struct AsWorkspace **out);

/**
 * Loads a workspace from a JSON array of `{"path", "content", "language"?}`.
 *
 * # Safety
 * `files_json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AsStatus as_workspace_from_json(const char *files_json, struct AsWorkspace **out);

/**
 * Releases a workspace handle. NULL is ignored.
 *
 * # Safety
 * `ws` must come from this library and not have been freed.
 */
void as_workspace_free(struct AsWorkspace *ws);

/**
 * Number of files in the workspace; 0 for NULL.
 *
 * # Safety
 * `ws` must be NULL or a live handle.
 */
size_t as_workspace_file_count(const struct AsWorkspace *ws);

/**
 * Every function, method, constructor and lambda in the workspace, as a
 * JSON array.
 *
 * # Safety
 * `ws` must be a live handle and `out` a valid pointer.
 */
enum AsStatus as_list_functions(const struct AsWorkspace *ws, char **out);

/**
 * The initial region for a criterion at `file:line`, as a JSON object.
 *
 * # Safety
 * Pointers must be valid; `file` NUL-terminated.
 */
enum AsStatus as_criterion_scope(const struct AsWorkspace *ws,
                                 const char *file,
                                 size_t line,
                                 char **out);

/**
 * Call sites in a code fragment (`language` is "java" or "python"), as a
 * JSON array. `file` names where the fragment came from.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum AsStatus as_extract_invocations(const struct AsWorkspace *ws,
                                     const char *language,
                                     const char *file,
                                     const char *fragment,
                                     char **out);

/**
 * Runs the full pipeline answering every model call from the cassette at
 * `cassette_path`. `variables` is a comma-separated list and may be empty
 * or NULL. `config_json` may be NULL for the default configuration. On
 * success `out` receives the slice document; on `AS_STATUS_PIPELINE` it
 * receives `{"error", "last_valid_slice"}`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum AsStatus as_slice_replay(const struct AsWorkspace *ws,
                              const char *file,
                              size_t line,
                              const char *variables,
                              const char *cassette_path,
                              const char *config_json,
                              char **out);

/**
 * Scores a slice document against one benchmark instance (both JSON) and
 * returns `{"metrics", "counts"}`.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum AsStatus as_score(const char *instance_json, const char *slice_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AGENTSLICE_H */
