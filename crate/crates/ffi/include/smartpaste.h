#ifndef SMARTPASTE_H
#define SMARTPASTE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_UTF8 = 2,
  SP_STATUS_INVALID_ARGUMENT = 3,
  SP_STATUS_PARSE_ERROR = 4,
  SP_STATUS_PATCH_MISMATCH = 5,
  SP_STATUS_BACKEND_UNAVAILABLE = 6,
  SP_STATUS_INTERNAL = 7,
} SpStatus;

/**
 * Engine plus backend. Opaque to C.
 */
typedef struct SpEngine SpEngine;

/**
 * A suggestion returned by [`sp_engine_suggest`]. Opaque to C.
 */
typedef struct SpSuggestion SpSuggestion;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an engine with an empty scripted backend. `config_json` may be
 * null for defaults.
 *
 * # Safety
 * `config_json` must be null or a NUL-terminated string; `out` must be
 * writable.
 */
enum SpStatus sp_engine_new_scripted(const char *config_json, struct SpEngine **out);

/**
 * Creates an engine that posts prompts to `endpoint`.
 *
 * # Safety
 * String arguments must be null (config only) or NUL-terminated; `out`
 * must be writable.
 */
enum SpStatus sp_engine_new_remote(const char *endpoint,
                                   uint64_t timeout_ms,
                                   const char *config_json,
                                   struct SpEngine **out);

/**
 * # Safety
 * `engine` must be null or come from an `sp_engine_new_*` call, and must not
 * be used afterwards.
 */
void sp_engine_free(struct SpEngine *engine);

/**
 * Maps a prompt to the patch the scripted backend returns for it. Must not
 * run concurrently with other calls on the same engine.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SpStatus sp_engine_add_script(struct SpEngine *engine,
                                   const char *prompt,
                                   const char *patch_text);

/**
 * Renders the prompt the engine would send for a paste. Free `*out` with
 * [`sp_string_free`]. Lines are zero-based and inclusive.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SpStatus sp_engine_prompt(const struct SpEngine *engine,
                               const char *file_path,
                               const char *content,
                               size_t start_line,
                               size_t end_line,
                               char **out);

/**
 * Requests a suggestion. On success `*out` is either a suggestion or null
 * when the engine stayed silent.
 *
 * # Safety
 * Pointers must be valid; strings NUL-terminated.
 */
enum SpStatus sp_engine_suggest(const struct SpEngine *engine,
                                const char *file_path,
                                const char *language,
                                const char *content,
                                size_t start_line,
                                size_t end_line,
                                struct SpSuggestion **out);

/**
 * Patch text of the suggestion, owned by the handle.
 *
 * # Safety
 * `suggestion` must be null or a live handle.
 */
const char *sp_suggestion_patch_text(const struct SpSuggestion *suggestion);

/**
 * Region lines after applying the patch, joined with `\n`, owned by the
 * handle.
 *
 * # Safety
 * `suggestion` must be null or a live handle.
 */
const char *sp_suggestion_preview(const struct SpSuggestion *suggestion);

/**
 * Writes the backend score to `*out`. Returns false when the backend gave
 * none.
 *
 * # Safety
 * `suggestion` must be null or a live handle; `out` must be writable.
 */
bool sp_suggestion_score(const struct SpSuggestion *suggestion, double *out);

/**
 * # Safety
 * `suggestion` must be null or a live handle.
 */
double sp_suggestion_model_latency_ms(const struct SpSuggestion *suggestion);

/**
 * # Safety
 * `suggestion` must be null or a live handle, not used afterwards.
 */
void sp_suggestion_free(struct SpSuggestion *suggestion);

/**
 * Applies patch text to pasted text (lines separated by `\n`).
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum SpStatus sp_apply_patch(const char *pasted_text, const char *patch_text, char **out);

/**
 * Character n-gram F-score (n up to 6, beta 2) on a 0 to 100 scale.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum SpStatus sp_chrf(const char *hypothesis, const char *reference, double *out);

/**
 * Characters inserted plus deleted between two strings.
 *
 * # Safety
 * Strings must be NUL-terminated; `out` must be writable.
 */
enum SpStatus sp_chars_modified(const char *before, const char *after, size_t *out);

/**
 * Selects context lines for a paste under a token budget, using the default
 * length-based token estimate. Writes an ascending array of line indices to
 * `*out_lines` (free with [`sp_lines_free`]) and its length to `*out_len`.
 *
 * # Safety
 * `content` must be NUL-terminated; out pointers must be writable.
 */
enum SpStatus sp_build_context(const char *content,
                               size_t start_line,
                               size_t end_line,
                               size_t budget,
                               size_t **out_lines,
                               size_t *out_len);

/**
 * # Safety
 * `lines` and `len` must come from the same [`sp_build_context`] call.
 */
void sp_lines_free(size_t *lines, size_t len);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void sp_string_free(char *s);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call on the same thread.
 */
const char *sp_last_error_message(void);

/**
 * Library version, statically allocated.
 */
const char *sp_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMARTPASTE_H */
