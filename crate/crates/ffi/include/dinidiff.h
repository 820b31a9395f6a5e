#ifndef DINIDIFF_H
#define DINIDIFF_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  DINIDIFF_STATUS_OK = 0,
  DINIDIFF_STATUS_NULL_POINTER = 1,
  DINIDIFF_STATUS_INVALID_UTF8 = 2,
  DINIDIFF_STATUS_PARSE = 3,
  DINIDIFF_STATUS_PRECONDITION = 4,
  DINIDIFF_STATUS_NOT_EXACT = 5,
  DINIDIFF_STATUS_DOMAIN = 6,
  DINIDIFF_STATUS_BUDGET = 7,
  DINIDIFF_STATUS_VIOLATION = 8,
  DINIDIFF_STATUS_PANIC = 9,
} DinidiffStatus;

/**
 * Opaque rational function on `[0, 1]`.
 */
typedef struct DinidiffFunction DinidiffFunction;

/**
 * Opaque martingale.
 */
typedef struct DinidiffMartingale DinidiffMartingale;

/**
 * Opaque sawtooth sum built from an effective cover.
 */
typedef struct DinidiffSawtooth DinidiffSawtooth;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the library.
 */
const char *dinidiff_last_error(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void dinidiff_string_free(char *s);

/**
 * Library version as a static string.
 */
const char *dinidiff_version(void);

/**
 * Builds a martingale from a JSON descriptor.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
DinidiffStatus dinidiff_martingale_from_json(const char *json, DinidiffMartingale **out);

/**
 * # Safety
 * `m` must be null or a handle from [`dinidiff_martingale_from_json`] not yet freed.
 */
void dinidiff_martingale_free(DinidiffMartingale *m);

/**
 * # Safety
 * `m` must be a live handle; `out` must be writable.
 */
DinidiffStatus dinidiff_martingale_base(const DinidiffMartingale *m, uint32_t *out);

/**
 * `M(σ)` as a rational string, exact for exact martingales and within `2^-precision` otherwise.
 * Free the result with [`dinidiff_string_free`].
 *
 * # Safety
 * `m` must be a live handle, `digits` must point to `len` bytes (or be null with `len == 0`),
 * and `out` must be writable.
 */
DinidiffStatus dinidiff_martingale_eval(const DinidiffMartingale *m,
                                        const uint8_t *digits,
                                        size_t len,
                                        uint32_t precision,
                                        char **out);

/**
 * Exact fairness on all strings shorter than `depth`; `passed` is set to 1 or 0.
 *
 * # Safety
 * `m` must be a live handle; `passed` must be writable.
 */
DinidiffStatus dinidiff_martingale_check_fairness(const DinidiffMartingale *m,
                                                  uint32_t depth,
                                                  uint32_t precision,
                                                  int32_t *passed);

/**
 * Builds a function from a JSON descriptor.
 *
 * # Safety
 * `json` must be a nul-terminated string; `out` must be writable.
 */
DinidiffStatus dinidiff_function_from_json(const char *json, DinidiffFunction **out);

/**
 * # Safety
 * `f` must be null or a handle from [`dinidiff_function_from_json`] not yet freed.
 */
void dinidiff_function_free(DinidiffFunction *f);

/**
 * `f(x)` for a rational string `x`, within `2^-precision` unless the function is exact.
 *
 * # Safety
 * `f` must be a live handle, `x` a nul-terminated string, `out` writable.
 */
DinidiffStatus dinidiff_function_value(const DinidiffFunction *f,
                                       const char *x,
                                       uint32_t precision,
                                       char **out);

/**
 * Refines the cover given as JSON, or the built-in cover around 1/3 when `json` is null.
 *
 * # Safety
 * `json` must be null or a nul-terminated string; `out` must be writable.
 */
DinidiffStatus dinidiff_sawtooth_new(const char *json, DinidiffSawtooth **out);

/**
 * # Safety
 * `s` must be null or a handle from [`dinidiff_sawtooth_new`] not yet freed.
 */
void dinidiff_sawtooth_free(DinidiffSawtooth *s);

/**
 * Number of cover levels.
 *
 * # Safety
 * `s` must be a live handle; `out` must be writable.
 */
DinidiffStatus dinidiff_sawtooth_levels(const DinidiffSawtooth *s, size_t *out);

/**
 * Exact value of the truncated sum at a rational string `x`.
 *
 * # Safety
 * `s` must be a live handle, `x` a nul-terminated string, `out` writable.
 */
DinidiffStatus dinidiff_sawtooth_eval(const DinidiffSawtooth *s, const char *x, char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* DINIDIFF_H */
