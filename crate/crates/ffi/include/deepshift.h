#ifndef DEEPSHIFT_H
#define DEEPSHIFT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_INPUT = 2,
  DS_STATUS_WINDOW_UNDERFLOW = 3,
  DS_STATUS_STALE_CACHE = 4,
  DS_STATUS_PARSE = 5,
  DS_STATUS_INFEASIBLE = 6,
  DS_STATUS_PANIC = 7,
} DsStatus;

/**
 * Streaming engine with cached layer activations.
 */
typedef struct DsEngine DsEngine;

/**
 * Immutable network weights.
 */
typedef struct DsNetwork DsNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the calling thread's most recent failure; empty if none.
 * The pointer stays valid until the thread's next failing call.
 */
const char *ds_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ds_version(void);

/**
 * Parse a model file (JSON text) into a network handle.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DsStatus ds_network_from_json(const char *json, struct DsNetwork **out);

/**
 * Input channels of the first layer; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t ds_network_input_channels(const struct DsNetwork *net);

/**
 * Output channels of the deepest layer; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t ds_network_output_channels(const struct DsNetwork *net);

/**
 * Number of layers; 0 for a null handle.
 *
 * # Safety
 * `net` must be null or a live handle.
 */
size_t ds_network_depth(const struct DsNetwork *net);

/**
 * # Safety
 * `net` must be null or a handle not yet freed.
 */
void ds_network_free(struct DsNetwork *net);

/**
 * Create an engine retaining `deepest_retained` frames of the deepest
 * layer. The engine copies the weights; `net` may be freed afterwards.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum DsStatus ds_engine_new(const struct DsNetwork *net,
                            size_t deepest_retained,
                            struct DsEngine **out);

/**
 * Push one input frame of `len` values. When the deepest layer produced
 * a frame it is copied to `out` (`out_len` must equal the output channel
 * count) and `*produced` is set to true.
 *
 * # Safety
 * `engine` must be live; `frame` must point to `len` doubles and `out` to
 * `out_len` doubles; `produced` must be valid.
 */
enum DsStatus ds_engine_push(struct DsEngine *engine,
                             const double *frame,
                             size_t len,
                             double *out,
                             size_t out_len,
                             bool *produced);

/**
 * Swap in new weights of identical shape, discarding every cached activation.
 *
 * # Safety
 * `engine` and `net` must be live handles.
 */
enum DsStatus ds_engine_invalidate(struct DsEngine *engine, const struct DsNetwork *net);

/**
 * Clear cached activations and the frame count, keeping the weights.
 * The operation total keeps accumulating.
 *
 * # Safety
 * `engine` must be a live handle.
 */
enum DsStatus ds_engine_reset(struct DsEngine *engine);

/**
 * Convolution operations performed over the engine's lifetime.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
uint64_t ds_engine_ops_total(const struct DsEngine *engine);

/**
 * Frames pushed since creation or the last reset.
 *
 * # Safety
 * `engine` must be null or a live handle.
 */
uint64_t ds_engine_frames_seen(const struct DsEngine *engine);

/**
 * # Safety
 * `engine` must be null or a handle not yet freed.
 */
void ds_engine_free(struct DsEngine *engine);

/**
 * Naive operations with the deepest layer's length fixed at `t`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsStatus ds_count_normal_deepest_fixed(size_t n, size_t t, size_t w, uint64_t *out);

/**
 * Naive operations with the input length fixed at `t`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsStatus ds_count_normal_input_fixed(size_t n, size_t t, size_t w, uint64_t *out);

/**
 * Naive-to-cached operation ratio for an input of length `t`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsStatus ds_speedup_factor(size_t n, size_t t, size_t w, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEEPSHIFT_H */
