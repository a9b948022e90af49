#ifndef SUE_H
#define SUE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SueSide {
  SUE_SIDE_X = 0,
  SUE_SIDE_Y = 1,
} SueSide;

typedef enum SueStatus {
  SUE_STATUS_OK = 0,
  SUE_STATUS_NULL_POINTER = 1,
  SUE_STATUS_INVALID_ARGUMENT = 2,
  SUE_STATUS_IO = 3,
  SUE_STATUS_PARSE = 4,
  SUE_STATUS_CONFIG = 5,
  SUE_STATUS_DIMENSION = 6,
  SUE_STATUS_NUMERICAL = 7,
  SUE_STATUS_TRAINING = 8,
  SUE_STATUS_SERIALIZATION = 9,
  SUE_STATUS_PANIC = 10,
} SueStatus;

/**
 * One modality's point cloud.
 */
typedef struct SueEmbeddingSet SueEmbeddingSet;

/**
 * A fitted alignment model.
 */
typedef struct SueModel SueModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sue_version(void);

/**
 * Message of the last failure on this thread, or NULL. Valid until the next
 * failing call on the same thread.
 */
const char *sue_last_error(void);

/**
 * Copies `n × d` row-major floats into a new set.
 *
 * # Safety
 * `data` must point to `n * d` readable floats and `out` must be writable.
 */
enum SueStatus sue_embedding_set_new(const float *data,
                                     size_t n,
                                     size_t d,
                                     struct SueEmbeddingSet **out);

/**
 * Reads a binary (`.bin`) or CSV (`.csv`) embedding file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum SueStatus sue_embedding_set_read(const char *path, struct SueEmbeddingSet **out);

/**
 * Number of rows; 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t sue_embedding_set_rows(const struct SueEmbeddingSet *set);

/**
 * Row width; 0 for NULL.
 *
 * # Safety
 * `set` must be NULL or a live handle.
 */
size_t sue_embedding_set_dim(const struct SueEmbeddingSet *set);

/**
 * # Safety
 * `set` must be NULL or a handle not freed before.
 */
void sue_embedding_set_free(struct SueEmbeddingSet *set);

/**
 * Fits the full pipeline. `pairs` holds `m` (x row, y row) index pairs as
 * `2m` consecutive values. `config_toml` may be NULL for the defaults or a
 * TOML document with pipeline keys (`k_neighbors`, `se_dim`, `cca_dim`,
 * `use_mmd`, `seed`, ...).
 *
 * # Safety
 * `x`, `y` must be live handles, `pairs` must point to `2 * m` values,
 * `config_toml` NULL or NUL-terminated, and `out` writable.
 */
enum SueStatus sue_model_fit(const struct SueEmbeddingSet *x,
                             const struct SueEmbeddingSet *y,
                             const size_t *pairs,
                             size_t m,
                             const char *config_toml,
                             struct SueModel **out);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum SueStatus sue_model_load(const char *path, struct SueModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` NUL-terminated.
 */
enum SueStatus sue_model_save(const struct SueModel *model, const char *path);

/**
 * Width of the shared space; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t sue_model_output_dim(const struct SueModel *model);

/**
 * Maps `points` from one modality into the shared space, writing
 * `rows × output_dim` row-major doubles to `out`. `out_len` must equal that
 * product.
 *
 * # Safety
 * `model` and `points` must be live handles and `out` must point to
 * `out_len` writable doubles.
 */
enum SueStatus sue_model_map(const struct SueModel *model,
                             enum SueSide side,
                             const struct SueEmbeddingSet *points,
                             double *out,
                             size_t out_len);

/**
 * # Safety
 * `model` must be NULL or a handle not freed before.
 */
void sue_model_free(struct SueModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SUE_H */
