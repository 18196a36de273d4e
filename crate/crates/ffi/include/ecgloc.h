#ifndef ECGLOC_H
#define ECGLOC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Number of doubles written by [`ecgloc_model_infer`]: ten electrodes in
 * the order LA, RA, LL, RL, V1..V6, three coordinates each.
 */
#define ECGLOC_ELECTRODE_VALUES 30

/**
 * Result code of every call.
 */
typedef enum EcglocStatus {
  ECGLOC_STATUS_OK = 0,
  ECGLOC_STATUS_NULL_POINTER = 1,
  ECGLOC_STATUS_INVALID_ARGUMENT = 2,
  ECGLOC_STATUS_IO = 3,
  ECGLOC_STATUS_PARSE = 4,
  ECGLOC_STATUS_NUMERIC = 5,
  ECGLOC_STATUS_PANIC = 6,
} EcglocStatus;

/**
 * Opaque trained model.
 */
typedef struct EcglocModel EcglocModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ecgloc_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len - 1` bytes) and returns the full message length.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ecgloc_last_error(char *buf, size_t len);

/**
 * Loads a model from a training state or inference checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum EcglocStatus ecgloc_model_load(const char *path, struct EcglocModel **out);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must come from [`ecgloc_model_load`] and not be used afterwards.
 */
void ecgloc_model_free(struct EcglocModel *model);

/**
 * Number of input points the model expects, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t ecgloc_model_input_points(const struct EcglocModel *model);

/**
 * Predicts the ten electrodes from `n_points` contour points given in
 * subject coordinates. Writes [`ECGLOC_ELECTRODE_VALUES`] doubles.
 *
 * # Safety
 * `points` must hold `3 * n_points` doubles and `out` room for 30.
 */
enum EcglocStatus ecgloc_model_infer(const struct EcglocModel *model,
                                     const double *points,
                                     size_t n_points,
                                     double *out);

/**
 * Symmetric Chamfer distance (mean Euclidean nearest-neighbour distance).
 *
 * # Safety
 * `a` and `b` must hold `3 * na` and `3 * nb` doubles.
 */
enum EcglocStatus ecgloc_chamfer(const double *a,
                                 size_t na,
                                 const double *b,
                                 size_t nb,
                                 double *out);

/**
 * Farthest point sampling of `k` indices starting at `start`.
 *
 * # Safety
 * `points` must hold `3 * n` doubles and `out` room for `k` indices.
 */
enum EcglocStatus ecgloc_fps(const double *points, size_t n, size_t k, size_t start, size_t *out);

/**
 * Path-length normalized DTW between z-scored series. `flagged` (optional)
 * receives 1 when either series had zero variance.
 *
 * # Safety
 * `a` and `b` must hold `na` and `nb` doubles; `flagged` may be null.
 */
enum EcglocStatus ecgloc_dtw(const double *a,
                             size_t na,
                             const double *b,
                             size_t nb,
                             double *out,
                             int32_t *flagged);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECGLOC_H */
