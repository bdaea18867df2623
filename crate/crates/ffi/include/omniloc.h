#ifndef OMNILOC_H
#define OMNILOC_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OmnilocStatus {
  OMNILOC_STATUS_OK = 0,
  OMNILOC_STATUS_NULL_POINTER = 1,
  OMNILOC_STATUS_INVALID_ARGUMENT = 2,
  OMNILOC_STATUS_IO = 3,
  OMNILOC_STATUS_BAD_DATABASE = 4,
  OMNILOC_STATUS_DIMENSION_MISMATCH = 5,
  OMNILOC_STATUS_NO_CANDIDATES = 6,
  OMNILOC_STATUS_BUFFER_TOO_SMALL = 7,
  OMNILOC_STATUS_PANIC = 8,
} OmnilocStatus;

/**
 * Opaque database handle.
 */
typedef struct OmnilocDb OmnilocDb;

typedef struct OmnilocParams {
  /**
   * Candidates per (frame, subspace).
   */
  uint32_t top_n;
  /**
   * Ranked tiles examined.
   */
  uint32_t top_c;
  double toler_per;
  double radius_m;
  /**
   * Retrieval threads; 0 uses the global pool.
   */
  uint32_t workers;
} OmnilocParams;

typedef struct OmnilocEstimate {
  int32_t x;
  int32_t y;
  /**
   * Tile center in meters.
   */
  double x_m;
  double y_m;
  double confidence;
  /**
   * Nonzero when no ranked tile had enough support.
   */
  uint8_t low_confidence;
  uint32_t candidate_count;
} OmnilocEstimate;

/**
 * Message for the last failed call on this thread, or NULL. The pointer is
 * valid until the next omniloc call on the same thread.
 */
const char *omniloc_last_error(void);

/**
 * Pipeline defaults: N = 15, C = 10, 20 %, 3 m, all cores.
 */
struct OmnilocParams omniloc_default_params(void);

/**
 * Loads a database file. On success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OmnilocStatus omniloc_db_open(const char *path, struct OmnilocDb **out);

/**
 * Releases a handle. NULL is ignored.
 *
 * # Safety
 * `db` must come from `omniloc_db_open` and not be used afterwards.
 */
void omniloc_db_free(struct OmnilocDb *db);

/**
 * Descriptor length K, or 0 for NULL.
 *
 * # Safety
 * `db` must be NULL or a live handle.
 */
size_t omniloc_db_dim(const struct OmnilocDb *db);

/**
 * Total frames over all subspaces, or 0 for NULL.
 *
 * # Safety
 * `db` must be NULL or a live handle.
 */
size_t omniloc_db_frames(const struct OmnilocDb *db);

/**
 * Computes the descriptor of a circular profile of `len` samples into
 * `out[0..out_len]`; `out_len` must be at least 64.
 *
 * # Safety
 * `profile` must point to `len` doubles and `out` to `out_len` doubles.
 */
enum OmnilocStatus omniloc_extract_feature(const double *profile,
                                           size_t len,
                                           double *out,
                                           size_t out_len);

/**
 * Localizes a bundle of `m` descriptors of `k` values each (row-major); the
 * center frame is `m / 2`. `params` may be NULL for the defaults.
 *
 * # Safety
 * `db` must be a live handle, `features` must point to `m * k` doubles and
 * `out` must be valid for writing.
 */
enum OmnilocStatus omniloc_locate(const struct OmnilocDb *db,
                                  const double *features,
                                  size_t m,
                                  size_t k,
                                  const struct OmnilocParams *params,
                                  struct OmnilocEstimate *out);

#endif  /* OMNILOC_H */
