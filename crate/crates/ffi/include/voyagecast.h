#ifndef VOYAGECAST_H
#define VOYAGECAST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VcStatus {
  VC_STATUS_OK = 0,
  VC_STATUS_NULL_POINTER = 1,
  VC_STATUS_INVALID_UTF8 = 2,
  VC_STATUS_IO = 3,
  VC_STATUS_VERSION_MISMATCH = 4,
  VC_STATUS_CORRUPT_BUNDLE = 5,
  VC_STATUS_INVALID_INPUT = 6,
  VC_STATUS_UNKNOWN_PORT = 7,
  VC_STATUS_BUFFER_TOO_SMALL = 8,
  VC_STATUS_PANIC = 9,
  VC_STATUS_INTERNAL = 10,
} VcStatus;

/**
 * Loaded model bundle. Opaque to C.
 */
typedef struct VcBundle VcBundle;

/**
 * One AIS report at inference time. `reported_draught` may be NaN when
 * unknown; `heading` 511 means unavailable.
 */
typedef struct VcRecord {
  uint32_t ship_type;
  /**
   * Knots.
   */
  double speed;
  double lon;
  double lat;
  double course;
  double heading;
  /**
   * Epoch seconds.
   */
  int64_t timestamp;
  const char *departure_port;
  double reported_draught;
} VcRecord;

typedef struct VcPrediction {
  /**
   * Index into the bundle's port registry, see [`vc_bundle_port_name`].
   */
  uint32_t port_index;
  /**
   * Epoch seconds.
   */
  int64_t eta;
  /**
   * Remaining minutes.
   */
  double delta_minutes;
} VcPrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *vc_version(void);

/**
 * Copies the last error message of this thread into `buf` and returns its
 * length without the NUL (0 if the last call succeeded). Truncates to fit.
 */
size_t vc_last_error(char *buf, size_t len);

/**
 * Loads the bundle directory at `path` into `*out`. On failure `*out` is set
 * to null.
 */
enum VcStatus vc_bundle_load(const char *path, struct VcBundle **out);

/**
 * Releases a handle from [`vc_bundle_load`]. Null is ignored.
 */
void vc_bundle_free(struct VcBundle *bundle);

/**
 * Number of ports in the registry, 0 for a null handle.
 */
size_t vc_bundle_port_count(const struct VcBundle *bundle);

enum VcStatus vc_bundle_port_name(const struct VcBundle *bundle,
                                  uint32_t index,
                                  char *buf,
                                  size_t len,
                                  size_t *written);

/**
 * Predicts the destination and ETA for one report.
 */
enum VcStatus vc_predict(const struct VcBundle *bundle,
                         const struct VcRecord *record,
                         struct VcPrediction *out);

/**
 * Answers one canonical CSV data line with `PORT,ETA,DELTA`, the same text
 * the `serve` command prints.
 */
enum VcStatus vc_serve_line(const struct VcBundle *bundle,
                            const char *line,
                            char *buf,
                            size_t len,
                            size_t *written);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOYAGECAST_H */
