#ifndef FILPOST_H
#define FILPOST_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Number of points on a cohesive response curve.
 */
#define FILPOST_CURVE_POINTS 12

typedef enum FilpostStatus {
  FILPOST_STATUS_OK = 0,
  FILPOST_STATUS_NULL_POINTER = 1,
  FILPOST_STATUS_INVALID_ARGUMENT = 2,
  FILPOST_STATUS_IO = 3,
  FILPOST_STATUS_CODEC = 4,
  FILPOST_STATUS_RECORD = 5,
  FILPOST_STATUS_WEIBULL = 6,
  FILPOST_STATUS_INFEASIBLE = 7,
  FILPOST_STATUS_NO_CONVERGENCE = 8,
  FILPOST_STATUS_BOX_TOO_SMALL = 9,
  FILPOST_STATUS_JOB = 10,
  FILPOST_STATUS_OUT_OF_RANGE = 11,
  FILPOST_STATUS_PANIC = 99,
} FilpostStatus;

typedef enum FilpostItemKind {
  FILPOST_ITEM_KIND_INT = 0,
  FILPOST_ITEM_KIND_FLOAT = 1,
  FILPOST_ITEM_KIND_TEXT = 2,
} FilpostItemKind;

/*
 Decoded results file.
 */
typedef struct FilpostStream FilpostStream;

typedef struct FilpostWeibullParams {
  double sigma_th;
  double m;
  double sigma_u;
  double v0;
} FilpostWeibullParams;

typedef struct FilpostTrussProblem {
  double youngs_modulus;
  double rho;
  double length;
  double load;
  double d_max;
  double sigma_max;
  double area_min;
  double area_max;
} FilpostTrussProblem;

typedef struct FilpostTrussResult {
  double areas[2];
  /*
   `u_x`, `u_y` at the loaded node.
   */
  double displacements[2];
  double member_stresses[2];
  double weight;
  size_t iterations;
  size_t objective_evals;
  size_t constraint_evals;
} FilpostTrussResult;

typedef struct FilpostCzmResult {
  double tc;
  double gamma_c;
  double mismatch;
  size_t iterations;
  bool at_boundary;
} FilpostCzmResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread, or null. Valid until the
 next call into this library from the same thread.
 */
const char *filpost_last_error(void);

/*
 Library version as a static string.
 */
const char *filpost_version(void);

/*
 Reads and decodes a results file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_read(const char *path, struct FilpostStream **out);

/*
 Decodes results-file text; line breaks are ignored.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_decode(const char *text, struct FilpostStream **out);

/*
 # Safety
 `stream` must come from this library and not be used afterwards. Null is
 accepted.
 */
void filpost_stream_free(struct FilpostStream *stream);

/*
 Number of logical records.

 # Safety
 `stream` must be a live handle and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_len(const struct FilpostStream *stream, size_t *out);

/*
 Number of records with the given key.

 # Safety
 `stream` must be a live handle and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_count_key(const struct FilpostStream *stream,
                                            int64_t key,
                                            size_t *out);

/*
 Key and attribute count of record `record`.

 # Safety
 `stream` must be a live handle; `key` and `attributes` valid pointers.
 */
enum FilpostStatus filpost_stream_record(const struct FilpostStream *stream,
                                         size_t record,
                                         int64_t *key,
                                         size_t *attributes);

/*
 # Safety
 `stream` must be a live handle and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_item_kind(const struct FilpostStream *stream,
                                            size_t record,
                                            size_t index,
                                            enum FilpostItemKind *out);

/*
 # Safety
 `stream` must be a live handle and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_item_int(const struct FilpostStream *stream,
                                           size_t record,
                                           size_t index,
                                           int64_t *out);

/*
 # Safety
 `stream` must be a live handle and `out` a valid pointer.
 */
enum FilpostStatus filpost_stream_item_float(const struct FilpostStream *stream,
                                             size_t record,
                                             size_t index,
                                             double *out);

/*
 Copies the 8 characters of a text item plus a NUL into `buf`, which must
 hold at least 9 bytes.

 # Safety
 `stream` must be a live handle and `buf` writable for 9 bytes.
 */
enum FilpostStatus filpost_stream_item_text(const struct FilpostStream *stream,
                                            size_t record,
                                            size_t index,
                                            char *buf);

/*
 Writes the stream as 80-column results-file text into `buf`.

 `needed` receives the byte count including the trailing NUL. When `cap`
 is too small nothing is written and `OutOfRange` is returned; `buf` may be
 null to query the size.

 # Safety
 `stream` must be a live handle, `needed` valid, `buf` writable for `cap`
 bytes when non-null.
 */
enum FilpostStatus filpost_stream_encode(const struct FilpostStream *stream,
                                         char *buf,
                                         size_t cap,
                                         size_t *needed);

/*
 Nodal output for `key` (101 displacements, 104 reaction forces).

 `rows` and `width` receive the table shape. `node_ids` must hold `cap`
 entries and `components` `cap * width`, row-major. When either is null or
 `cap` is smaller than the row count, only the shape is written and
 `OutOfRange` is returned.

 # Safety
 `stream` must be a live handle; `rows` and `width` valid; the buffers
 writable as described when non-null.
 */
enum FilpostStatus filpost_stream_nodal_field(const struct FilpostStream *stream,
                                              int64_t key,
                                              int64_t *node_ids,
                                              double *components,
                                              size_t cap,
                                              size_t *rows,
                                              size_t *width);

/*
 Weibull stress of an element field given as `n` maximum principal
 stresses and volumes.

 # Safety
 `sigma1` and `volume` must each point to `n` doubles; `params` and `out`
 must be valid.
 */
enum FilpostStatus filpost_weibull_stress(const double *sigma1,
                                          const double *volume,
                                          size_t n,
                                          const struct FilpostWeibullParams *params,
                                          double *out);

/*
 # Safety
 `params` and `out` must be valid pointers.
 */
enum FilpostStatus filpost_failure_probability(double sigma_w,
                                               const struct FilpostWeibullParams *params,
                                               double *out);

/*
 Minimum-weight sizing of the two-bar truss from `x0` (two areas).

 # Safety
 `problem` and `out` must be valid; `x0` must point to two doubles.
 */
enum FilpostStatus filpost_truss_optimize(const struct FilpostTrussProblem *problem,
                                          const double *x0,
                                          double tol_f,
                                          double tol_c,
                                          struct FilpostTrussResult *out);

/*
 Synthetic cohesive response for `(tc, gamma_c)` with default model
 constants, written as 12 CMOD and load values.

 # Safety
 `cmod` and `load` must each be writable for 12 doubles.
 */
enum FilpostStatus filpost_czm_forward(double tc, double gamma_c, double *cmod, double *load);

/*
 Identifies `(tc, gamma_c)` from a 12-point target load curve on the
 default CMOD abscissae, using the synthetic forward model.

 `bounds` is `[tc_min, tc_max, gamma_min, gamma_max]`.

 # Safety
 `target_load` must point to 12 doubles, `bounds` to 4, `out` valid.
 */
enum FilpostStatus filpost_czm_identify(const double *target_load,
                                        const double *bounds,
                                        double tol,
                                        size_t max_outer,
                                        struct FilpostCzmResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FILPOST_H */
