#ifndef RVETHERM_H
#define RVETHERM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RvtStatus {
  RVT_STATUS_OK = 0,
  RVT_STATUS_NULL_POINTER = 1,
  RVT_STATUS_INVALID_ARGUMENT = 2,
  RVT_STATUS_PLACEMENT_EXHAUSTED = 3,
  RVT_STATUS_DEFECT_CALIBRATION = 4,
  RVT_STATUS_NON_CONVERGENCE = 5,
  RVT_STATUS_IO = 6,
  RVT_STATUS_FORMAT = 7,
  RVT_STATUS_BATCH_FAILED = 8,
  RVT_STATUS_PANIC = 9,
} RvtStatus;

typedef struct RvtBatch RvtBatch;

typedef struct RvtGeometry RvtGeometry;

typedef struct RvtGrid RvtGrid;

// Morphology parameters; see `rvt_spec_default` for defaults.
typedef struct RvtSpec {
  size_t n_sp;
  size_t n_cyl;
  double f_sp;
  double f_cyl;
  double aspect_ratio;
  double wave;
  uint32_t periods;
  double f_def;
  size_t n_def;
  double contrast;
  size_t resolution;
  uint64_t seed;
  size_t runs;
} RvtSpec;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *rvt_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must come from this library and not have been freed.
void rvt_string_free(char *s);

struct RvtSpec rvt_spec_default(void);

// # Safety
// `spec` must be NULL or point to a valid `RvtSpec`.
enum RvtStatus rvt_spec_validate(const struct RvtSpec *spec);

// Random sequential adsorption of the spec's inclusions.
//
// # Safety
// `spec` must point to a valid `RvtSpec` and `out` be valid for writes.
enum RvtStatus rvt_geometry_generate(const struct RvtSpec *spec,
                                     uint64_t seed,
                                     struct RvtGeometry **out);

// # Safety
// `g` must be NULL or a live geometry handle.
void rvt_geometry_free(struct RvtGeometry *g);

// Number of spheres, or 0 for NULL.
//
// # Safety
// `g` must be NULL or a live geometry handle.
size_t rvt_geometry_sphere_count(const struct RvtGeometry *g);

// # Safety
// `g` must be NULL or a live geometry handle.
size_t rvt_geometry_cylinder_count(const struct RvtGeometry *g);

// Sum of inclusion volumes, NaN for NULL.
//
// # Safety
// `g` must be NULL or a live geometry handle.
double rvt_geometry_analytic_fraction(const struct RvtGeometry *g);

// Text serialization; free the result with `rvt_string_free`.
//
// # Safety
// `g` must be a live geometry handle and `out` be valid for writes.
enum RvtStatus rvt_geometry_to_text(const struct RvtGeometry *g, char **out);

// # Safety
// `g` must be a live geometry handle and `out` be valid for writes.
enum RvtStatus rvt_grid_voxelize(const struct RvtGeometry *g,
                                 size_t resolution,
                                 double wave,
                                 uint32_t periods,
                                 struct RvtGrid **out);

// New grid with inclusion voxels carved to the defect fraction `f_def`.
//
// # Safety
// `grid` must be a live grid handle and `out` be valid for writes.
enum RvtStatus rvt_grid_carve_defects(const struct RvtGrid *grid,
                                      double f_def,
                                      size_t n_def,
                                      uint64_t seed,
                                      struct RvtGrid **out);

// # Safety
// `grid` must be NULL or a live grid handle.
void rvt_grid_free(struct RvtGrid *grid);

// Voxels per edge, 0 for NULL.
//
// # Safety
// `grid` must be NULL or a live grid handle.
size_t rvt_grid_resolution(const struct RvtGrid *grid);

// # Safety
// `grid` must be NULL or a live grid handle.
double rvt_grid_inclusion_fraction(const struct RvtGrid *grid);

// # Safety
// `grid` must be NULL or a live grid handle.
double rvt_grid_defect_fraction(const struct RvtGrid *grid);

// Borrowed view of the `N^3` labels, x fastest. Valid while the grid lives.
//
// # Safety
// `grid` must be NULL or a live grid handle; `len` must be NULL or valid
// for writes.
const uint8_t *rvt_grid_labels(const struct RvtGrid *grid, size_t *len);

// # Safety
// `grid` must be a live grid handle and `path` a NUL-terminated string.
enum RvtStatus rvt_grid_export(const struct RvtGrid *grid, const char *path);

// # Safety
// `path` must be a NUL-terminated string and `out` be valid for writes.
enum RvtStatus rvt_grid_import(const char *path, struct RvtGrid **out);

// Effective conductivity tensor, row-major into `out[9]`.
//
// # Safety
// `grid` must be a live grid handle and `out` point to 9 writable doubles.
enum RvtStatus rvt_homogenize(const struct RvtGrid *grid,
                              double contrast,
                              double acc,
                              size_t max_iter,
                              double *out);

// `runs` realizations with seeds derived from `base_seed`.
//
// # Safety
// `spec` must point to a valid `RvtSpec` and `out` be valid for writes.
enum RvtStatus rvt_batch_run(const struct RvtSpec *spec,
                             size_t runs,
                             uint64_t base_seed,
                             struct RvtBatch **out);

// # Safety
// `b` must be NULL or a live batch handle.
void rvt_batch_free(struct RvtBatch *b);

// # Safety
// `b` must be NULL or a live batch handle.
double rvt_batch_lambda_app(const struct RvtBatch *b);

// # Safety
// `b` must be NULL or a live batch handle.
double rvt_batch_sigma(const struct RvtBatch *b);

// # Safety
// `b` must be NULL or a live batch handle.
double rvt_batch_offdiag_ratio(const struct RvtBatch *b);

// Successful runs.
//
// # Safety
// `b` must be NULL or a live batch handle.
size_t rvt_batch_run_count(const struct RvtBatch *b);

// Runs excluded after a failure.
//
// # Safety
// `b` must be NULL or a live batch handle.
size_t rvt_batch_excluded_count(const struct RvtBatch *b);

// Min, Q1, median, Q3, max of the per-run traces into `out[5]`.
//
// # Safety
// `b` must be a live batch handle and `out` point to 5 writable doubles.
enum RvtStatus rvt_batch_quartiles(const struct RvtBatch *b, double *out);

// `lambda_app -+ 2 sigma`; needs at least two runs.
//
// # Safety
// `b` must be a live batch handle; `lo` and `hi` must be valid for writes.
enum RvtStatus rvt_batch_confidence_band(const struct RvtBatch *b, double *lo, double *hi);

// Tensor of successful run `index`, row-major into `out[9]`.
//
// # Safety
// `b` must be a live batch handle and `out` point to 9 writable doubles.
enum RvtStatus rvt_batch_tensor(const struct RvtBatch *b, size_t index, double *out);

// Batch table as CSV; free the result with `rvt_string_free`.
//
// # Safety
// `b` must be a live batch handle and `out` be valid for writes.
enum RvtStatus rvt_batch_to_csv(const struct RvtBatch *b, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RVETHERM_H */
