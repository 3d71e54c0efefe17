#ifndef KATOKLAB_H
#define KATOKLAB_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KatokStatus {
  KATOK_STATUS_OK = 0,
  KATOK_STATUS_NULL_POINTER = 1,
  KATOK_STATUS_INVALID_PARAMS = 2,
  // integrator, chart or root-finding failure
  KATOK_STATUS_NUMERICAL = 3,
  // the point or setting violates an operation's precondition
  KATOK_STATUS_HYPOTHESIS = 4,
  KATOK_STATUS_INSUFFICIENT_DATA = 5,
  KATOK_STATUS_NOT_CONVERGED = 6,
  KATOK_STATUS_PANIC = 99,
} KatokStatus;

// Opaque map handle; create with [`katok_map_new`], release with [`katok_map_free`].
typedef struct KatokMap KatokMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL.
//
// The pointer stays valid until the next failing call on the same thread.
const char *katok_last_error(void);

// Builds a map for exponent `alpha` and radius `r0`, both in (0, 1).
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum KatokStatus katok_map_new(double alpha, double r0, struct KatokMap **out);

// # Safety
// `map` must come from [`katok_map_new`] and not have been freed. NULL is ignored.
void katok_map_free(struct KatokMap *map);

// # Safety
// `map` must be a live handle; the out-pointers must be valid.
enum KatokStatus katok_map_params(const struct KatokMap *map, double *alpha, double *r0);

// One step of the area-preserving map G_T2 from (x, y) in [0,1)².
//
// `jac` may be NULL or point to 4 doubles (row-major derivative); `slowed` may be NULL
// or receives 1 when the point went through the slowed-down branch.
//
// # Safety
// `map` must be a live handle; non-NULL pointers must be valid for writes.
enum KatokStatus katok_map_apply(const struct KatokMap *map,
                                 double x,
                                 double y,
                                 double *out_x,
                                 double *out_y,
                                 double *jac,
                                 int32_t *slowed);

// Inverse of [`katok_map_apply`].
//
// # Safety
// As for [`katok_map_apply`].
enum KatokStatus katok_map_apply_inverse(const struct KatokMap *map,
                                         double x,
                                         double y,
                                         double *out_x,
                                         double *out_y,
                                         double *jac,
                                         int32_t *slowed);

// One step of the slowed map G, which preserves ν rather than area.
//
// # Safety
// As for [`katok_map_apply`].
enum KatokStatus katok_map_apply_base(const struct KatokMap *map,
                                      double x,
                                      double y,
                                      double *out_x,
                                      double *out_y,
                                      double *jac,
                                      int32_t *slowed);

// Log of the unstable Jacobian of G_T2 at (x, y).
//
// # Safety
// `map` must be a live handle and `out` valid for writes.
enum KatokStatus katok_map_log_ju(const struct KatokMap *map, double x, double y, double *out);

// Lyapunov exponent from `iters` steps of a uniform start drawn with `seed`.
//
// `std_err` may be NULL.
//
// # Safety
// `map` must be a live handle; non-NULL pointers must be valid for writes.
enum KatokStatus katok_map_lyapunov(const struct KatokMap *map,
                                    uint64_t iters,
                                    uint64_t seed,
                                    double *chi,
                                    double *std_err);

// Library version as a static NUL-terminated string.
const char *katok_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KATOKLAB_H */
