#ifndef D2DSPREAD_H
#define D2DSPREAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Outcome of a call.
typedef enum D2dStatus {
  D2D_STATUS_OK = 0,
  D2D_STATUS_NULL_POINTER = 1,
  D2D_STATUS_INVALID_PARAMETER = 2,
  D2D_STATUS_INFEASIBLE = 3,
  D2D_STATUS_NON_CONVERGENCE = 4,
  D2D_STATUS_SCHEMA = 5,
  D2D_STATUS_IO = 6,
  D2D_STATUS_BUFFER_TOO_SMALL = 7,
  D2D_STATUS_PANIC = 8,
} D2dStatus;

// Kind of information strand.
typedef enum D2dStrandKind {
  // Within layer `m`.
  D2D_STRAND_KIND_INTRA = 0,
  // From layer `m` into layer `n`, within layer `m`'s range.
  D2D_STRAND_KIND_INTER = 1,
  // Every device, any layer.
  D2D_STRAND_KIND_COMBINED = 2,
} D2dStrandKind;

// Opaque mission handle.
typedef struct D2dMission D2dMission;

// Opaque optimization result handle.
typedef struct D2dOptimization D2dOptimization;

typedef struct D2dStrand {
  enum D2dStrandKind kind;
  size_t m;
  size_t n;
} D2dStrand;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *d2d_version(void);

// Copies the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t d2d_last_error_message(char *buf, size_t len);

// Mean and second moment of a strand's degree law.
//
// # Safety
// `density` and `range_km` must point to `layers` values; the outputs must be valid.
enum D2dStatus d2d_degree_moments(const double *density,
                                  const double *range_km,
                                  size_t layers,
                                  struct D2dStrand strand,
                                  double *mean_out,
                                  double *second_moment_out);

// Spreading-rate threshold `E[K]/E[K²]` of a strand.
//
// # Safety
// As [`d2d_degree_moments`].
enum D2dStatus d2d_epidemic_threshold(const double *density,
                                      const double *range_km,
                                      size_t layers,
                                      struct D2dStrand strand,
                                      double *threshold_out);

// Stationary neighbour-informed probability Θ and average informed density
// of a strand at spreading rate `alpha`.
//
// # Safety
// As [`d2d_degree_moments`].
enum D2dStatus d2d_solve_equilibrium(const double *density,
                                     const double *range_km,
                                     size_t layers,
                                     struct D2dStrand strand,
                                     double alpha,
                                     double *theta_out,
                                     double *avg_informed_out);

// Bundled mission by name ("intelligence" or "encounter").
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be valid.
enum D2dStatus d2d_mission_preset(const char *name, struct D2dMission **out);

// Mission from a JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum D2dStatus d2d_mission_load(const char *path, struct D2dMission **out);

// Mission from JSON text.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid.
enum D2dStatus d2d_mission_from_json(const char *json, struct D2dMission **out);

// Sets the threat level δ ∈ [0, 1].
//
// # Safety
// `mission` must be a live handle.
enum D2dStatus d2d_mission_set_delta(struct D2dMission *mission, double delta);

// Number of layers, or 0 for a null handle.
//
// # Safety
// `mission` must be null or a live handle.
size_t d2d_mission_layer_count(const struct D2dMission *mission);

// Releases a mission; null is ignored.
//
// # Safety
// `mission` must be null or a handle not yet freed.
void d2d_mission_free(struct D2dMission *mission);

// Minimum-cost design for the mission at its current threat level.
// Returns `D2D_STATUS_INFEASIBLE` when no design meets the requirements.
//
// # Safety
// `mission` must be a live handle; `out` must be valid.
enum D2dStatus d2d_optimize(const struct D2dMission *mission, struct D2dOptimization **out);

// Cost per km² of the optimized design.
//
// # Safety
// `result` must be a live handle; `cost_out` must be valid.
enum D2dStatus d2d_optimization_cost(const struct D2dOptimization *result, double *cost_out);

// Alternation rounds used by the winning start.
//
// # Safety
// `result` must be null or a live handle.
size_t d2d_optimization_iterations(const struct D2dOptimization *result);

// Copies the design into caller arrays of `len` entries each; `len` must be
// at least the layer count (`D2D_STATUS_BUFFER_TOO_SMALL` otherwise).
//
// # Safety
// `result` must be a live handle; arrays must hold `len` writable values.
enum D2dStatus d2d_optimization_design(const struct D2dOptimization *result,
                                       double *density_out,
                                       double *range_km_out,
                                       size_t len);

// Releases a result; null is ignored.
//
// # Safety
// `result` must be null or a handle not yet freed.
void d2d_optimization_free(struct D2dOptimization *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2DSPREAD_H */
