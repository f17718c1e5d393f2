#ifndef VAXMFG_H
#define VAXMFG_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result code of every exported function.
typedef enum VaxStatus {
  VAX_STATUS_OK = 0,
  VAX_STATUS_NULL_POINTER = 1,
  VAX_STATUS_INVALID_UTF8 = 2,
  // Unreadable or malformed configuration.
  VAX_STATUS_CONFIG = 3,
  // A parameter violates a model invariant.
  VAX_STATUS_VALIDATION = 4,
  // The time step is too coarse or the iteration blew up.
  VAX_STATUS_NUMERICAL = 5,
  // The solve finished without meeting the tolerance. The solution handle
  // is still produced and must be freed.
  VAX_STATUS_NOT_CONVERGED = 6,
  // The caller's buffer is too short; the required length is reported.
  VAX_STATUS_BUFFER_TOO_SMALL = 7,
  // Group, state or series index out of range.
  VAX_STATUS_OUT_OF_RANGE = 8,
  VAX_STATUS_INTERNAL = 9,
} VaxStatus;

// Health states, for guideline setters.
typedef enum VaxState {
  VAX_STATE_SUSCEPTIBLE = 0,
  VAX_STATE_INFECTED = 1,
  VAX_STATE_RECOVERED = 2,
} VaxState;

// Per-group time series exposed by [`vax_solution_copy_series`].
typedef enum VaxSeries {
  VAX_SERIES_TIME = 0,
  VAX_SERIES_DENSITY_S = 1,
  VAX_SERIES_DENSITY_I = 2,
  VAX_SERIES_DENSITY_R = 3,
  VAX_SERIES_VALUE_S = 4,
  VAX_SERIES_VALUE_I = 5,
  VAX_SERIES_VALUE_R = 6,
  VAX_SERIES_ALPHA_S = 7,
  VAX_SERIES_NU = 8,
  VAX_SERIES_AGGREGATE = 9,
  // Mass-weighted infected share of the whole population; `group` ignored.
  VAX_SERIES_COMPOSITE_INFECTED = 10,
} VaxSeries;

// Opaque model configuration.
typedef struct VaxConfig VaxConfig;

// Opaque equilibrium solution.
typedef struct VaxSolution VaxSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null. The pointer
// stays valid until the next failing call on the same thread.
const char *vax_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *vax_version(void);

// Built-in parameter set, `"table1"` or `"table2"`.
//
// # Safety
// `name` must be a NUL-terminated string; `out` must be writable.
enum VaxStatus vax_config_from_preset(const char *name, struct VaxConfig **out);

// Parses a TOML model description.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum VaxStatus vax_config_from_toml(const char *text, struct VaxConfig **out);

// Loads a TOML model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum VaxStatus vax_config_from_file(const char *path, struct VaxConfig **out);

// Releases a configuration. Null is ignored.
//
// # Safety
// `cfg` must come from a `vax_config_from_*` call and not be used afterwards.
void vax_config_free(struct VaxConfig *cfg);

// Sets `c_pS = c_pI = cp` for every group and enables awareness.
//
// # Safety
// `cfg` must be a live handle.
enum VaxStatus vax_config_set_awareness(struct VaxConfig *cfg, double cp);

// Sets a constant guideline level for `state` in every group.
//
// # Safety
// `cfg` must be a live handle.
enum VaxStatus vax_config_set_guideline(struct VaxConfig *cfg, enum VaxState state, double value);

// Sets the same vaccination cost in every group.
//
// # Safety
// `cfg` must be a live handle.
enum VaxStatus vax_config_set_vaccination_cost(struct VaxConfig *cfg, double c_nu);

// Fixed-point tolerance, iteration cap and damping weight.
//
// # Safety
// `cfg` must be a live handle.
enum VaxStatus vax_config_set_solver(struct VaxConfig *cfg,
                                     double epsilon,
                                     size_t max_iterations,
                                     double damping);

// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum VaxStatus vax_config_n_groups(const struct VaxConfig *cfg, size_t *out);

// Solves for the equilibrium. Returns `VAX_STATUS_OK` on convergence and
// `VAX_STATUS_NOT_CONVERGED` otherwise; in both cases `*out` holds a
// solution to be released with [`vax_solution_free`]. On any other status
// `*out` is null.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum VaxStatus vax_solve(const struct VaxConfig *cfg, struct VaxSolution **out);

// Releases a solution. Null is ignored.
//
// # Safety
// `sol` must come from [`vax_solve`] and not be used afterwards.
void vax_solution_free(struct VaxSolution *sol);

// Grid size, group count, iteration count and convergence flag. Any out
// pointer may be null to skip it.
//
// # Safety
// `sol` must be a live handle; non-null out pointers must be writable.
enum VaxStatus vax_solution_info(const struct VaxSolution *sol,
                                 size_t *n_points,
                                 size_t *n_groups,
                                 size_t *iterations,
                                 bool *converged);

// Time at which the group stops vaccinating (0 if it never starts, the
// horizon if it never stops) and the number of switches.
//
// # Safety
// `sol` must be a live handle; out pointers must be writable.
enum VaxStatus vax_solution_jump(const struct VaxSolution *sol,
                                 size_t group,
                                 double *jump_time,
                                 size_t *crossing_count);

// Copies one time series (one value per grid point) into `buf`. `*written`
// receives the number of points; if `len` is too small nothing is copied,
// `*written` holds the required length and `VAX_STATUS_BUFFER_TOO_SMALL` is
// returned.
//
// # Safety
// `sol` must be a live handle; `buf` must hold `len` doubles; `written`
// must be writable.
enum VaxStatus vax_solution_copy_series(const struct VaxSolution *sol,
                                        size_t group,
                                        enum VaxSeries series,
                                        double *buf,
                                        size_t len,
                                        size_t *written);

// Exact infected value `(c_I / gamma) (1 - exp(-gamma (T - t)))`.
//
// # Safety
// `out` must be writable.
enum VaxStatus vax_closed_form_value_infected(double c_inf,
                                              double gamma,
                                              double horizon,
                                              double t,
                                              double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VAXMFG_H */
