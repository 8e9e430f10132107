#ifndef MULTISYM_H
#define MULTISYM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. `0..=3` match the command-line exit codes.
 */
typedef enum MsStatus {
  MS_STATUS_OK = 0,
  MS_STATUS_CHECK_FAILED = 1,
  MS_STATUS_CONFIG = 2,
  MS_STATUS_DIVERGENCE = 3,
  MS_STATUS_NULL_POINTER = 4,
  MS_STATUS_INVALID_ARGUMENT = 5,
  MS_STATUS_NUMERICAL = 6,
  MS_STATUS_PANIC = 7,
} MsStatus;

/**
 * A scalar field theory.
 */
typedef struct MsTheory MsTheory;

/**
 * A recorded grid solution.
 */
typedef struct MsTrajectory MsTrajectory;

/**
 * Grid parameters for [`ms_evolve`]. `cfl <= 0` disables the CFL guard.
 */
typedef struct MsGrid {
  size_t nx;
  double dx;
  double dt;
  double t_final;
  double cfl;
  size_t sample_every;
  double blowup_limit;
} MsGrid;

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *ms_last_error(void);

/**
 * Build a theory from a JSON object such as `{"name": "free-scalar", "mass": 1.0}`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum MsStatus ms_theory_from_json(const char *json, struct MsTheory **out);

/**
 * # Safety
 * `theory` must come from [`ms_theory_from_json`] and not be used afterwards.
 */
void ms_theory_free(struct MsTheory *theory);

/**
 * Base dimension `n` and number of fields `N`.
 *
 * # Safety
 * All pointers must be valid.
 */
enum MsStatus ms_theory_dims(const struct MsTheory *theory, size_t *n, size_t *fields);

/**
 * Covariant Legendre map: polymomenta `p^μ_i` (n·N values) and `p`.
 *
 * # Safety
 * Buffers must hold the lengths given in the crate docs.
 */
enum MsStatus ms_legendre(const struct MsTheory *theory,
                          const double *x,
                          const double *q,
                          const double *v,
                          double *out_pmom,
                          double *out_p);

/**
 * De Donder–Weyl Hamiltonian `𝓗(x, q, p^μ_i)`.
 *
 * # Safety
 * Buffers must hold the lengths given in the crate docs.
 */
enum MsStatus ms_hamiltonian(const struct MsTheory *theory,
                             const double *x,
                             const double *q,
                             const double *pmom,
                             double *out_value);

/**
 * Build `X_h` at a phase-space point and return `max |i_{X_h} ω − dh|`.
 * `gauge` may be NULL (no gauge) or hold `n·n·N` trace-free values.
 *
 * # Safety
 * `coords` must hold `(N+1)(n+1)` values; other pointers as documented.
 */
enum MsStatus ms_verify_defining_relation(const struct MsTheory *theory,
                                          const double *coords,
                                          const double *gauge,
                                          double *out_residual);

/**
 * Integrate from `(phi, pi0)` (each `nx·N` values, node-major).
 *
 * # Safety
 * `grid` and `out` must be valid; buffers as documented.
 */
enum MsStatus ms_evolve(const struct MsTheory *theory,
                        const struct MsGrid *grid,
                        const double *phi,
                        const double *pi0,
                        struct MsTrajectory **out);

/**
 * # Safety
 * `traj` must come from [`ms_evolve`] and not be used afterwards.
 */
void ms_trajectory_free(struct MsTrajectory *traj);

/**
 * Number of recorded samples, or 0 for NULL.
 *
 * # Safety
 * `traj` must be NULL or a live handle.
 */
size_t ms_trajectory_len(const struct MsTrajectory *traj);

/**
 * Relative energy drift over the run.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MsStatus ms_trajectory_energy_drift(const struct MsTrajectory *traj, double *out);

/**
 * Copy `φ` of sample `index` (`nx·N` values) into `out`.
 *
 * # Safety
 * `out` must hold `nx·N` values.
 */
enum MsStatus ms_trajectory_phi(const struct MsTrajectory *traj,
                                size_t index,
                                double *out,
                                double *out_t);

/**
 * Write the trajectory CSV (`t,x,phi,pi0,pi1,energy_density`).
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
enum MsStatus ms_trajectory_write_csv(const struct MsTrajectory *traj, const char *path);

/**
 * Run a scenario given as JSON (the task must be in the document) and write
 * its artifacts into `out_dir`. Returns [`MsStatus::CheckFailed`] when the
 * scenario ran but a check failed.
 *
 * # Safety
 * Both arguments must be NUL-terminated strings.
 */
enum MsStatus ms_run_scenario(const char *json, const char *out_dir);

#endif  /* MULTISYM_H */
