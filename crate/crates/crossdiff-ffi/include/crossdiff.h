#ifndef CROSSDIFF_H
#define CROSSDIFF_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum {
  CD_OK = 0,
  CD_NULL_POINTER = 1,
  CD_INVALID_ARGUMENT = 2,
  CD_CONFIG_ERROR = 3,
  CD_NUMERICAL_ERROR = 4,
  CD_BUFFER_TOO_SMALL = 5,
  CD_PANIC = 6,
} CdStatus;

/**
 * Opaque model handle.
 */
typedef struct CdModel CdModel;

/**
 * Opaque trajectory handle with precomputed per-snapshot diagnostics.
 */
typedef struct CdTrajectory CdTrajectory;

/**
 * Derived model constants, mirrored as plain data.
 */
typedef struct {
  double p0;
  double delta;
  double a;
  double c0;
  double gamma;
  double q0;
  double q1;
  /**
   * Nonzero when the occupancy infimum vanishes and rate diagnostics are
   * meaningless.
   */
  uint8_t degenerate_c0;
} CdConstants;

/**
 * Stepper controls, mirrored as plain data; get defaults from
 * [`cd_params_default`].
 */
typedef struct {
  double tau;
  uint8_t reg_enabled;
  double picard_tol;
  uintptr_t picard_max;
  uint8_t newton_fallback;
  uint8_t continuation_eta;
  double tau_min;
  double entropy_tol;
  uintptr_t snapshot_every;
  double guess_jitter;
  uint64_t jitter_seed;
} CdParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *cd_version(void);

/**
 * Static description of a status code.
 */
const char *cd_status_message(CdStatus status);

/**
 * Build a catalog model (`ion-transport`, `power-q:<alpha>`, `skt-volume`,
 * `exp-q:<alpha>`, `vanishing-q:<alpha>`) with `species` components.
 *
 * # Safety
 * `name` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer.
 */
CdStatus cd_model_new(const char *name, uintptr_t species, CdModel **out);

/**
 * # Safety
 * `model` must come from [`cd_model_new`] and not be used afterwards.
 */
void cd_model_free(CdModel *model);

/**
 * Species count of a model.
 *
 * # Safety
 * `model` must be a live handle.
 */
uintptr_t cd_model_species(const CdModel *model);

/**
 * Derived constants of a model.
 *
 * # Safety
 * `model` must be a live handle, `out` writable.
 */
CdStatus cd_model_constants(const CdModel *model, CdConstants *out);

/**
 * Sampled hypothesis validation; writes 1 into `passed` when every
 * condition holds.
 *
 * # Safety
 * `model` must be a live handle, `passed` writable.
 */
CdStatus cd_model_validate(const CdModel *model, uintptr_t samples, uint64_t seed, uint8_t *passed);

/**
 * Default stepper controls for a given time step.
 */
CdParams cd_params_default(double tau);

/**
 * Integrate from the species-major initial data `u0` (`species * cells`
 * values) on `[0, length]` to `t_final`.
 *
 * # Safety
 * `model` must be a live handle, `u0` must hold `species * cells` doubles,
 * `params` and `out` must be valid.
 */
CdStatus cd_run(const CdModel *model,
                double length,
                uintptr_t cells,
                const double *u0,
                double t_final,
                const CdParams *params,
                CdTrajectory **out);

/**
 * # Safety
 * `trajectory` must come from [`cd_run`] and not be used afterwards.
 */
void cd_trajectory_free(CdTrajectory *trajectory);

/**
 * Number of stored snapshots (at least 2: initial and final state).
 *
 * # Safety
 * `trajectory` must be a live handle.
 */
uintptr_t cd_trajectory_snapshots(const CdTrajectory *trajectory);

/**
 * Number of accepted steps.
 *
 * # Safety
 * `trajectory` must be a live handle.
 */
uintptr_t cd_trajectory_steps(const CdTrajectory *trajectory);

/**
 * Time of snapshot `index`.
 *
 * # Safety
 * `trajectory` must be a live handle, `out` writable.
 */
CdStatus cd_trajectory_time(const CdTrajectory *trajectory, uintptr_t index, double *out);

/**
 * Copy snapshot `index` into `buffer` (species-major, `species * cells`
 * doubles).
 *
 * # Safety
 * `trajectory` must be a live handle; `buffer` must hold `len` doubles.
 */
CdStatus cd_trajectory_field(const CdTrajectory *trajectory,
                             uintptr_t index,
                             double *buffer,
                             uintptr_t len);

/**
 * Entropy and relative entropy of snapshot `index`.
 *
 * # Safety
 * `trajectory` must be a live handle; outputs may be null to skip.
 */
CdStatus cd_trajectory_entropy(const CdTrajectory *trajectory,
                               uintptr_t index,
                               double *entropy,
                               double *rel_entropy);

/**
 * Smallest vacancy over the whole run (strictly positive by construction).
 *
 * # Safety
 * `trajectory` must be a live handle, `out` writable.
 */
CdStatus cd_trajectory_min_vacancy(const CdTrajectory *trajectory, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CROSSDIFF_H */
