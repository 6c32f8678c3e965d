#ifndef INCREPR_H
#define INCREPR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum IncreprStatus {
  INCREPR_STATUS_OK = 0,
  INCREPR_STATUS_NULL_POINTER = 1,
  INCREPR_STATUS_INVALID_ARGUMENT = 2,
  INCREPR_STATUS_DIMENSION = 3,
  INCREPR_STATUS_NON_FINITE = 4,
  /**
   * Line search stagnation, non-descent direction or failed escape step.
   */
  INCREPR_STATUS_NUMERICAL = 5,
  INCREPR_STATUS_PARSE = 6,
  INCREPR_STATUS_IO = 7,
  INCREPR_STATUS_PANIC = 8,
} IncreprStatus;

/**
 * Opaque measurement ensemble.
 */
typedef struct IncreprEnsemble IncreprEnsemble;

/**
 * Tunables for `increpr_restart_solve`. Fill with
 * `increpr_restart_options_default` before changing individual fields.
 */
typedef struct IncreprRestartOptions {
  /**
   * 0 = least squares, 1 = Poisson.
   */
  int32_t fidelity;
  double lambda0;
  double eps_stage[3];
  /**
   * Inner iteration cap applied to all three stages.
   */
  size_t max_iters;
  double grad_tol;
  /**
   * 0 = SVD, 1 = max-norm column.
   */
  int32_t rank1;
  /**
   * Nonzero multiplies `lambda0` and `eps_stage` by `mean(b) / 400`.
   */
  int32_t auto_scale;
  /**
   * Nonzero stops after stage I.
   */
  int32_t stage_one_only;
  /**
   * Seed of the random single-column start.
   */
  uint64_t seed;
} IncreprRestartOptions;

/**
 * Per-run statistics written by `increpr_restart_solve`.
 */
typedef struct IncreprRunStats {
  /**
   * Number of stages that ran (1 to 3); unused entries are zero.
   */
  size_t stages;
  size_t termination_p[3];
  double final_value[3];
  int32_t certified[3];
  size_t inner_iterations;
  size_t escapes;
  /**
   * Stage I was already rank one and the later stages were skipped.
   */
  int32_t rank_one_shortcut;
} IncreprRunStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread, or null if none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *increpr_last_error(void);

/**
 * Static description of a status code.
 */
const char *increpr_status_str(enum IncreprStatus status);

/**
 * Seeded Gaussian ensemble with zero intensities; `is_complex` selects the
 * field. Set data with `increpr_ensemble_set_intensities` or
 * `increpr_ensemble_plant`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum IncreprStatus increpr_ensemble_gaussian(size_t n,
                                             size_t m,
                                             int32_t is_complex,
                                             uint64_t seed,
                                             struct IncreprEnsemble **out);

/**
 * Oversampled Fourier ensemble of a nonnegative `rows x cols` image given
 * row-major; intensities are set from the image.
 *
 * # Safety
 * `pixels` must point to `rows * cols` doubles; `out` as above.
 */
enum IncreprStatus increpr_ensemble_fourier(size_t rows,
                                            size_t cols,
                                            const double *pixels,
                                            struct IncreprEnsemble **out);

/**
 * Loads an ensemble written by the command-line `gen` subcommand.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` as above.
 */
enum IncreprStatus increpr_ensemble_load(const char *path, struct IncreprEnsemble **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `h` must come from an `increpr_ensemble_*` constructor and not be used afterwards.
 */
void increpr_ensemble_free(struct IncreprEnsemble *h);

/**
 * Signal length `n`, measurement count `m` and field (1 if complex).
 *
 * # Safety
 * `h` must be a live handle; each output pointer may be null.
 */
enum IncreprStatus increpr_ensemble_dims(const struct IncreprEnsemble *h,
                                         size_t *n,
                                         size_t *m,
                                         int32_t *is_complex);

/**
 * Replaces the intensity data; `len` must equal `m`. Negative entries are
 * accepted (noisy data under least squares).
 *
 * # Safety
 * `h` must be a live handle; `b` must point to `len` doubles.
 */
enum IncreprStatus increpr_ensemble_set_intensities(struct IncreprEnsemble *h,
                                                    const double *b,
                                                    size_t len);

/**
 * Sets noiseless intensities `|<a_i, x>|^2` from an interleaved signal of length `n`.
 *
 * # Safety
 * `h` must be a live handle; `x` must point to `2 * n` doubles.
 */
enum IncreprStatus increpr_ensemble_plant(struct IncreprEnsemble *h, const double *x, size_t n);

/**
 * Copies the `m` intensities into `out`.
 *
 * # Safety
 * `h` must be a live handle; `out` must point to `len` writable doubles.
 */
enum IncreprStatus increpr_ensemble_intensities(const struct IncreprEnsemble *h,
                                                double *out,
                                                size_t len);

/**
 * Defaults for a Gaussian ensemble of the given field, or for Fourier data
 * when `fourier` is nonzero.
 *
 * # Safety
 * `out` must point to writable options storage.
 */
enum IncreprStatus increpr_restart_options_default(int32_t is_complex,
                                                   int32_t fourier,
                                                   struct IncreprRestartOptions *out);

/**
 * Three-stage restart solve from a seeded random start. Writes the
 * recovered signal (interleaved, `2 * n` doubles) and optional statistics.
 *
 * # Safety
 * `h` must be a live handle; `opts` may be null for defaults; `signal` must
 * point to `signal_len` writable doubles; `stats` may be null.
 */
enum IncreprStatus increpr_restart_solve(const struct IncreprEnsemble *h,
                                         const struct IncreprRestartOptions *opts,
                                         double *signal,
                                         size_t signal_len,
                                         struct IncreprRunStats *stats);

/**
 * Smallest eigenvalue of the optimality certificate at an `n x p` factor
 * (column-major, interleaved complex). `certified` receives 1 when the
 * eigenvalue is at least `-epsilon` and the eigensolver converged.
 *
 * # Safety
 * `h` must be a live handle; `y` must point to `2 * n * p` doubles;
 * `nu_min` and `certified` may be null.
 */
enum IncreprStatus increpr_certificate(const struct IncreprEnsemble *h,
                                       const double *y,
                                       size_t p,
                                       int32_t least_squares,
                                       double lambda,
                                       double epsilon,
                                       double *nu_min,
                                       int32_t *certified);

/**
 * Phase-invariant relative error between two interleaved length-`n` vectors.
 *
 * # Safety
 * `x` and `x_true` must each point to `2 * n` doubles; `out` must be writable.
 */
enum IncreprStatus increpr_relerr_phase(const double *x,
                                        const double *x_true,
                                        size_t n,
                                        double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INCREPR_H */
