#ifndef GOMORE_FFI_H
#define GOMORE_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GomoreStatus {
  GOMORE_STATUS_OK = 0,
  GOMORE_STATUS_NULL_POINTER = 1,
  GOMORE_STATUS_INVALID_ARGUMENT = 2,
  GOMORE_STATUS_CONFIG = 3,
  GOMORE_STATUS_RUNTIME = 4,
  GOMORE_STATUS_IO = 5,
  GOMORE_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * The requested quantity is undefined for these inputs (for example
   * the gap bound outside its precondition).
   */
  GOMORE_STATUS_UNDEFINED = 7,
  GOMORE_STATUS_PANIC = 8,
} GomoreStatus;

typedef enum GomoreStrategy {
  GOMORE_STRATEGY_IDEAL = 0,
  GOMORE_STRATEGY_DDS = 1,
  GOMORE_STRATEGY_GOMORE = 2,
} GomoreStrategy;

/**
 * Opaque simulation handle.
 */
typedef struct GomoreSimulation GomoreSimulation;

/**
 * One row of a run. Absent accuracy or divergence values are NaN.
 */
typedef struct GomoreRecord {
  uint64_t round;
  enum GomoreStrategy strategy;
  double test_accuracy;
  double test_loss;
  uint64_t n_error_free;
  double divergence_sample;
  double wall_time;
} GomoreRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *gomore_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gomore_version(void);

/**
 * Error-free probability under a rate budget, `exp(-λ(2^{ρN} − 1)/N)`.
 *
 * # Safety
 * `out` must be a valid pointer to a `double`.
 */
enum GomoreStatus gomore_error_free_prob_rate(double lambda,
                                              double rho,
                                              size_t n_active,
                                              double *out);

/**
 * Divergence bounds for both strategies and the lower bound on their gap.
 * `probs` holds `k` error-free probabilities. `gap_out` receives NaN and
 * `gap_valid_out` zero when the gap bound's precondition fails; `zeta2_out`
 * is NaN when some probability is zero.
 *
 * # Safety
 * `probs` must point to `k` doubles; every out pointer must be valid.
 */
enum GomoreStatus gomore_divergence_bounds(double gamma_sq,
                                           double g_sq,
                                           double eta,
                                           size_t local_epochs,
                                           size_t k,
                                           size_t n,
                                           const double *probs,
                                           double *zeta1_out,
                                           double *zeta2_out,
                                           double *gap_out,
                                           uint8_t *gap_valid_out);

/**
 * Exhaustive search for the participant count. `objective_out`, when not
 * NULL, must hold `k` doubles and receives the objective for N = 1..=k.
 *
 * # Safety
 * `lambdas` must point to `k` doubles; `best_n_out` must be valid.
 */
enum GomoreStatus gomore_optimize_participation(const double *lambdas,
                                                size_t k,
                                                double rho,
                                                double *objective_out,
                                                size_t *best_n_out);

/**
 * Parses a TOML configuration and loads its data. On success `*out`
 * receives a handle to free with [`gomore_simulation_free`].
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; `out` must be valid.
 */
enum GomoreStatus gomore_simulation_new(const char *config_toml, struct GomoreSimulation **out);

/**
 * # Safety
 * `sim` must be NULL or a handle from [`gomore_simulation_new`] that has
 * not been freed.
 */
void gomore_simulation_free(struct GomoreSimulation *sim);

/**
 * Participant count the run uses (fixed or chosen by the planner).
 *
 * # Safety
 * `sim` must be a live handle; `out` must be valid.
 */
enum GomoreStatus gomore_simulation_participants(struct GomoreSimulation *sim, size_t *out);

/**
 * Runs one trial, replacing any records held by the handle.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum GomoreStatus gomore_simulation_run(struct GomoreSimulation *sim, size_t trial);

/**
 * Number of records from the last run.
 *
 * # Safety
 * `sim` must be a live handle; `out` must be valid.
 */
enum GomoreStatus gomore_simulation_record_count(struct GomoreSimulation *sim, size_t *out);

/**
 * Copies up to `capacity` records into `buf`; `written_out` receives the
 * number copied. Returns `BufferTooSmall` (after copying what fits) when
 * more records exist.
 *
 * # Safety
 * `sim` must be a live handle; `buf` must hold `capacity` records;
 * `written_out` must be valid.
 */
enum GomoreStatus gomore_simulation_records(struct GomoreSimulation *sim,
                                            struct GomoreRecord *buf,
                                            size_t capacity,
                                            size_t *written_out);

/**
 * Writes the records of the last run as CSV.
 *
 * # Safety
 * `sim` must be a live handle; `path` must be a NUL-terminated string.
 */
enum GomoreStatus gomore_simulation_write_csv(struct GomoreSimulation *sim, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GOMORE_FFI_H */
