#ifndef FACTIVE_H
#define FACTIVE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FactiveStatus {
  FACTIVE_STATUS_OK = 0,
  FACTIVE_STATUS_NULL_POINTER = 1,
  FACTIVE_STATUS_INVALID_UTF8 = 2,
  FACTIVE_STATUS_CONFIG = 3,
  FACTIVE_STATUS_PARSE = 4,
  FACTIVE_STATUS_DATA = 5,
  FACTIVE_STATUS_IDENTIFIABILITY = 6,
  FACTIVE_STATUS_ESTIMATION = 7,
  FACTIVE_STATUS_STATE = 8,
  FACTIVE_STATUS_IO = 9,
  FACTIVE_STATUS_PANIC = 10,
} FactiveStatus;

/**
 * A trial dataset, with or without outcomes.
 */
typedef struct FactiveDataset FactiveDataset;

/**
 * A parsed and validated scenario.
 */
typedef struct FactiveScenario FactiveScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse and validate a TOML scenario. Warnings are accepted; any error-level
 * diagnostic fails with `FACTIVE_STATUS_CONFIG`.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FactiveStatus factive_scenario_from_toml(const char *toml, struct FactiveScenario **out);

/**
 * # Safety
 * `scenario` must be null or a handle from [`factive_scenario_from_toml`]
 * that has not been freed.
 */
void factive_scenario_free(struct FactiveScenario *scenario);

/**
 * True estimand values as JSON.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum FactiveStatus factive_truth_json(const struct FactiveScenario *scenario, char **out);

/**
 * Run a Monte Carlo study and return its summary as JSON. `n_reps = 0`
 * uses the scenario's replicate count; `use_seed = false` uses its seed.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum FactiveStatus factive_simulate_json(const struct FactiveScenario *scenario,
                                         uint64_t n_reps,
                                         bool use_seed,
                                         uint64_t seed,
                                         char **out);

/**
 * Randomize a cohort and generate outcomes with the given seed.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid pointer.
 */
enum FactiveStatus factive_generate_dataset(const struct FactiveScenario *scenario,
                                            uint64_t seed,
                                            struct FactiveDataset **out);

/**
 * Parse a dataset from CSV text.
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FactiveStatus factive_dataset_from_csv(const char *csv, struct FactiveDataset **out);

/**
 * # Safety
 * `data` must be a live handle and `out` a valid pointer.
 */
enum FactiveStatus factive_dataset_to_csv(const struct FactiveDataset *data, char **out);

/**
 * Number of patients, or 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t factive_dataset_len(const struct FactiveDataset *data);

/**
 * # Safety
 * `data` must be null or a live handle that has not been freed.
 */
void factive_dataset_free(struct FactiveDataset *data);

/**
 * Estimate all estimands and return the report as JSON. The analysis
 * settings come from `scenario`, or the defaults when it is null.
 *
 * # Safety
 * `data` must be a live handle, `scenario` null or a live handle, and `out`
 * a valid pointer.
 */
enum FactiveStatus factive_estimate_json(const struct FactiveDataset *data,
                                         const struct FactiveScenario *scenario,
                                         char **out);

/**
 * Posterior probability that the treatment effect is positive under a
 * normal prior and normal likelihood.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum FactiveStatus factive_posterior_probability(double prior_mean,
                                                 double prior_sd,
                                                 double estimate,
                                                 double se,
                                                 double *out);

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next `factive_*` call on the same thread.
 */
const char *factive_last_error_message(void);

/**
 * # Safety
 * `s` must be null or a string returned through an `out` parameter of this
 * library that has not been freed.
 */
void factive_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *factive_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTIVE_H */
