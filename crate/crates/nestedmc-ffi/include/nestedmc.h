/* C interface of the nested Monte Carlo risk-estimation engine. */

#ifndef NESTEDMC_H
#define NESTEDMC_H

/* Generated by cbindgen from the nestedmc-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Success.
 */
#define NESTEDMC_OK 0

/**
 * A required pointer argument was null.
 */
#define NESTEDMC_ERR_NULL_POINTER 1

/**
 * A string argument was not valid UTF-8.
 */
#define NESTEDMC_ERR_INVALID_UTF8 2

/**
 * The experiment configuration failed to parse or validate.
 */
#define NESTEDMC_ERR_INVALID_CONFIG 3

/**
 * The computation itself failed; see the last error message.
 */
#define NESTEDMC_ERR_RUN_FAILED 4

/**
 * A numeric argument lay outside its domain.
 */
#define NESTEDMC_ERR_INVALID_PARAMETER 5

/**
 * An opaque, validated experiment configuration.
 */
typedef struct NestedmcExperiment NestedmcExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static library version string; do not free.
 */
const char *nestedmc_version(void);

/**
 * Copy of the calling thread's last error message, or null when the
 * last call on this thread succeeded. Free with
 * [`nestedmc_string_free`].
 */
char *nestedmc_last_error_message(void);

/**
 * Release a string returned by this library. Null is a no-op.
 */
void nestedmc_string_free(char *s);

/**
 * Lognormal one-step weight: the likelihood ratio at first-step level
 * `y` of a path regrown from `x_reference` onto scenario `x_target`,
 * for a risk-neutral step of length `dt` under rate `r` and volatility
 * `sigma`.
 */
int nestedmc_weight_gbm(double r,
                        double sigma,
                        double dt,
                        double x_reference,
                        double x_target,
                        double y,
                        double *out);

/**
 * Mean-reverting (Ornstein-Uhlenbeck) one-step weight at first-step
 * level `y`.
 */
int nestedmc_weight_vasicek(double kappa,
                            double theta,
                            double sigma,
                            double dt,
                            double x_reference,
                            double x_target,
                            double y,
                            double *out);

/**
 * Two-regime switching lognormal one-step weight at first-step level
 * `y` observed in regime `regime_y`. Regimes are 1 or 2.
 */
int nestedmc_weight_rsln2(double mu1,
                          double sigma1,
                          double mu2,
                          double sigma2,
                          double p12,
                          double p21,
                          double dt,
                          double x_reference,
                          int regime_reference,
                          double x_target,
                          int regime_target,
                          double y,
                          int regime_y,
                          double *out);

/**
 * Withdrawal-account one-step weight at raw first-step level `y` (the
 * account level before the floor at zero), under withdrawal rate `w`,
 * fee rate `m_f`, rate `r`, and volatility `sigma`.
 */
int nestedmc_weight_gmwb(double w,
                         double m_f,
                         double r,
                         double sigma,
                         double dt,
                         double x_reference,
                         double x_target,
                         double y,
                         double *out);

/**
 * Joint weight of a lognormal path's (running minimum, final value)
 * pair over a horizon, for regrowing barrier-style payoffs: evaluated
 * at observed minimum `z_min` and final level `z_final`.
 */
int nestedmc_weight_barrier(double r,
                            double sigma,
                            double horizon,
                            double x_reference,
                            double x_target,
                            double z_min,
                            double z_final,
                            double *out);

/**
 * Synthetic-example weight: unit-variance normal densities centered at
 * the negated scenarios, evaluated at draw `z`.
 */
int nestedmc_weight_toy(double x_reference, double x_target, double z, double *out);

/**
 * Parse and validate a JSON experiment configuration, returning an
 * opaque handle through `out`. Free with [`nestedmc_experiment_free`].
 *
 * # Safety
 * `config_json` must point to a NUL-terminated string, and `out` to a
 * writable pointer slot.
 */
int nestedmc_experiment_new(const char *config_json, struct NestedmcExperiment **out);

/**
 * Run the experiment behind a handle and return its summary as a JSON
 * string through `out_json` (free with [`nestedmc_string_free`]).
 * Report files are written to the configured output directory as a side
 * effect.
 *
 * # Safety
 * `handle` must come from [`nestedmc_experiment_new`] and not have been
 * freed; `out_json` must point to a writable pointer slot.
 */
int nestedmc_experiment_run(const struct NestedmcExperiment *handle, char **out_json);

/**
 * Release an experiment handle. Null is a no-op.
 *
 * # Safety
 * `handle` must come from [`nestedmc_experiment_new`] and not have been
 * freed already.
 */
void nestedmc_experiment_free(struct NestedmcExperiment *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NESTEDMC_H */
