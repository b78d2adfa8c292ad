#ifndef SWIMCAL_H
#define SWIMCAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SwimcalStatus {
  SWIMCAL_STATUS_OK = 0,
  SWIMCAL_STATUS_NULL_POINTER = 1,
  SWIMCAL_STATUS_INVALID_ARGUMENT = 2,
  SWIMCAL_STATUS_CONFIG = 3,
  SWIMCAL_STATUS_IO = 4,
  SWIMCAL_STATUS_RUNTIME = 5,
  SWIMCAL_STATUS_ABORTED = 6,
  SWIMCAL_STATUS_PANIC = 7,
} SwimcalStatus;

// Calibration objective bound to a reference.
typedef struct SwimcalObjective SwimcalObjective;

// Result of one calibration or baseline run.
typedef struct SwimcalRecord SwimcalRecord;

// Reference marker data for a set of actuation frequencies.
typedef struct SwimcalReference SwimcalReference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library on this thread.
const char *swimcal_last_error(void);

// Library version as a static NUL-terminated string.
const char *swimcal_version(void);

// # Safety
// `s` must be null or a string returned by this library.
void swimcal_string_free(char *s);

// Number of swimmer parameters.
size_t swimcal_param_dim(void);

// Copies the swimmer box into `lower` and `upper`, each of length `len`.
//
// # Safety
// `lower` and `upper` must point to `len` writable doubles.
enum SwimcalStatus swimcal_param_bounds(double *lower, double *upper, size_t len);

// Synthetic references at the default frequencies from a hidden vector
// drawn with `hidden_seed`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
enum SwimcalStatus swimcal_reference_synthetic(uint64_t hidden_seed,
                                               double noise_sigma,
                                               uint64_t noise_seed,
                                               struct SwimcalReference **out);

// Synthetic references at the default frequencies from explicit
// parameters.
//
// # Safety
// `theta` must point to `len` doubles; `out` must be a valid handle slot.
enum SwimcalStatus swimcal_reference_from_theta(const double *theta,
                                                size_t len,
                                                double noise_sigma,
                                                uint64_t noise_seed,
                                                struct SwimcalReference **out);

// Loads a reference directory.
//
// # Safety
// `dir` must be a NUL-terminated path; `out` must be a valid handle slot.
enum SwimcalStatus swimcal_reference_load(const char *dir, struct SwimcalReference **out);

// Writes the reference as CSV files plus metadata into `dir`.
//
// # Safety
// `reference` must be a live handle; `dir` a NUL-terminated path.
enum SwimcalStatus swimcal_reference_write(const struct SwimcalReference *reference,
                                           const char *dir);

// Number of frequencies in the reference.
//
// # Safety
// `reference` must be null or a live handle.
size_t swimcal_reference_frequency_count(const struct SwimcalReference *reference);

// Copies the hidden parameters of a synthetic reference into `out`.
// Fails with `INVALID_ARGUMENT` for ingested data.
//
// # Safety
// `reference` must be a live handle; `out` must hold `len` doubles.
enum SwimcalStatus swimcal_reference_theta_star(const struct SwimcalReference *reference,
                                                double *out,
                                                size_t len);

// # Safety
// `reference` must be null or a handle not yet freed.
void swimcal_reference_free(struct SwimcalReference *reference);

// # Safety
// `reference` must be a live handle; `out` a valid handle slot. The
// objective keeps its own reference to the data.
enum SwimcalStatus swimcal_objective_new(const struct SwimcalReference *reference,
                                         struct SwimcalObjective **out);

// Evaluates the loss (meters) at `theta`. Divergence yields `+inf`.
//
// # Safety
// `objective` must be a live handle; `theta` must hold `len` doubles and
// `loss` must be writable.
enum SwimcalStatus swimcal_objective_evaluate(const struct SwimcalObjective *objective,
                                              const double *theta,
                                              size_t len,
                                              double *loss);

// # Safety
// `objective` must be null or a handle not yet freed.
void swimcal_objective_free(struct SwimcalObjective *objective);

// Runs one method for `budget` evaluations.
//
// `method_json` is a method entry as in experiment configs, e.g.
// `{"method": "cmaes"}`; `proposer_json` is a proposer entry such as
// `{"kind": "oracle"}` and may be null for methods without one.
//
// Returns `ABORTED` (with the record still written) when the proposer
// failed too often.
//
// # Safety
// `objective` must be a live handle, the strings NUL-terminated or null as
// described, and `out` a valid handle slot.
enum SwimcalStatus swimcal_run(const struct SwimcalObjective *objective,
                               const char *method_json,
                               const char *proposer_json,
                               size_t budget,
                               uint64_t seed,
                               struct SwimcalRecord **out);

// # Safety
// `record` must be null or a live handle.
double swimcal_record_loss_best(const struct SwimcalRecord *record);

// Number of evaluations charged to the run.
//
// # Safety
// `record` must be null or a live handle.
size_t swimcal_record_evaluations(const struct SwimcalRecord *record);

// # Safety
// `record` must be a live handle; `out` must hold `len` doubles.
enum SwimcalStatus swimcal_record_theta_best(const struct SwimcalRecord *record,
                                             double *out,
                                             size_t len);

// Copies the best-so-far curve into `out`, which holds `len` doubles;
// `len` must equal [`swimcal_record_evaluations`].
//
// # Safety
// `record` must be a live handle; `out` must hold `len` doubles.
enum SwimcalStatus swimcal_record_curve(const struct SwimcalRecord *record,
                                        double *out,
                                        size_t len);

// Serializes the record (timing excluded) as JSON.
//
// # Safety
// `record` must be a live handle; `out` a valid string slot.
enum SwimcalStatus swimcal_record_to_json(const struct SwimcalRecord *record, char **out);

// # Safety
// `record` must be null or a handle not yet freed.
void swimcal_record_free(struct SwimcalRecord *record);

// Runs a whole experiment from a config JSON string and returns the
// summary as JSON. Returns `ABORTED` with the summary written when some
// runs aborted.
//
// # Safety
// `config_json` must be NUL-terminated; `summary_out` a valid string slot.
enum SwimcalStatus swimcal_run_experiment(const char *config_json, char **summary_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWIMCAL_H */
