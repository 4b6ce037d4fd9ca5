#ifndef MECACHE_H
#define MECACHE_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum MecStatus {
  MEC_STATUS_OK = 0,
  MEC_STATUS_NULL_POINTER = 1,
  MEC_STATUS_INVALID_UTF8 = 2,
  MEC_STATUS_INVALID_ARGUMENT = 3,
  MEC_STATUS_INVALID_SCENARIO = 4,
  MEC_STATUS_DIMENSION = 5,
  MEC_STATUS_SCHEMA_VERSION = 6,
  MEC_STATUS_INFEASIBLE = 7,
  MEC_STATUS_MAX_ITER = 8,
  MEC_STATUS_NO_INTERIOR = 9,
  MEC_STATUS_PARSE = 10,
  MEC_STATUS_REFUSED = 11,
  MEC_STATUS_IO = 12,
  MEC_STATUS_PANIC = 13,
} MecStatus;

// Scheme selector, mirroring the solver's six schemes.
typedef enum MecScheme {
  MEC_SCHEME_BNB = 0,
  MEC_SCHEME_POPULARITY = 1,
  MEC_SCHEME_RELAXATION = 2,
  MEC_SCHEME_NO_CACHING = 3,
  MEC_SCHEME_FULL_OFFLOADING = 4,
  MEC_SCHEME_FULL_LOCAL = 5,
} MecScheme;

// Opaque solve report handle.
typedef struct MecReport MecReport;

// Opaque scenario handle.
typedef struct MecScenario MecScenario;

// Energy per phase and term, in Joules.
typedef struct MecBreakdown {
  double mec_caching;
  double offload_caching;
  double mec_execution;
  double local_total;
  double offload_total;
} MecBreakdown;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a
// success. The pointer stays valid until the next call on this thread.
const char *mec_last_error(void);

// Library version as a static NUL-terminated string.
const char *mec_version(void);

// Generates a scenario. `config_json` holds generator fields (sizes in
// Kbits, bandwidths in MHz) and may be NULL for the defaults; `seed`
// always wins over any seed in the JSON.
//
// # Safety
// `config_json` must be NULL or a NUL-terminated string; `out` must be a
// valid pointer to writable storage for one handle.
enum MecStatus mec_scenario_generate(const char *config_json,
                                     uint64_t seed,
                                     struct MecScenario **out);

// Parses a `scenario/v1` JSON document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writes.
enum MecStatus mec_scenario_from_json(const char *json, struct MecScenario **out);

// Serializes a scenario. The string must be released with [`mec_string_free`].
//
// # Safety
// `scenario` must be a live handle; `out` must be valid for writes.
enum MecStatus mec_scenario_to_json(const struct MecScenario *scenario, char **out);

// Number of tasks in the library, or 0 for a NULL handle.
//
// # Safety
// `scenario` must be NULL or a live handle.
size_t mec_scenario_num_tasks(const struct MecScenario *scenario);

// # Safety
// `scenario` must be NULL or a handle not yet freed.
void mec_scenario_free(struct MecScenario *scenario);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void mec_string_free(char *s);

// Runs one scheme. `epsilon` is the branch-and-bound gap target in Joules
// and `max_tasks` refuses branch-and-bound schemes on larger libraries
// (0 disables the limit).
//
// # Safety
// `scenario` must be a live handle; `out` must be valid for writes.
enum MecStatus mec_solve(const struct MecScenario *scenario,
                         enum MecScheme scheme,
                         double epsilon,
                         size_t max_tasks,
                         struct MecReport **out);

// Weighted objective in Joules, or NaN for a NULL handle.
//
// # Safety
// `report` must be NULL or a live handle.
double mec_report_objective(const struct MecReport *report);

// # Safety
// `report` must be NULL or a live handle.
double mec_report_kkt_residual(const struct MecReport *report);

// # Safety
// `report` must be NULL or a live handle.
double mec_report_gap(const struct MecReport *report);

// # Safety
// `report` must be NULL or a live handle.
size_t mec_report_node_count(const struct MecReport *report);

// # Safety
// `report` must be a live handle; `out` must be valid for writes.
enum MecStatus mec_report_breakdown(const struct MecReport *report, struct MecBreakdown *out);

// Writes one byte per task (1 cached, 0 not) into `buf`, which must hold
// at least `len` bytes with `len` equal to the number of tasks.
//
// # Safety
// `report` must be a live handle and `buf` valid for `len` writes.
enum MecStatus mec_report_placement(const struct MecReport *report, uint8_t *buf, size_t len);

// # Safety
// `report` must be NULL or a handle not yet freed.
void mec_report_free(struct MecReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MECACHE_H */
