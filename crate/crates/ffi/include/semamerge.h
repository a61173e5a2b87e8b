#ifndef SEMAMERGE_H
#define SEMAMERGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

#define SM_GENERATOR_RANDOOP 1

#define SM_GENERATOR_RANDOOP_CLEAN 2

#define SM_GENERATOR_SEARCH 4

#define SM_GENERATOR_DIFFERENTIAL 8

#define SM_FLAVOR_ORIGINAL 1

#define SM_FLAVOR_TESTABILITY 2

#define SM_FLAVOR_SERIALIZATION 4

#define SM_CRITERION_C1 1

#define SM_CRITERION_C2 2

#define SM_CRITERION_C3 4

#define SM_CRITERION_C4 8

typedef enum SmStatus {
  SM_STATUS_OK = 0,
  SM_STATUS_NULL_ARGUMENT = 1,
  SM_STATUS_INVALID_UTF8 = 2,
  SM_STATUS_INVALID_ARGUMENT = 3,
  SM_STATUS_LOAD_FAILED = 4,
  SM_STATUS_ANALYSIS_FAILED = 5,
  SM_STATUS_PANIC = 6,
} SmStatus;

// The result of analyzing a scenario.
typedef struct SmReport SmReport;

// A loaded merge scenario.
typedef struct SmScenario SmScenario;

// Analysis settings. `out_dir` may be null, in which case nothing is
// written to disk. `extra_tests` points to `extra_tests_len` paths.
typedef struct SmConfig {
  uint64_t seed;
  uint64_t budget_steps;
  uint64_t runs;
  uint32_t generators;
  uint32_t flavors;
  uint32_t jobs;
  const char *out_dir;
  const char *const *extra_tests;
  uintptr_t extra_tests_len;
} SmConfig;

typedef struct SmRates {
  double precision;
  double recall;
  double accuracy;
} SmRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call on the same thread.
const char *sm_last_error(void);

// Library version as a static NUL-terminated string.
const char *sm_version(void);

// Loads the scenario stored in directory `path`.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum SmStatus sm_scenario_load(const char *path, struct SmScenario **out);

// # Safety
// `scenario` must come from [`sm_scenario_load`] or be null.
void sm_scenario_free(struct SmScenario *scenario);

// # Safety
// `scenario` must be a live handle and `out` a valid pointer.
enum SmStatus sm_scenario_is_fast_forward(const struct SmScenario *scenario, bool *out);

// Analyzes a scenario.
//
// # Safety
// `scenario` and `config` must be valid; `out` must be a valid pointer.
enum SmStatus sm_analyze(const struct SmScenario *scenario,
                         const struct SmConfig *config,
                         struct SmReport **out);

// # Safety
// `report` must come from [`sm_analyze`] or be null.
void sm_report_free(struct SmReport *report);

// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum SmStatus sm_report_conflict_count(const struct SmReport *report, uintptr_t *out);

// The exit code the command line tool would use for this report.
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum SmStatus sm_report_exit_code(const struct SmReport *report, int32_t *out);

// The report as JSON. Release the string with [`sm_string_free`].
//
// # Safety
// `report` must be a live handle and `out` a valid pointer.
enum SmStatus sm_report_json(const struct SmReport *report, char **out);

// # Safety
// `s` must come from this library or be null.
void sm_string_free(char *s);

// Conflict criteria matched by a stable outcome row. `statuses` holds four
// codes in base, left, right, merge order (0 pass, 1 fail, 2 error,
// 3 invalid); `parent` is 0 for left and 1 for right. The result is a mask
// of `SM_CRITERION_*` bits.
//
// # Safety
// `statuses` must point to four bytes and `out` must be valid.
enum SmStatus sm_criteria(const uint8_t *statuses, uint8_t parent, uint32_t *out);

// Precision, recall and accuracy of a confusion matrix.
//
// # Safety
// `out` must be a valid pointer.
enum SmStatus sm_rates(uintptr_t tp,
                       uintptr_t fp,
                       uintptr_t tn,
                       uintptr_t fn_,
                       struct SmRates *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMAMERGE_H */
