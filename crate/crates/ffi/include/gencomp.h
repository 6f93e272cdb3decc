#ifndef GENCOMP_H
#define GENCOMP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/*
 Result codes shared by every function.
 */
typedef enum GcStatus {
  GC_STATUS_OK = 0,
  /*
   A required pointer was null or an enum value was out of range.
   */
  GC_STATUS_INVALID_ARGUMENT = 1,
  GC_STATUS_INVALID_UTF8 = 2,
  /*
   The scenario text is not valid TOML or has unknown keys.
   */
  GC_STATUS_PARSE_ERROR = 3,
  /*
   The scenario parsed but failed validation.
   */
  GC_STATUS_VALIDATION_ERROR = 4,
  /*
   A stage search ran out of budget.
   */
  GC_STATUS_BUDGET_EXHAUSTED = 5,
  GC_STATUS_INVARIANT_VIOLATION = 6,
  /*
   The input does not meet a construction's requirements.
   */
  GC_STATUS_PRECONDITION = 7,
  GC_STATUS_IO_ERROR = 8,
  /*
   A Rust panic was caught at the boundary.
   */
  GC_STATUS_PANIC = 9,
} GcStatus;

typedef enum GcFormat {
  GC_FORMAT_JSON = 0,
  GC_FORMAT_CSV_BUNDLE = 1,
} GcFormat;

/*
 The outcome of running a scenario.
 */
typedef struct GcReport GcReport;

/*
 A validated scenario.
 */
typedef struct GcScenario GcScenario;

/*
 Optional replacements for the scenario's horizon and budget; zero keeps the file's value.
 */
typedef struct GcOverrides {
  uint64_t horizon;
  uint64_t budget;
} GcOverrides;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parse and validate a scenario from TOML text. `overrides` may be null.

 # Safety
 `toml` must be a NUL-terminated string, `overrides` null or valid, and `out`
 valid for writing one pointer.
 */
enum GcStatus gc_scenario_from_toml(const char *toml,
                                    const struct GcOverrides *overrides,
                                    struct GcScenario **out);

/*
 Load and validate a scenario file. `overrides` may be null.

 # Safety
 As for [`gc_scenario_from_toml`], with `path` a NUL-terminated path.
 */
enum GcStatus gc_scenario_from_path(const char *path,
                                    const struct GcOverrides *overrides,
                                    struct GcScenario **out);

/*
 The scenario's name, as a new string.

 # Safety
 `scenario` must be a live handle and `out` valid for one pointer write.
 */
enum GcStatus gc_scenario_name(const struct GcScenario *scenario, char **out);

/*
 Run a scenario. A report whose checks fail is still returned with `GC_STATUS_OK`;
 query it with [`gc_report_passed`].

 # Safety
 `scenario` must be a live handle and `out` valid for one pointer write.
 */
enum GcStatus gc_run(const struct GcScenario *scenario, struct GcReport **out);

/*
 True when the report has at least one check and every check passed.

 # Safety
 `report` must be null or a live handle.
 */
bool gc_report_passed(const struct GcReport *report);

/*
 Number of checks recorded, or 0 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
uintptr_t gc_report_check_count(const struct GcReport *report);

/*
 Number of failed checks, or 0 for a null handle.

 # Safety
 `report` must be null or a live handle.
 */
uintptr_t gc_report_failure_count(const struct GcReport *report);

/*
 The report as sorted-key JSON, identical to the `.json` file the CLI writes.

 # Safety
 `report` must be a live handle and `out` valid for one pointer write.
 */
enum GcStatus gc_report_json(const struct GcReport *report, char **out);

/*
 Write the report under `dir` in the given format.

 # Safety
 `report` must be a live handle and `dir` a NUL-terminated path.
 */
enum GcStatus gc_report_write(const struct GcReport *report, const char *dir, enum GcFormat format);

/*
 # Safety
 `scenario` must be null or a handle not yet freed.
 */
void gc_scenario_free(struct GcScenario *scenario);

/*
 # Safety
 `report` must be null or a handle not yet freed.
 */
void gc_report_free(struct GcReport *report);

/*
 Release a string returned by this library.

 # Safety
 `s` must be null or a string from this library not yet freed.
 */
void gc_string_free(char *s);

/*
 The message for the last failed call on this thread, or null. The pointer
 stays valid until the next call into the library from the same thread.
 */
const char *gc_last_error(void);

/*
 A static name for a status code.
 */
const char *gc_status_name(enum GcStatus status);

/*
 The library version as a static string.
 */
const char *gc_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENCOMP_H */
