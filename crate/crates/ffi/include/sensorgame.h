#ifndef SENSORGAME_H
#define SENSORGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum SgStatus {
  SG_STATUS_OK = 0,
  SG_STATUS_NULL_ARGUMENT = 1,
  SG_STATUS_INVALID_UTF8 = 2,
  SG_STATUS_INVALID_ARGUMENT = 3,
  SG_STATUS_CONFIG_ERROR = 4,
  SG_STATUS_RUNTIME_ERROR = 5,
  SG_STATUS_PANIC = 6,
} SgStatus;

/**
 * Planning modes.
 */
typedef enum SgMode {
  /**
   * Use the mode in the scenario file.
   */
  SG_MODE_CONFIGURED = -1,
  SG_MODE_MYOPIC = 0,
  SG_MODE_OPEN_LOOP = 1,
  SG_MODE_OPEN_LOOP_FEEDBACK = 2,
} SgMode;

/**
 * A validated scenario. Opaque to C.
 */
typedef struct SgScenario SgScenario;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses and validates a scenario given as TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SgStatus sg_scenario_from_toml(const char *toml, struct SgScenario **out);

/**
 * Loads and validates a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SgStatus sg_scenario_load(const char *path, struct SgScenario **out);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must come from this library and not be used afterwards.
 */
void sg_scenario_free(struct SgScenario *scenario);

/**
 * Number of targets and sensors in a scenario.
 *
 * # Safety
 * All pointers must be valid.
 */
enum SgStatus sg_scenario_counts(const struct SgScenario *scenario,
                                 size_t *num_targets,
                                 size_t *num_sensors);

/**
 * Simulates one run and writes its metrics and log as JSON. `mode` is one
 * of the [`SgMode`] values.
 *
 * # Safety
 * `scenario` and `out_json` must be valid pointers.
 */
enum SgStatus sg_run_json(const struct SgScenario *scenario,
                          int32_t mode,
                          uint64_t seed,
                          char **out_json);

/**
 * Runs the three planning modes on `runs` shared seeds starting at `seed`
 * and writes the aggregate table as CSV. `jobs == 0` uses every core.
 *
 * # Safety
 * `scenario` and `out_csv` must be valid pointers.
 */
enum SgStatus sg_compare_csv(const struct SgScenario *scenario,
                             size_t runs,
                             uint64_t seed,
                             size_t jobs,
                             char **out_csv);

/**
 * Runs the built-in invariant checks on `instances` random games.
 * `all_passed` receives 1 when every check passed, else 0.
 *
 * # Safety
 * `all_passed` must be a valid pointer.
 */
enum SgStatus sg_verify(uint64_t seed, size_t instances, int32_t *all_passed);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library from the same thread.
 */
const char *sg_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void sg_string_free(char *s);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SENSORGAME_H */
