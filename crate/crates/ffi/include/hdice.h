#ifndef HDICE_H
#define HDICE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HdiceStatus {
  HDICE_STATUS_OK = 0,
  HDICE_STATUS_NULL_POINTER = 1,
  HDICE_STATUS_INVALID_UTF8 = 2,
  HDICE_STATUS_CONFIG = 3,
  HDICE_STATUS_CONTRACT = 4,
  HDICE_STATUS_DIMENSION = 5,
  HDICE_STATUS_NUMERIC = 6,
  HDICE_STATUS_PARSE = 7,
  HDICE_STATUS_SIZE = 8,
  HDICE_STATUS_IO = 9,
  HDICE_STATUS_FORMAT = 10,
  HDICE_STATUS_BUFFER_TOO_SMALL = 11,
  HDICE_STATUS_PANIC = 12,
} HdiceStatus;

/**
 * Opaque run configuration.
 */
typedef struct HdiceConfig HdiceConfig;

/**
 * Opaque environment instance.
 */
typedef struct HdiceEnv HdiceEnv;

/**
 * Opaque finished run.
 */
typedef struct HdiceRun HdiceRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *hdice_last_error(void);

/**
 * Parses a `key = value` config body.
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
enum HdiceStatus hdice_config_parse(const char *text, struct HdiceConfig **out);

/**
 * Overrides one key, with the same validation as the config file.
 *
 * # Safety
 * `cfg` must come from [`hdice_config_parse`]; strings must be NUL-terminated.
 */
enum HdiceStatus hdice_config_set(struct HdiceConfig *cfg, const char *key, const char *value);

/**
 * Writes the canonical echo into `buf` (NUL-terminated). `needed` receives
 * the required size including the terminator.
 *
 * # Safety
 * `buf` must hold `cap` bytes (it may be null when `cap` is 0).
 */
enum HdiceStatus hdice_config_echo(const struct HdiceConfig *cfg,
                                   char *buf,
                                   size_t cap,
                                   size_t *needed);

/**
 * # Safety
 * `cfg` must come from [`hdice_config_parse`] or be null.
 */
void hdice_config_free(struct HdiceConfig *cfg);

/**
 * Runs a full experiment. A run that aborts midway still yields a handle;
 * check [`hdice_run_aborted`].
 *
 * # Safety
 * `cfg` must be a live config handle; `out` must be writable.
 */
enum HdiceStatus hdice_run(const struct HdiceConfig *cfg, struct HdiceRun **out);

/**
 * # Safety
 * `run` must be a live run handle.
 */
enum HdiceStatus hdice_run_rows(const struct HdiceRun *run, size_t *rows);

/**
 * Episodes elapsed and eval return mean/std at metrics row `index`.
 *
 * # Safety
 * `run` must be a live run handle; out pointers must be writable.
 */
enum HdiceStatus hdice_run_row(const struct HdiceRun *run,
                               size_t index,
                               size_t *episodes,
                               double *mean,
                               double *std);

/**
 * `aborted` receives the abort iteration, or 0 when the run completed.
 *
 * # Safety
 * `run` must be a live run handle.
 */
enum HdiceStatus hdice_run_aborted(const struct HdiceRun *run, size_t *aborted);

/**
 * Writes `config.txt`, `metrics.csv` and `snapshot.json` into `dir`.
 *
 * # Safety
 * `run` must be a live run handle; `dir` must be NUL-terminated.
 */
enum HdiceStatus hdice_run_write(const struct HdiceRun *run, const char *dir);

/**
 * # Safety
 * `run` must come from [`hdice_run`] or be null.
 */
void hdice_run_free(struct HdiceRun *run);

/**
 * Creates an environment from an id such as `gridworld-v1+delayed`.
 *
 * # Safety
 * `id` must be NUL-terminated; `out` must be writable.
 */
enum HdiceStatus hdice_env_new(const char *id, struct HdiceEnv **out);

/**
 * Observation length and number of discrete actions (0 if continuous).
 *
 * # Safety
 * `env` must be a live environment handle.
 */
enum HdiceStatus hdice_env_dims(const struct HdiceEnv *env, size_t *obs_dim, size_t *n_actions);

/**
 * Resets and writes the first observation into `obs` (`cap` slots).
 *
 * # Safety
 * `env` must be a live environment handle; `obs` must hold `cap` doubles.
 */
enum HdiceStatus hdice_env_reset(struct HdiceEnv *env, uint64_t seed, double *obs, size_t cap);

/**
 * Takes discrete action `action`.
 *
 * # Safety
 * `env` must be a live environment handle; `obs` must hold `cap` doubles;
 * `reward` and `done` must be writable.
 */
enum HdiceStatus hdice_env_step(struct HdiceEnv *env,
                                size_t action,
                                double *obs,
                                size_t cap,
                                double *reward,
                                bool *done);

/**
 * # Safety
 * `env` must come from [`hdice_env_new`] or be null.
 */
void hdice_env_free(struct HdiceEnv *env);

/**
 * `π/h` from log-probabilities, optionally clipped to `[0, 1]`.
 *
 * # Safety
 * `ratio` must be writable.
 */
enum HdiceStatus hdice_direct_ratio(double log_pi, double log_h, bool clip, double *ratio);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HDICE_H */
