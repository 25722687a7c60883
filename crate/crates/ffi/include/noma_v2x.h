#ifndef NOMA_V2X_H
#define NOMA_V2X_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum NvStatus {
  NV_STATUS_OK = 0,
  NV_STATUS_NULL_POINTER = 1,
  NV_STATUS_INVALID_INPUT = 2,
  NV_STATUS_CONFIG = 3,
  NV_STATUS_IO = 4,
  NV_STATUS_FRAME_LOST = 5,
  NV_STATUS_ESTIMATION_FAILED = 6,
  NV_STATUS_OUT_OF_RANGE = 7,
  NV_STATUS_PANIC = 8,
} NvStatus;

/**
 * Output file format for [`nv_scenario_write_timeseries`].
 */
typedef enum NvFormat {
  NV_FORMAT_CSV = 0,
  NV_FORMAT_JSON_LINES = 1,
} NvFormat;

/**
 * Result of [`nv_sweep_ber`].
 */
typedef struct NvBerCurve NvBerCurve;

/**
 * Scenario configuration.
 */
typedef struct NvConfig NvConfig;

/**
 * Result of [`nv_scenario_run`].
 */
typedef struct NvScenarioRun NvScenarioRun;

/**
 * One OFDM symbol of one user. Missing estimates are NaN.
 */
typedef struct NvSymbolMetrics {
  double time_s;
  uint32_t user;
  double est_snr_db;
  double est_cfo_hz;
  double ber;
  bool outage;
  bool detected;
} NvSymbolMetrics;

/**
 * Per-user bit totals of one stage of a scenario run.
 */
typedef struct NvStageTotals {
  uint64_t bits;
  uint64_t errors;
  uint64_t frames;
  uint64_t lost_frames;
} NvStageTotals;

/**
 * One point of a BER curve. `ber`, `ci_low` and `ci_high` are NaN when no
 * frame was detected.
 */
typedef struct NvBerPoint {
  double snr_db;
  uint32_t user;
  double ber;
  double ci_low;
  double ci_high;
  uint64_t bits;
  uint64_t lost_frames;
} NvBerPoint;

/**
 * Maximum-likelihood Rician fit.
 */
typedef struct NvKFactor {
  double k;
  double non_centrality;
  double scale;
} NvKFactor;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the calling thread's last error message.
 */
size_t nv_last_error_length(void);

/**
 * Copies the last error message, NUL-terminated and truncated to fit,
 * into `buf`. Returns the number of bytes written without the NUL.
 *
 * # Safety
 * `buf` must point to `len` writable bytes, or be null when `len` is 0.
 */
size_t nv_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nv_version(void);

/**
 * Maximum Doppler shift in Hz.
 */
double nv_doppler_shift(double speed_mps, double carrier_frequency_hz);

/**
 * Creates a config with the testbed defaults.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum NvStatus nv_config_new(struct NvConfig **out);

/**
 * Parses a TOML config string.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NvStatus nv_config_parse(const char *toml, struct NvConfig **out);

/**
 * Reads a TOML config file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum NvStatus nv_config_load(const char *path, struct NvConfig **out);

/**
 * Replaces the run seed.
 *
 * # Safety
 * `config` must be a live handle.
 */
enum NvStatus nv_config_set_seed(struct NvConfig *config, uint64_t seed);

/**
 * Number of users in the config.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_config_user_count(const struct NvConfig *config, size_t *out);

/**
 * Releases a config; null is ignored.
 *
 * # Safety
 * `config` must come from this library and not be used afterwards.
 */
void nv_config_free(struct NvConfig *config);

/**
 * Replays the two-stage scenario.
 *
 * # Safety
 * `config` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_scenario_run(const struct NvConfig *config, struct NvScenarioRun **out);

/**
 * Number of rows (symbols times users) in the time series.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_scenario_row_count(const struct NvScenarioRun *run, size_t *out);

/**
 * Copies row `index` of the time series.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_scenario_row(const struct NvScenarioRun *run,
                              size_t index,
                              struct NvSymbolMetrics *out);

/**
 * Bit totals of 1-based `user` in the stationary (`mobile` false) or
 * mobile stage.
 *
 * # Safety
 * `run` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_scenario_stage_totals(const struct NvScenarioRun *run,
                                       uint32_t user,
                                       bool mobile,
                                       struct NvStageTotals *out);

/**
 * Writes the time series to `path`.
 *
 * # Safety
 * `run` must be a live handle and `path` a NUL-terminated string.
 */
enum NvStatus nv_scenario_write_timeseries(const struct NvScenarioRun *run,
                                           enum NvFormat format,
                                           const char *path);

/**
 * Releases a scenario run; null is ignored.
 *
 * # Safety
 * `run` must come from this library and not be used afterwards.
 */
void nv_scenario_free(struct NvScenarioRun *run);

/**
 * Monte Carlo BER at each of the `count` SNR values (dB, `-INFINITY` for
 * noise only) with at least `min_bits` bits per user and point.
 *
 * # Safety
 * `config` must be a live handle, `snr_db` must point to `count` doubles
 * and `out` must be a valid pointer.
 */
enum NvStatus nv_sweep_ber(const struct NvConfig *config,
                           const double *snr_db,
                           size_t count,
                           uint64_t min_bits,
                           uint64_t seed,
                           struct NvBerCurve **out);

/**
 * Number of points (SNR values times users), sorted by SNR then user.
 *
 * # Safety
 * `curve` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_curve_point_count(const struct NvBerCurve *curve, size_t *out);

/**
 * Copies point `index` of the curve.
 *
 * # Safety
 * `curve` must be a live handle and `out` a valid pointer.
 */
enum NvStatus nv_curve_point(const struct NvBerCurve *curve, size_t index, struct NvBerPoint *out);

/**
 * Releases a curve; null is ignored.
 *
 * # Safety
 * `curve` must come from this library and not be used afterwards.
 */
void nv_curve_free(struct NvBerCurve *curve);

/**
 * Fits a Rician distribution to `count` envelope magnitudes.
 *
 * # Safety
 * `envelope` must point to `count` doubles and `out` must be valid.
 */
enum NvStatus nv_estimate_k_factor(const double *envelope, size_t count, struct NvKFactor *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NOMA_V2X_H */
