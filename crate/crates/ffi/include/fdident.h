#ifndef FDIDENT_H
#define FDIDENT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FdiStatus {
  FDI_STATUS_OK = 0,
  FDI_STATUS_NULL_POINTER = 1,
  FDI_STATUS_INVALID_ARGUMENT = 2,
  FDI_STATUS_CONFIG = 3,
  FDI_STATUS_NUMERICAL = 4,
  FDI_STATUS_IO = 5,
  FDI_STATUS_BUFFER_TOO_SMALL = 6,
  FDI_STATUS_PANIC = 7,
} FdiStatus;

/**
 * Seeded synthetic experiment with its ground-truth system.
 */
typedef struct FdiExperiment FdiExperiment;

/**
 * Outcome of one estimation.
 */
typedef struct FdiReport FdiReport;

/**
 * Sampled multichannel record.
 */
typedef struct FdiSignal FdiSignal;

/**
 * Window function with its record length.
 */
typedef struct FdiWindow FdiWindow;

/**
 * Model orders of `sum_j A_j x^(j) = sum_k B_k u^(k)`.
 */
typedef struct FdiStructure {
  size_t n_x;
  size_t n_u;
  size_t n_a;
  size_t n_b;
} FdiStructure;

/**
 * Summary numbers of an estimate.
 */
typedef struct FdiReportSummary {
  size_t rank;
  double inverse_condition;
  double imag_norm;
  double residual_l2;
  size_t band_bins;
  double wall_time;
} FdiReportSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *fdi_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fdi_version(void);

/**
 * Parses a window such as `"cinf:4"`, `"sin:2"` or `"rect"` over `length` seconds.
 *
 * # Safety
 * `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FdiStatus fdi_window_new(const char *spec, double length, struct FdiWindow **out_window);

/**
 * # Safety
 * `window` must be null or a handle from [`fdi_window_new`] not yet freed.
 */
void fdi_window_free(struct FdiWindow *window);

/**
 * `k`-th derivative of the window at `t`.
 *
 * # Safety
 * `window` must be a live handle and `out_value` a valid pointer.
 */
enum FdiStatus fdi_window_value(const struct FdiWindow *window,
                                size_t k,
                                double t,
                                double *out_value);

/**
 * Leakage frequency `f_err` of the `k`-th derivative at threshold `p`, in
 * units of `1/T`. Writes `+inf` when it lies beyond the search range.
 *
 * # Safety
 * `window` must be a live handle and `out_value` a valid pointer.
 */
enum FdiStatus fdi_window_f_err(const struct FdiWindow *window,
                                size_t k,
                                double p,
                                double *out_value);

/**
 * Builds a record from channel-major real and imaginary parts, each of
 * length `n_channels * n_samples`. `im` may be null for real data. The
 * terminal sample `s(T)` is optional (`terminal_re` null for none).
 *
 * # Safety
 * Non-null arrays must hold the stated number of elements.
 */
enum FdiStatus fdi_signal_new(double t_len,
                              size_t n_channels,
                              size_t n_samples,
                              const double *re,
                              const double *im,
                              const double *terminal_re,
                              const double *terminal_im,
                              struct FdiSignal **out_signal);

/**
 * # Safety
 * `signal` must be null or a live handle.
 */
void fdi_signal_free(struct FdiSignal *signal);

/**
 * Channel count, sample count and record length.
 *
 * # Safety
 * `signal` must be a live handle; output pointers may be null.
 */
enum FdiStatus fdi_signal_shape(const struct FdiSignal *signal,
                                size_t *n_channels,
                                size_t *n_samples,
                                double *t_len);

/**
 * Copies the samples out in the layout accepted by [`fdi_signal_new`].
 * Either array may be null to skip it.
 *
 * # Safety
 * Non-null arrays must hold `capacity` elements.
 */
enum FdiStatus fdi_signal_values(const struct FdiSignal *signal,
                                 double *re,
                                 double *im,
                                 size_t capacity);

/**
 * Seeded experiment; `dt_max` bounds the integration step.
 *
 * # Safety
 * `out_experiment` must be a valid pointer.
 */
enum FdiStatus fdi_experiment_new(struct FdiStructure structure,
                                  size_t n_tones,
                                  double tone_min,
                                  double tone_max,
                                  double t_len,
                                  double dt_max,
                                  uint64_t seed,
                                  struct FdiExperiment **out_experiment);

/**
 * Five states and inputs, first order, 85 tones on `[1, 20√2]` Hz, `T = 1`.
 *
 * # Safety
 * `out_experiment` must be a valid pointer.
 */
enum FdiStatus fdi_experiment_default(uint64_t seed, struct FdiExperiment **out_experiment);

/**
 * # Safety
 * `experiment` must be null or a live handle.
 */
void fdi_experiment_free(struct FdiExperiment *experiment);

/**
 * Simulates noiseless state and input records with `n_samples` samples each
 * (plus the terminal sample). Both outputs must be freed by the caller.
 *
 * # Safety
 * `experiment` must be a live handle; output pointers must be valid.
 */
enum FdiStatus fdi_experiment_record(const struct FdiExperiment *experiment,
                                     size_t n_samples,
                                     struct FdiSignal **out_x,
                                     struct FdiSignal **out_u);

/**
 * True parameters `θ = [A_0 .. A_{n_a-1} | B_0 .. B_{n_b}]`, row-major.
 * Pass a null `buf` to query the shape only.
 *
 * # Safety
 * `experiment` must be a live handle; a non-null `buf` must hold `capacity` elements.
 */
enum FdiStatus fdi_experiment_theta(const struct FdiExperiment *experiment,
                                    double *buf,
                                    size_t capacity,
                                    size_t *rows,
                                    size_t *cols);

/**
 * Estimates a model from `x` and `u`.
 *
 * `method` is one of `corrected`, `ps`, `mixed`, `naive`; `window` (for
 * corrected and mixed) is parsed like [`fdi_window_new`] and may be null
 * for the rectangular methods. `n_p` sets the polynomial terms of ps and mixed.
 *
 * # Safety
 * Handles must be live, strings NUL-terminated, `out_report` valid.
 */
enum FdiStatus fdi_identify(const struct FdiSignal *x,
                            const struct FdiSignal *u,
                            struct FdiStructure structure,
                            const char *method,
                            const char *window,
                            size_t n_p,
                            struct FdiReport **out_report);

/**
 * # Safety
 * `report` must be null or a live handle.
 */
void fdi_report_free(struct FdiReport *report);

/**
 * Estimated parameters in the layout of [`fdi_experiment_theta`].
 *
 * # Safety
 * `report` must be a live handle; a non-null `buf` must hold `capacity` elements.
 */
enum FdiStatus fdi_report_theta(const struct FdiReport *report,
                                double *buf,
                                size_t capacity,
                                size_t *rows,
                                size_t *cols);

/**
 * # Safety
 * `report` must be a live handle and `out_summary` a valid pointer.
 */
enum FdiStatus fdi_report_summary(const struct FdiReport *report,
                                  struct FdiReportSummary *out_summary);

/**
 * `‖θ - θ̃‖` against an experiment's ground truth.
 *
 * # Safety
 * Handles must be live and `out_error` a valid pointer.
 */
enum FdiStatus fdi_report_param_error(const struct FdiReport *report,
                                      const struct FdiExperiment *experiment,
                                      double *out_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FDIDENT_H */
