#ifndef TWEEZER_THERMO_H
#define TWEEZER_THERMO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TtStatus {
  TT_STATUS_OK = 0,
  TT_STATUS_NULL_ARGUMENT = 1,
  TT_STATUS_INVALID_ARGUMENT = 2,
  TT_STATUS_INVALID_OUTCOME = 3,
  TT_STATUS_DEGENERATE_POSTERIOR = 4,
  TT_STATUS_NOTHING_TO_UNDO = 5,
  TT_STATUS_IO = 6,
  TT_STATUS_PARSE = 7,
  TT_STATUS_EMPTY_RECORD = 8,
  TT_STATUS_INTERNAL = 9,
} TtStatus;

typedef enum TtPreset {
  TT_PRESET_DEEP = 0,
  TT_PRESET_SHALLOW = 1,
} TtPreset;

typedef struct TtSession TtSession;

// Session parameters. Fill with [`tt_config_preset`] and adjust fields.
// `lambda` is ignored when `single_atom` is nonzero.
typedef struct TtConfig {
  double depth_uk;
  double waist_um;
  double prior_min_uk;
  double prior_max_uk;
  uint32_t grid_points;
  int32_t single_atom;
  double lambda;
  uint32_t cap;
  double t_min_us;
  double t_max_us;
  double t_step_us;
  // Nonzero keeps the release time fixed at the first recommendation.
  int32_t a_priori;
} TtConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next call into this library from the same thread.
const char *tt_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *tt_version(void);

// Principal branch of the Lambert W function for `x >= -1/e`.
//
// # Safety
// `out` must be null or point to writable memory for one `double`.
enum TtStatus tt_lambert_w0(double x, double *out);

// Fraction of atoms recaptured after release for `t_us` at `temperature_uk`.
//
// # Safety
// `out` must be null or point to writable memory for one `double`.
enum TtStatus tt_recapture_fraction(double depth_uk,
                                    double waist_um,
                                    double temperature_uk,
                                    double t_us,
                                    double *out);

// Default parameters for a trap preset.
//
// # Safety
// `out` must be null or point to a writable `TtConfig`.
enum TtStatus tt_config_preset(enum TtPreset preset, struct TtConfig *out);

// Creates a session and stores it in `*out`. On failure `*out` is null.
//
// # Safety
// `config` must be null or point to a valid `TtConfig`; `out` must be null
// or point to writable storage for one pointer.
enum TtStatus tt_session_new(const struct TtConfig *config, struct TtSession **out);

// Releases a session. Null is accepted.
//
// # Safety
// `session` must be null or a pointer from [`tt_session_new`] that has not
// been freed.
void tt_session_free(struct TtSession *session);

// Recommended release time for the next shot, in µs.
//
// # Safety
// `session` must be null or a live session; `out` null or writable.
enum TtStatus tt_session_next_time_us(const struct TtSession *session, double *out);

// Records `n` atoms recaptured after a release of `t_us`. Any release time
// is accepted; pass the recommendation to follow the adaptive schedule.
//
// # Safety
// `session` must be null or a live session not used concurrently.
enum TtStatus tt_session_submit(struct TtSession *session, double t_us, int64_t n);

// Removes the last shot. Fails with [`TtStatus::NothingToUndo`] when empty.
//
// # Safety
// `session` must be null or a live session not used concurrently.
enum TtStatus tt_session_undo(struct TtSession *session);

// Number of recorded shots.
//
// # Safety
// `session` must be null or a live session; `out` null or writable.
enum TtStatus tt_session_shots(const struct TtSession *session, uintptr_t *out);

// Current estimate and error bar in µK.
//
// # Safety
// `session` must be null or a live session; outputs null or writable.
enum TtStatus tt_session_estimate(const struct TtSession *session,
                                  double *estimate_uk,
                                  double *delta_uk);

// Estimates the temperature of a stored record (CSV, or JSON by extension)
// under `config`. Time and policy fields of `config` are not used.
//
// # Safety
// `config` and `path` must be null or valid (`path` NUL-terminated);
// outputs null or writable.
enum TtStatus tt_estimate_record(const struct TtConfig *config,
                                 const char *path,
                                 double *estimate_uk,
                                 double *delta_uk);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TWEEZER_THERMO_H */
