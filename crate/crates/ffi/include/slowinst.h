#ifndef SLOWINST_H
#define SLOWINST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero is success.
 */
typedef enum SiStatus {
  SI_STATUS_OK = 0,
  SI_STATUS_NULL_POINTER = 1,
  SI_STATUS_INVALID_PARAMETER = 2,
  SI_STATUS_BRACKET_FAILURE = 3,
  SI_STATUS_COLLISION = 4,
  SI_STATUS_DEGENERATE_PHASE = 5,
  SI_STATUS_NUMERICAL = 6,
  SI_STATUS_SUPPORT = 7,
  SI_STATUS_SERIALIZATION = 8,
  SI_STATUS_BUFFER_TOO_SMALL = 9,
  SI_STATUS_INVALID_ENUM = 10,
  SI_STATUS_PANIC = 11,
} SiStatus;

typedef enum SiFamily {
  SI_FAMILY_L = 0,
  SI_FAMILY_M = 1,
} SiFamily;

typedef enum SiBranch {
  SI_BRANCH_PLUS = 0,
  SI_BRANCH_MINUS = 1,
  SI_BRANCH_ZERO = 2,
} SiBranch;

/**
 * Opaque model handle.
 */
typedef struct SiModel SiModel;

/**
 * The two (+,+,3,L,M) resonances ξ₃ < ξ₂, the p = 1 point ξ₁ and k.
 */
typedef struct SiResonancePoints {
  double xi1;
  double xi2;
  double xi3;
  double k;
} SiResonancePoints;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *si_version(void);

/**
 * Message for the last failure on this thread, or NULL after a success.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *si_last_error_message(void);

/**
 * Builds a model; parameters must lie in the supported regime.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum SiStatus si_model_new(double theta0,
                           double alpha0,
                           double omega0,
                           double epsilon,
                           struct SiModel **out);

/**
 * # Safety
 * `m` must be NULL or a handle from [`si_model_new`] not yet freed.
 */
void si_model_free(struct SiModel *m);

/**
 * The characteristic pair (ω, k).
 *
 * # Safety
 * `m` must be a live handle; outputs must be valid for writes.
 */
enum SiStatus si_model_phase(const struct SiModel *m, double *omega, double *k);

/**
 * Dispersion relation of a family at ξ (`family_id`: 0 = L, 1 = M).
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid for a write.
 */
enum SiStatus si_dispersion(const struct SiModel *m, int32_t family_id, double xi, double *out);

/**
 * # Safety
 * `m` must be a live handle; `out` must be valid for a write.
 */
enum SiStatus si_group_velocity(const struct SiModel *m, int32_t family_id, double xi, double *out);

/**
 * Growth coefficient γ₁ at ξ.
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid for a write.
 */
enum SiStatus si_gamma1(const struct SiModel *m, double xi, double *out);

/**
 * # Safety
 * `m` must be a live handle; `out` must be valid for a write.
 */
enum SiStatus si_resonance_points(const struct SiModel *m, struct SiResonancePoints *out);

/**
 * ξ₀, the point of {ξ₂, ξ₃} where μ is smaller, and the remaining point.
 *
 * # Safety
 * `m` must be a live handle; outputs must be valid for writes.
 */
enum SiStatus si_select_xi0(const struct SiModel *m, double *xi0, double *xi0_r);

/**
 * Resonance set of (i, j, p, δ, σ) on the default frequency window,
 * ascending. Writes the count to `len` in every case; when it exceeds
 * `cap` nothing is copied and `SI_STATUS_BUFFER_TOO_SMALL` is returned.
 * `buf` may be NULL when `cap` is zero.
 *
 * # Safety
 * `m` must be a live handle; `buf` must hold `cap` doubles; `len` must be
 * valid for a write.
 */
enum SiStatus si_find_resonances(const struct SiModel *m,
                                 int32_t branch_i,
                                 int32_t branch_j,
                                 int32_t p,
                                 int32_t delta,
                                 int32_t sigma,
                                 double *buf,
                                 size_t cap,
                                 size_t *len);

/**
 * Full resonance audit with default tolerances, as a JSON document.
 * Release the string with [`si_string_free`].
 *
 * # Safety
 * `m` must be a live handle; `out` must be valid for a pointer write.
 */
enum SiStatus si_analyze_json(const struct SiModel *m, char **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void si_string_free(char *s);

/**
 * Name of a status code as a static string.
 */
const char *si_status_name(enum SiStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLOWINST_H */
