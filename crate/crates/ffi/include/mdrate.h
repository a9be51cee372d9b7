#ifndef MDRATE_H
#define MDRATE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MdrStatus {
  MdrStatus_Ok = 0,
  MdrStatus_NullPointer = 1,
  MdrStatus_InvalidUtf8 = 2,
  MdrStatus_Parse = 3,
  MdrStatus_InvalidInstance = 4,
  MdrStatus_InvalidArgument = 5,
  MdrStatus_BufferTooSmall = 6,
  MdrStatus_Numerical = 7,
  MdrStatus_Internal = 8,
  MdrStatus_Panic = 9,
} MdrStatus;

typedef enum MdrCase {
  MdrCase_Interior = 0,
  MdrCase_ZeroEigs = 1,
  MdrCase_OneEigs = 2,
  MdrCase_Both = 3,
} MdrCase;

/**
 * Opaque problem instance.
 */
typedef struct MdrInstance MdrInstance;

/**
 * Opaque sum-rate result.
 */
typedef struct MdrSumRate MdrSumRate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next `mdr_` call on the same thread.
 */
const char *mdr_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *mdr_version(void);

/**
 * Parses an instance document (NUL-terminated UTF-8).
 *
 * # Safety
 * `text` must be a valid C string and `out` a valid pointer.
 */
enum MdrStatus mdr_instance_parse(const char *text, struct MdrInstance **out);

/**
 * Builds and validates an instance from row-major buffers: `kx` and `d0`
 * hold `n·n` doubles, `d` holds `l` consecutive `n·n` matrices.
 *
 * # Safety
 * Buffers must hold the stated number of doubles; `out` must be valid.
 */
enum MdrStatus mdr_instance_new(uintptr_t n,
                                uintptr_t l,
                                const double *kx,
                                const double *d,
                                const double *d0,
                                struct MdrInstance **out);

/**
 * # Safety
 * `inst` must come from `mdr_instance_parse`/`mdr_instance_new` or be null.
 */
void mdr_instance_free(struct MdrInstance *inst);

/**
 * Source dimension `N`, 0 for a null handle.
 *
 * # Safety
 * `inst` must be a live handle or null.
 */
uintptr_t mdr_instance_dim(const struct MdrInstance *inst);

/**
 * Number of descriptions `L`, 0 for a null handle.
 *
 * # Safety
 * `inst` must be a live handle or null.
 */
uintptr_t mdr_instance_descriptions(const struct MdrInstance *inst);

/**
 * Solves for the exact sum rate.
 *
 * # Safety
 * `inst` must be a live handle and `out` a valid pointer.
 */
enum MdrStatus mdr_sum_rate(const struct MdrInstance *inst, struct MdrSumRate **out);

/**
 * # Safety
 * `res` must come from `mdr_sum_rate` or be null.
 */
void mdr_sum_rate_free(struct MdrSumRate *res);

/**
 * Sum rate in nats, NaN for a null handle.
 *
 * # Safety
 * `res` must be a live handle or null.
 */
double mdr_sum_rate_nats(const struct MdrSumRate *res);

/**
 * # Safety
 * `res` must be a live handle and `out` a valid pointer.
 */
enum MdrStatus mdr_sum_rate_case(const struct MdrSumRate *res, enum MdrCase *out);

/**
 * Optimal coupling `A*` (original frame) into `out[0..n·n]`.
 *
 * # Safety
 * `res` must be a live handle and `out` hold `len` doubles.
 */
enum MdrStatus mdr_sum_rate_a_star(const struct MdrSumRate *res, double *out, uintptr_t len);

/**
 * Noise block `Kw_l` of the optimal channel, `l` 0-based.
 *
 * # Safety
 * `res` must be a live handle and `out` hold `len` doubles.
 */
enum MdrStatus mdr_sum_rate_kw_block(const struct MdrSumRate *res,
                                     uintptr_t l,
                                     double *out,
                                     uintptr_t len);

/**
 * Achieved distortion of receiver `l` (0-based); `l = L` selects the
 * central receiver.
 *
 * # Safety
 * `res` must be a live handle and `out` hold `len` doubles.
 */
enum MdrStatus mdr_sum_rate_achieved(const struct MdrSumRate *res,
                                     uintptr_t l,
                                     double *out,
                                     uintptr_t len);

/**
 * Closed-form scalar solution. `case_out` receives 1, 2 or 3.
 *
 * # Safety
 * `d` must hold `l` doubles; output pointers must be valid.
 */
enum MdrStatus mdr_scalar_solve(double sigma_x2,
                                const double *d,
                                uintptr_t l,
                                double d0,
                                int32_t *case_out,
                                double *a_star_out,
                                double *rate_out);

/**
 * Corner points `B1 = (out[0], out[1])`, `B2 = (out[2], out[3])` of a
 * two-description instance, nats.
 *
 * # Safety
 * `inst` must be a live handle and `out` hold 4 doubles.
 */
enum MdrStatus mdr_two_description_corners(const struct MdrInstance *inst, double *out);

/**
 * Monte Carlo check of the optimal channel. `tol <= 0` selects the default
 * band. A completed run returns `Ok` whatever the verdict in `pass_out`.
 *
 * # Safety
 * `inst` must be a live handle; output pointers must be valid.
 */
enum MdrStatus mdr_verify(const struct MdrInstance *inst,
                          uintptr_t samples,
                          uint64_t seed,
                          double tol,
                          double *max_rel_err_out,
                          bool *pass_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MDRATE_H */
