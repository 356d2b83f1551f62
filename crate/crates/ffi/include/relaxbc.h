#ifndef RELAXBC_H
#define RELAXBC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes; the first four agree with the command-line exit codes.
typedef enum RbcStatus {
  RBC_STATUS_OK = 0,
  RBC_STATUS_CHECK_FAILED = 1,
  RBC_STATUS_CONFIG_ERROR = 2,
  RBC_STATUS_NUMERICAL_ERROR = 3,
  RBC_STATUS_NULL_POINTER = 4,
  RBC_STATUS_PANIC = 5,
} RbcStatus;

// Opaque reduced boundary condition handle.
typedef struct RbcReducedBc RbcReducedBc;

// Opaque system handle.
typedef struct RbcSystem RbcSystem;

// Characteristic counts of a system.
typedef struct RbcIndices {
  size_t n;
  size_t r;
  size_t d;
  size_t n0;
  size_t n_plus;
  size_t n_minus;
  size_t n10;
  size_t n1_plus;
  size_t n1_minus;
} RbcIndices;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *rbc_last_error_message(void);

// Parses a system from a NUL-terminated JSON document.
//
// # Safety
// `json` must be a valid C string and `out` a valid pointer.
enum RbcStatus rbc_system_from_json(const char *json, struct RbcSystem **out);

// # Safety
// `sys` must come from [`rbc_system_from_json`] or be null.
void rbc_system_free(struct RbcSystem *sys);

// # Safety
// Both pointers must be valid.
enum RbcStatus rbc_system_indices(const struct RbcSystem *sys, struct RbcIndices *out);

// Runs the standing-assumption checks; `*pass` is 1 if all hold. On
// failure the failing check names are the last error message.
//
// # Safety
// Both pointers must be valid.
enum RbcStatus rbc_system_validate(const struct RbcSystem *sys, int *pass);

// Samples the generalized Kreiss condition. `resolution` 0 selects the
// default grid and `threshold <= 0` the default constant.
//
// # Safety
// `sys`, `min_ratio` and `pass` must be valid.
enum RbcStatus rbc_gkc(const struct RbcSystem *sys,
                       size_t resolution,
                       double threshold,
                       uint64_t seed,
                       double *min_ratio,
                       int *pass);

// Derives the reduced boundary condition with default sampling. Without
// `force` a failed Kreiss check returns [`RbcStatus::CheckFailed`].
//
// # Safety
// `sys` and `out` must be valid.
enum RbcStatus rbc_reduce(const struct RbcSystem *sys, int force, struct RbcReducedBc **out);

// # Safety
// `bc` must come from [`rbc_reduce`] or be null.
void rbc_reduced_bc_free(struct RbcReducedBc *bc);

// Number of reduced conditions (rows of the operator), 0 for a null handle.
//
// # Safety
// `bc` must be valid or null.
size_t rbc_reduced_bc_rows(const struct RbcReducedBc *bc);

// Number of equilibrium unknowns (operator columns).
//
// # Safety
// `bc` must be valid or null.
size_t rbc_reduced_bc_unknowns(const struct RbcReducedBc *bc);

// Number of boundary data components (right-hand side columns).
//
// # Safety
// `bc` must be valid or null.
size_t rbc_reduced_bc_data_len(const struct RbcReducedBc *bc);

// Copies the row-reduced operator acting on the equilibrium state, row
// major, into `buf` (at least rows × unknowns values).
//
// # Safety
// `bc` must be valid and `buf` must hold `len` doubles.
enum RbcStatus rbc_reduced_bc_operator(const struct RbcReducedBc *bc, double *buf, size_t len);

// Copies the matching right-hand side on the boundary data, row major.
//
// # Safety
// `bc` must be valid and `buf` must hold `len` doubles.
enum RbcStatus rbc_reduced_bc_rhs(const struct RbcReducedBc *bc, double *buf, size_t len);

// Smallest sampled reduced Kreiss ratio; 1 when the condition is vacuous.
//
// # Safety
// `bc` must be valid or null.
double rbc_reduced_bc_ukc_min_ratio(const struct RbcReducedBc *bc);

// JSON summary (equations, certificate, residuals). Owned by the handle.
//
// # Safety
// `bc` must be valid or null.
const char *rbc_reduced_bc_report_json(const struct RbcReducedBc *bc);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RELAXBC_H */
