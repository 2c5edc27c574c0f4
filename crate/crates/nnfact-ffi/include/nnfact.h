#ifndef NNFACT_H
#define NNFACT_H

/* Generated by cbindgen; edit the Rust source instead. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes shared by every entry point.
 */
typedef enum NnfStatus {
  /*
   Success.
   */
  NNF_STATUS_OK = 0,
  /*
   Null pointer, invalid UTF-8, or an internal invariant failure.
   */
  NNF_STATUS_INTERNAL = 1,
  /*
   Input text or JSON failed to parse.
   */
  NNF_STATUS_PARSE = 2,
  /*
   The pipeline could not process a well-formed input.
   */
  NNF_STATUS_PIPELINE = 3,
  /*
   Semantically rejected: non-root, failed probe, failed verification.
   */
  NNF_STATUS_SEMANTIC = 4,
} NnfStatus;

/*
 Opaque factorization.
 */
typedef struct NnfFactorization NnfFactorization;

/*
 Opaque compiled instance.
 */
typedef struct NnfInstance NnfInstance;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the most recent failure on this thread. Valid until the next
 failing call; do not free.
 */
const char *nnf_last_error(void);

/*
 Compiles the polynomial text (e.g. "x1 + x2 - 1") into an instance.

 # Safety
 `poly` must be a valid C string; `out` a valid pointer.
 */
enum NnfStatus nnf_compile(const char *poly, struct NnfInstance **out);

/*
 # Safety
 `json` must be a valid C string; `out` a valid pointer.
 */
enum NnfStatus nnf_instance_from_json(const char *json, struct NnfInstance **out);

/*
 # Safety
 `inst` must come from this library; `out` must be valid. Free the string
 with `nnf_string_free`.
 */
enum NnfStatus nnf_instance_to_json(const struct NnfInstance *inst, char **out);

/*
 Target factorization size of the instance, or -1 on null.

 # Safety
 `inst` must come from this library or be null.
 */
int64_t nnf_instance_k(const struct NnfInstance *inst);

/*
 Number of original variables, or -1 on null.

 # Safety
 `inst` must come from this library or be null.
 */
int64_t nnf_instance_vars(const struct NnfInstance *inst);

/*
 Matrix dimensions, or -1 on null.

 # Safety
 `inst` must come from this library or be null.
 */
int64_t nnf_instance_rows(const struct NnfInstance *inst);

/*
 # Safety
 `inst` must come from this library or be null.
 */
int64_t nnf_instance_cols(const struct NnfInstance *inst);

/*
 Builds the exact witness factorization at a root given as
 `"x1=1/2,x2=1/2"`.

 # Safety
 `inst` from this library; `assign` a valid C string; `out` valid.
 */
enum NnfStatus nnf_witness(const struct NnfInstance *inst,
                           const char *assign,
                           struct NnfFactorization **out);

/*
 Extracts the root; writes it in the same `"x1=...,x2=..."` format.

 # Safety
 Handles from this library; `out` valid. Free with `nnf_string_free`.
 */
enum NnfStatus nnf_extract(const struct NnfInstance *inst,
                           const struct NnfFactorization *fac,
                           double tol,
                           char **out);

/*
 Verifies the factorization against the instance. `tol < 0` selects exact
 mode. Writes the JSON report; returns `NNF_STATUS_OK` only if every
 check passed.

 # Safety
 Handles from this library; `report_out` valid or null.
 */
enum NnfStatus nnf_verify(const struct NnfInstance *inst,
                          const struct NnfFactorization *fac,
                          double tol,
                          char **report_out);

/*
 # Safety
 `json` a valid C string; `out` valid.
 */
enum NnfStatus nnf_factorization_from_json(const char *json, struct NnfFactorization **out);

/*
 # Safety
 `fac` from this library; `out` valid. Free with `nnf_string_free`.
 */
enum NnfStatus nnf_factorization_to_json(const struct NnfFactorization *fac, char **out);

/*
 Numeric factorization search on a matrix given as Matrix JSON. Returns
 `NNF_STATUS_SEMANTIC` when no factorization meets the threshold.

 # Safety
 `matrix_json` a valid C string; `out` valid.
 */
enum NnfStatus nnf_solve(const char *matrix_json,
                         uint64_t rank,
                         uint64_t restarts,
                         uint64_t max_iters,
                         double threshold,
                         uint64_t seed,
                         uint64_t threads,
                         struct NnfFactorization **out);

/*
 # Safety
 `inst` must come from this library (or be null) and not be used again.
 */
void nnf_instance_free(struct NnfInstance *inst);

/*
 # Safety
 `fac` must come from this library (or be null) and not be used again.
 */
void nnf_factorization_free(struct NnfFactorization *fac);

/*
 # Safety
 `s` must have been returned by this library (or be null) and not be used
 again.
 */
void nnf_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NNFACT_H */
