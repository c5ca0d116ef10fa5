#ifndef RENORM_PERC_H
#define RENORM_PERC_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. 1 to 8 mirror the library error kinds.
 */
typedef enum RpStatus {
  RP_STATUS_OK = 0,
  RP_STATUS_CONFIG = 1,
  RP_STATUS_CONSISTENCY = 2,
  RP_STATUS_DOMAIN = 3,
  RP_STATUS_PRECONDITION = 4,
  RP_STATUS_UNSUPPORTED_SCALE = 5,
  RP_STATUS_OUT_OF_RANGE = 6,
  RP_STATUS_PARITY = 7,
  RP_STATUS_IO = 8,
  RP_STATUS_NULL_POINTER = 9,
  RP_STATUS_PANIC = 10,
} RpStatus;

typedef struct RpEnvironment RpEnvironment;

typedef struct RpHierarchy RpHierarchy;

typedef struct RpLayers RpLayers;

/**
 * A frequency with its 95% Wilson interval.
 */
typedef struct RpEstimate {
  double value;
  double ci_low;
  double ci_high;
  uint64_t n;
} RpEstimate;

typedef struct RpSurvey {
  uint64_t survivors;
  uint64_t reps;
  struct RpEstimate frequency;
} RpSurvey;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, empty after a success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *rp_last_error(void);

/**
 * Library version, a static string.
 */
const char *rp_version(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void rp_string_free(char *s);

/**
 * Samples bad lines 0..window_len.
 */
enum RpStatus rp_environment_sample(double delta,
                                    uint64_t l,
                                    uint64_t window_len,
                                    uint64_t seed,
                                    struct RpEnvironment **env_out);

/**
 * Environment with the given sorted bad lines.
 *
 * # Safety
 * `gamma` must point to `len` readable values (or be null with len 0).
 */
enum RpStatus rp_environment_from_gamma(double delta,
                                        uint64_t l,
                                        uint64_t window_len,
                                        uint64_t seed,
                                        const uint64_t *gamma,
                                        size_t len,
                                        struct RpEnvironment **env_out);

/**
 * # Safety
 * `env` must be null or a handle from this library, freed at most once.
 */
void rp_environment_free(struct RpEnvironment *env);

/**
 * Number of bad lines in the window.
 */
enum RpStatus rp_environment_bad_count(const struct RpEnvironment *env, size_t *count_out);

/**
 * Copies up to `cap` bad lines into `buf`; `written_out` gets the count copied.
 *
 * # Safety
 * `buf` must point to `cap` writable values (or be null with cap 0).
 */
enum RpStatus rp_environment_gamma(const struct RpEnvironment *env,
                                   uint64_t *buf,
                                   size_t cap,
                                   size_t *written_out);

enum RpStatus rp_environment_is_bad(const struct RpEnvironment *env, uint64_t row, bool *bad_out);

/**
 * JSON export; free the result with `rp_string_free`.
 */
enum RpStatus rp_environment_to_json(const struct RpEnvironment *env, char **json_out);

enum RpStatus rp_hierarchy_build(const struct RpEnvironment *env,
                                 uint32_t k_max,
                                 struct RpHierarchy **h_out);

/**
 * # Safety
 * `h` must be null or a handle from this library, freed at most once.
 */
void rp_hierarchy_free(struct RpHierarchy *h);

/**
 * Clusters across all levels, singletons included.
 */
enum RpStatus rp_hierarchy_cluster_count(const struct RpHierarchy *h, size_t *count_out);

/**
 * Violations of the hierarchy and genealogy rules; 0 means valid.
 */
enum RpStatus rp_hierarchy_verify(const struct RpHierarchy *h, size_t *violations_out);

enum RpStatus rp_hierarchy_to_json(const struct RpHierarchy *h, char **json_out);

/**
 * χ of the environment. `resolved_out` is false when clusters at the
 * window edge could still raise it; `chi_out` is then a lower bound.
 */
enum RpStatus rp_chi(const struct RpEnvironment *env,
                     const struct RpHierarchy *h,
                     uint32_t *chi_out,
                     bool *resolved_out);

/**
 * Forward and reversed layer stacks. Needs χ = 0.
 */
enum RpStatus rp_layers_build(const struct RpEnvironment *env,
                              const struct RpHierarchy *h,
                              struct RpLayers **layers_out);

/**
 * # Safety
 * `layers` must be null or a handle from this library, freed at most once.
 */
void rp_layers_free(struct RpLayers *layers);

/**
 * Number of k-layers in the forward (`reversed` false) or reversed stack.
 */
enum RpStatus rp_layers_count(const struct RpLayers *layers,
                              uint32_t k,
                              bool reversed,
                              size_t *count_out);

enum RpStatus rp_layers_verify(const struct RpLayers *layers,
                               const struct RpHierarchy *h,
                               size_t *violations_out);

enum RpStatus rp_layers_to_json(const struct RpLayers *layers, bool reversed, char **json_out);

/**
 * Survival to `depth` from the origin with `reps` coupled replicas.
 */
enum RpStatus rp_survival(double delta,
                          uint64_t l,
                          double p_good,
                          double p_bad,
                          uint64_t depth,
                          uint64_t reps,
                          uint64_t seed,
                          struct RpSurvey *survey_out);

/**
 * Homogeneous survival frequency at parameter p.
 */
enum RpStatus rp_estimate_theta(double p,
                                uint64_t depth,
                                uint64_t reps,
                                uint64_t seed,
                                struct RpEstimate *est_out);

enum RpStatus rp_cramer_f(double p, double *value_out);

enum RpStatus rp_choose_n(double p_good, uint32_t *n_out);

/**
 * Claim report as JSON, with the minimal L searched over 10^4..10^7.
 */
enum RpStatus rp_check_claims_json(double p_good,
                                   double p_bad,
                                   double kappa,
                                   double rho,
                                   double c,
                                   uint64_t l,
                                   uint32_t m_max,
                                   char **json_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RENORM_PERC_H */
