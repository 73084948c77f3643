#ifndef SQA_H
#define SQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SqaStatus {
  SQA_STATUS_OK = 0,
  SQA_STATUS_NULL_POINTER = 1,
  SQA_STATUS_INVALID_ARGUMENT = 2,
  SQA_STATUS_CAPACITY = 3,
  SQA_STATUS_IO = 4,
  SQA_STATUS_PARSE = 5,
  SQA_STATUS_NUMERICAL = 6,
  SQA_STATUS_PANIC = 7,
} SqaStatus;

typedef enum SqaDriver {
  SQA_DRIVER_TF = 0,
  SQA_DRIVER_FI = 1,
  SQA_DRIVER_XX = 2,
} SqaDriver;

typedef enum SqaMode {
  SQA_MODE_GLOBAL = 0,
  SQA_MODE_SEMILOCAL = 1,
} SqaMode;

/**
 * Opaque problem instance.
 */
typedef struct SqaInstance SqaInstance;

typedef struct SqaAnnealOptions {
  enum SqaDriver driver;
  enum SqaMode mode;
  double gamma0;
  double lambda0;
  double beta;
  double trotter_step;
  uint64_t t_final;
  uint64_t seed;
} SqaAnnealOptions;

typedef struct SqaAnnealResult {
  double e_min_slices;
  double e_mean_slices;
  /**
   * `e_min_slices - E0`; NaN when the ground energy is unknown.
   */
  double e_residual;
  double mean_cluster_size;
  double acceptance;
  double cost;
  size_t m_slices;
} SqaAnnealResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sqa_version(void);

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into the library on this thread.
 */
const char *sqa_last_error_message(void);

/**
 * Random square-lattice spin glass with couplings uniform on [-1, 1].
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SqaStatus sqa_instance_generate(size_t width,
                                     size_t height,
                                     bool periodic,
                                     uint64_t seed,
                                     struct SqaInstance **out);

/**
 * Reads an instance file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SqaStatus sqa_instance_read(const char *path, struct SqaInstance **out);

/**
 * Writes an instance file.
 *
 * # Safety
 * `instance` must come from this library; `path` must be NUL-terminated.
 */
enum SqaStatus sqa_instance_write(const struct SqaInstance *instance, const char *path);

/**
 * Releases an instance. Null is ignored.
 *
 * # Safety
 * `instance` must come from this library and not be used afterwards.
 */
void sqa_instance_free(struct SqaInstance *instance);

/**
 * Number of sites, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or come from this library.
 */
size_t sqa_instance_n_sites(const struct SqaInstance *instance);

/**
 * Number of bonds, or 0 for a null handle.
 *
 * # Safety
 * `instance` must be null or come from this library.
 */
size_t sqa_instance_n_bonds(const struct SqaInstance *instance);

/**
 * Exact classical ground state by enumeration (at most 26 sites). The
 * energy is also stored in the instance. `spins` may be null; otherwise it
 * receives `n_sites` values of ±1.
 *
 * # Safety
 * `instance` must come from this library, `energy` must be valid, and
 * `spins`, when not null, must hold `n_sites` elements.
 */
enum SqaStatus sqa_instance_ground_state(struct SqaInstance *instance,
                                         double *energy,
                                         int8_t *spins);

/**
 * Ground energy stored in the instance, or NaN.
 *
 * # Safety
 * `instance` must be null or come from this library.
 */
double sqa_instance_ground_energy(const struct SqaInstance *instance);

/**
 * Defaults: FI driver with Γ0 = Λ0 = 1, semi-local updates, β = 20,
 * Trotter step 0.3125, 10^4 updates, seed 0.
 */
struct SqaAnnealOptions sqa_anneal_options_default(void);

/**
 * Runs one annealing schedule.
 *
 * # Safety
 * `instance` must come from this library; `options` and `out` must be valid.
 */
enum SqaStatus sqa_anneal(const struct SqaInstance *instance,
                          const struct SqaAnnealOptions *options,
                          struct SqaAnnealResult *out);

/**
 * Thermal nearest-neighbour `<σz σz>` by exact diagonalization (at most 12 sites).
 *
 * # Safety
 * `instance` must come from this library and `out` must be valid.
 */
enum SqaStatus sqa_ed_zz(const struct SqaInstance *instance,
                         double gamma,
                         double lambda,
                         double beta,
                         double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SQA_H */
