#ifndef ELASTOINV_H
#define ELASTOINV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EiStatus {
  EI_STATUS_OK = 0,
  EI_STATUS_NULL_POINTER = 1,
  EI_STATUS_INVALID_ARGUMENT = 2,
  EI_STATUS_DIMENSION_MISMATCH = 3,
  EI_STATUS_CONFIG = 4,
  EI_STATUS_IO = 5,
  EI_STATUS_FORMAT = 6,
  EI_STATUS_UNCALIBRATABLE = 7,
  EI_STATUS_DIVERGED = 8,
  EI_STATUS_RUNTIME = 9,
  EI_STATUS_PANIC = 10,
} EiStatus;

/**
 * Measured displacement plus optional ground truth.
 */
typedef struct EiDataset EiDataset;

/**
 * Every field a model predicts on a dataset lattice.
 */
typedef struct EiFields EiFields;

/**
 * Trained (or initialized) networks with optimizer state.
 */
typedef struct EiModel EiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in bytes,
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to at least `len` writable bytes.
 */
size_t ei_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ei_version(void);

/**
 * Builds a dataset from measured nodal displacement, `ny * nx` values per
 * component with grid spacing `h` and unit thickness.
 *
 * # Safety
 * `ux` and `uy` must point to `ny * nx` readable doubles; `out` must be writable.
 */
enum EiStatus ei_dataset_from_displacement(size_t ny,
                                           size_t nx,
                                           double h,
                                           const double *ux,
                                           const double *uy,
                                           struct EiDataset **out);

/**
 * Synthesizes a dataset on `ny x nx` cells: the two-inclusion phantom when
 * `two_inclusion` is nonzero, otherwise a homogeneous plate (E = 1,
 * nu = 0.3). `snr <= 0` gives clean data.
 *
 * # Safety
 * `out` must be writable.
 */
enum EiStatus ei_dataset_generate(size_t ny,
                                  size_t nx,
                                  int32_t two_inclusion,
                                  double stretch,
                                  double snr,
                                  uint64_t seed,
                                  struct EiDataset **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum EiStatus ei_dataset_load(const char *path, struct EiDataset **out);

/**
 * # Safety
 * `ds` must come from this library; `path` must be a NUL-terminated string.
 */
enum EiStatus ei_dataset_save(const struct EiDataset *ds, const char *path);

/**
 * Node lattice dimensions.
 *
 * # Safety
 * `ds` must come from this library; `ny` and `nx` must be writable.
 */
enum EiStatus ei_dataset_dims(const struct EiDataset *ds, size_t *ny, size_t *nx);

/**
 * # Safety
 * `ds` must be null or come from this library, and not be used afterwards.
 */
void ei_dataset_free(struct EiDataset *ds);

/**
 * Trains on `ds`. `config` is a flat `key = value` text using the same keys
 * as the command-line tool (null means all defaults, which lack a seed and
 * therefore fail). Only the training-related keys are read.
 *
 * # Safety
 * `ds` must come from this library; `config` must be null or NUL-terminated;
 * `out` must be writable.
 */
enum EiStatus ei_train(const struct EiDataset *ds, const char *config, struct EiModel **out);

/**
 * Number of recorded training iterations.
 *
 * # Safety
 * `model` must come from this library.
 */
size_t ei_model_iterations(const struct EiModel *model);

/**
 * Weighted total loss of the last recorded iteration, NaN before training.
 *
 * # Safety
 * `model` must come from this library.
 */
double ei_model_final_loss(const struct EiModel *model);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum EiStatus ei_model_save(const struct EiModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated; `out` must be writable.
 */
enum EiStatus ei_model_load(const char *path, struct EiModel **out);

/**
 * # Safety
 * `model` must be null or come from this library, and not be used afterwards.
 */
void ei_model_free(struct EiModel *model);

/**
 * # Safety
 * `model` and `ds` must come from this library; `out` must be writable.
 */
enum EiStatus ei_predict(const struct EiModel *model,
                         const struct EiDataset *ds,
                         struct EiFields **out);

/**
 * Copies the named field (`ux uy exx eyy gxy sxx syy txy E nu rx ry`) into
 * `buf`, which must hold at least `len` doubles, and reports its shape.
 * Passing a null `buf` only queries the shape.
 *
 * # Safety
 * `fields` must come from this library; `name` must be NUL-terminated;
 * `buf` must be null or hold `len` doubles; `ny` and `nx` must be writable.
 */
enum EiStatus ei_fields_get(const struct EiFields *fields,
                            const char *name,
                            double *buf,
                            size_t len,
                            size_t *ny,
                            size_t *nx);

/**
 * # Safety
 * `fields` must be null or come from this library, and not be used afterwards.
 */
void ei_fields_free(struct EiFields *fields);

/**
 * Scales the predicted relative modulus to absolute units with the
 * dataset's applied force. Writes the scale to `c_hat` and, when `e_abs` is
 * not null, the absolute modulus (cell lattice, `len` doubles at least).
 *
 * # Safety
 * `fields` and `ds` must come from this library; `c_hat` must be writable;
 * `e_abs` must be null or hold `len` doubles.
 */
enum EiStatus ei_calibrate(const struct EiFields *fields,
                           const struct EiDataset *ds,
                           double *c_hat,
                           double *e_abs,
                           size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELASTOINV_H */
