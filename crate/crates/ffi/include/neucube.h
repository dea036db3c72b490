#ifndef NEUCUBE_H
#define NEUCUBE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible call.
 */
typedef enum NcStatus {
  NC_STATUS_OK = 0,
  NC_STATUS_INVALID_ARGUMENT = 1,
  NC_STATUS_DATA_ERROR = 2,
  NC_STATUS_IO_ERROR = 3,
  NC_STATUS_NULL_POINTER = 4,
  NC_STATUS_PANIC = 5,
} NcStatus;

/**
 * Opaque dataset handle.
 */
typedef struct NcDataset NcDataset;

/**
 * Opaque trained model handle.
 */
typedef struct NcModel NcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *nc_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nc_version(void);

/**
 * Generates the default synthetic dataset with the given seed.
 * `samples_per_class` of 0 keeps the default.
 *
 * # Safety
 * `out` must be a valid pointer to write a handle into.
 */
enum NcStatus nc_dataset_synthetic(uint64_t seed, size_t samples_per_class, struct NcDataset **out);

/**
 * Loads a long-format CSV file with the default column names
 * (`sample_id`, `tick`, `label`).
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum NcStatus nc_dataset_load_csv(const char *path, struct NcDataset **out);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t nc_dataset_len(const struct NcDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t nc_dataset_variables(const struct NcDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t nc_dataset_ticks(const struct NcDataset *ds);

/**
 * # Safety
 * `ds` must be null or a live dataset handle.
 */
size_t nc_dataset_class_count(const struct NcDataset *ds);

/**
 * Copies the label indices into `labels`, which must hold `len` entries
 * where `len` equals [`nc_dataset_len`].
 *
 * # Safety
 * `labels` must point to `len` writable `size_t` values.
 */
enum NcStatus nc_dataset_labels(const struct NcDataset *ds, size_t *labels, size_t len);

/**
 * # Safety
 * `ds` must be null or a handle not freed before.
 */
void nc_dataset_free(struct NcDataset *ds);

/**
 * Trains a model. `params_json` may be null for defaults, or a JSON object
 * with any subset of the pipeline parameters.
 *
 * # Safety
 * `ds` must be a live dataset; `params_json` null or NUL-terminated; `out` valid.
 */
enum NcStatus nc_model_train(const struct NcDataset *ds,
                             const char *params_json,
                             struct NcModel **out);

/**
 * Predicts a label index for every sample of `ds` into `labels`
 * (`len` must equal the sample count).
 *
 * # Safety
 * Handles must be live; `labels` must point to `len` writable values.
 */
enum NcStatus nc_model_predict(const struct NcModel *model,
                               const struct NcDataset *ds,
                               size_t *labels,
                               size_t len);

/**
 * Classification accuracy of `model` on `ds`.
 *
 * # Safety
 * Handles must be live; `accuracy` must be writable.
 */
enum NcStatus nc_model_accuracy(const struct NcModel *model,
                                const struct NcDataset *ds,
                                double *accuracy);

/**
 * Writes the model as JSON.
 *
 * # Safety
 * `model` must be live; `path` NUL-terminated.
 */
enum NcStatus nc_model_save(const struct NcModel *model, const char *path);

/**
 * Reads a model written by [`nc_model_save`] or the command line tool.
 *
 * # Safety
 * `path` must be NUL-terminated; `out` valid.
 */
enum NcStatus nc_model_load(const char *path, struct NcModel **out);

/**
 * # Safety
 * `model` must be null or a handle not freed before.
 */
void nc_model_free(struct NcModel *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NEUCUBE_H */
