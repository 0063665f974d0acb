#ifndef STGT_H
#define STGT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Structure search used by [`stgt_learn`].
typedef enum StgtAlgorithm {
  STGT_ALGORITHM_BHC = 0,
  STGT_ALGORITHM_K_PARENTS = 1,
} StgtAlgorithm;

// Result code of every fallible call.
typedef enum StgtStatus {
  STGT_STATUS_OK = 0,
  STGT_STATUS_NULL_POINTER = 1,
  STGT_STATUS_INVALID_UTF8 = 2,
  STGT_STATUS_IO = 3,
  STGT_STATUS_PARSE = 4,
  STGT_STATUS_SCHEMA = 5,
  STGT_STATUS_DATA = 6,
  STGT_STATUS_CONFIG = 7,
  STGT_STATUS_MODEL = 8,
  STGT_STATUS_ZERO_PROBABILITY = 9,
  STGT_STATUS_STATISTICS = 10,
  STGT_STATUS_PANIC = 11,
} StgtStatus;

// A categorical dataset with its schema.
typedef struct StgtDataset StgtDataset;

// A staged tree model.
typedef struct StgtModel StgtModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *stgt_version(void);

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *stgt_last_error(void);

// Frees a string returned by this library. Null is ignored.
//
// # Safety
// `s` must come from this library and not have been freed.
void stgt_string_free(char *s);

// Parses a model document.
//
// # Safety
// `json` is a NUL-terminated string; `out` is writable.
enum StgtStatus stgt_model_from_json(const char *json, struct StgtModel **out);

// Reads a model document from a file.
//
// # Safety
// `path` is a NUL-terminated string; `out` is writable.
enum StgtStatus stgt_model_load(const char *path, struct StgtModel **out);

// Releases a model. Null is ignored.
//
// # Safety
// `model` comes from this library and has not been freed.
void stgt_model_free(struct StgtModel *model);

// Canonical JSON document of the model.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum StgtStatus stgt_model_to_json(const struct StgtModel *model, char **out);

// Graphviz rendering of the staged tree, with edge probabilities when `probabilities` is true.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum StgtStatus stgt_model_to_dot(const struct StgtModel *model, bool probabilities, char **out);

// Number of variables in the model.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum StgtStatus stgt_model_variable_count(const struct StgtModel *model, uintptr_t *out);

// BIC recorded when the model was fitted. Fails with `Config` for unfitted models.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum StgtStatus stgt_model_bic(const struct StgtModel *model, double *out);

// `P(target | given)` with assignments written as `A=x,B=y`. `given` may be null.
//
// # Safety
// `model` is a live handle; strings are NUL-terminated; `out` is writable.
enum StgtStatus stgt_model_query(const struct StgtModel *model,
                                 const char *target,
                                 const char *given,
                                 double *out);

// Whether `target` is independent of the comma-separated `separated` variables
// in the context `given` (`A=x,...`, may be null).
//
// # Safety
// `model` is a live handle; strings are NUL-terminated; `out` is writable.
enum StgtStatus stgt_model_csi(const struct StgtModel *model,
                               const char *target,
                               const char *separated,
                               const char *given,
                               bool *out);

// Draws `n` rows and returns them as CSV with a header line.
//
// # Safety
// `model` is a live handle; `out` is writable.
enum StgtStatus stgt_model_sample_csv(const struct StgtModel *model,
                                      uintptr_t n,
                                      uint64_t seed,
                                      char **out);

// Reads a CSV file, dropping rows with missing cells. `schema_text` (`name: l1, l2`
// per line) fixes the levels and order; when null they are inferred.
//
// # Safety
// Strings are NUL-terminated; `out` is writable.
enum StgtStatus stgt_dataset_read_csv(const char *path,
                                      const char *schema_text,
                                      struct StgtDataset **out);

// Number of rows in the dataset.
//
// # Safety
// `data` is a live handle; `out` is writable.
enum StgtStatus stgt_dataset_rows(const struct StgtDataset *data, uint64_t *out);

// Releases a dataset. Null is ignored.
//
// # Safety
// `data` comes from this library and has not been freed.
void stgt_dataset_free(struct StgtDataset *data);

// Learns a staged tree. `k` is the in-degree bound for `KParents` and ignored
// otherwise. `constraints` holds `IF A=x THEN B=y` lines and may be null.
//
// # Safety
// `data` is a live handle; `constraints` is null or NUL-terminated; `out` is writable.
enum StgtStatus stgt_learn(const struct StgtDataset *data,
                           enum StgtAlgorithm algorithm,
                           uintptr_t k,
                           double alpha,
                           const char *constraints,
                           struct StgtModel **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STGT_H */
