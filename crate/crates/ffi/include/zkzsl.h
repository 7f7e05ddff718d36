#ifndef ZKZSL_H
#define ZKZSL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ZkzslStatus {
  ZKZSL_STATUS_OK = 0,
  ZKZSL_STATUS_NULL_ARGUMENT = 1,
  ZKZSL_STATUS_INVALID_ARGUMENT = 2,
  ZKZSL_STATUS_IO = 3,
  ZKZSL_STATUS_LOAD = 4,
  ZKZSL_STATUS_CONFIG = 5,
  ZKZSL_STATUS_TRAINING = 6,
  ZKZSL_STATUS_INFERENCE = 7,
  ZKZSL_STATUS_EVALUATION_UNAVAILABLE = 8,
  ZKZSL_STATUS_CHECKPOINT = 9,
  ZKZSL_STATUS_BUFFER_TOO_SMALL = 10,
  ZKZSL_STATUS_PANIC = 11,
} ZkzslStatus;

/**
 * Opaque dataset handle.
 */
typedef struct ZkzslDataset ZkzslDataset;

/**
 * Opaque trained-model handle.
 */
typedef struct ZkzslModel ZkzslModel;

typedef struct ZkzslSynthSpec {
  size_t k_s;
  size_t k_t;
  size_t d;
  size_t feature_dim;
  size_t samples_per_class;
  double separation;
  double within_std;
  double attribute_noise;
  uint64_t seed;
} ZkzslSynthSpec;

/**
 * Training settings. `hidden` points at `hidden_len` encoder widths; a null
 * pointer keeps the default widths.
 */
typedef struct ZkzslTrainConfig {
  size_t h;
  const size_t *hidden;
  size_t hidden_len;
  double alpha;
  double beta;
  bool drift_correction;
  double pretrain_lr;
  double train_lr;
  double weight_decay;
  double lr_decay_factor;
  size_t lr_decay_every;
  size_t pretrain_epochs;
  size_t train_epochs;
  size_t batch_size;
  double dropout;
  uint64_t seed;
} ZkzslTrainConfig;

typedef struct ZkzslDatasetShape {
  size_t k_s;
  size_t k_t;
  size_t d;
  size_t feature_dim;
  size_t n_source;
  size_t n_target;
  bool has_ground_truth;
} ZkzslDatasetShape;

typedef struct ZkzslMetrics {
  double acc_s;
  double acc_u;
  double acc_h;
  double sr_s;
  double sr_u;
  double sr_h;
  double tau;
} ZkzslMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread; empty after success.
 * The pointer stays valid until the next library call on this thread.
 */
const char *zkzsl_last_error(void);

/**
 * Library version as a static string.
 */
const char *zkzsl_version(void);

struct ZkzslSynthSpec zkzsl_synth_spec_default(void);

struct ZkzslTrainConfig zkzsl_train_config_default(void);

/**
 * # Safety
 * `spec` must point to a valid spec and `out` to writable storage.
 */
enum ZkzslStatus zkzsl_dataset_synthesize(const struct ZkzslSynthSpec *spec,
                                          struct ZkzslDataset **out);

/**
 * # Safety
 * `dir` must be a NUL-terminated path and `out` writable.
 */
enum ZkzslStatus zkzsl_dataset_load(const char *dir, struct ZkzslDataset **out);

/**
 * # Safety
 * `ds` must be a live dataset handle and `dir` a NUL-terminated path.
 */
enum ZkzslStatus zkzsl_dataset_save(const struct ZkzslDataset *ds, const char *dir);

/**
 * # Safety
 * `ds` must be a live dataset handle and `out` writable.
 */
enum ZkzslStatus zkzsl_dataset_shape(const struct ZkzslDataset *ds, struct ZkzslDatasetShape *out);

/**
 * Releases a dataset; null is ignored.
 *
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void zkzsl_dataset_free(struct ZkzslDataset *ds);

/**
 * Pretrains, initializes centroids and trains on `ds`.
 *
 * # Safety
 * `ds` and `config` must be valid; `config.hidden`, when non-null, must
 * point to `config.hidden_len` widths; `out` must be writable.
 */
enum ZkzslStatus zkzsl_model_train(const struct ZkzslDataset *ds,
                                   const struct ZkzslTrainConfig *config,
                                   struct ZkzslModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated path and `out` writable.
 */
enum ZkzslStatus zkzsl_model_load(const char *path, struct ZkzslModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated path.
 */
enum ZkzslStatus zkzsl_model_save(const struct ZkzslModel *model, const char *path);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void zkzsl_model_free(struct ZkzslModel *model);

/**
 * Runs inference on the target set of `ds` and scores it. `seed` is the
 * training seed; the unseen K-means derives its own stream from it.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum ZkzslStatus zkzsl_model_evaluate(const struct ZkzslModel *model,
                                      const struct ZkzslDataset *ds,
                                      uint64_t seed,
                                      struct ZkzslMetrics *out);

/**
 * Writes the predicted class of every target sample into `labels`, which
 * must hold at least `n_target` entries (`len`).
 *
 * # Safety
 * Handles must be live and `labels` must point to `len` writable entries.
 */
enum ZkzslStatus zkzsl_model_predict(const struct ZkzslModel *model,
                                     const struct ZkzslDataset *ds,
                                     uint64_t seed,
                                     size_t *labels,
                                     size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ZKZSL_H */
