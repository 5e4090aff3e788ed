#ifndef PROTOLT_H
#define PROTOLT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum ProtoltStatus {
  Ok = 0,
  NullPointer = 1,
  InvalidArgument = 2,
  ZeroVector = 3,
  DimensionMismatch = 4,
  ClassOutOfRange = 5,
  TooFewClasses = 6,
  NumericalError = 7,
  IoError = 8,
  Utf8Error = 9,
} ProtoltStatus;

/**
 * Opaque prototype-bank handle.
 */
typedef struct ProtoltBank ProtoltBank;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *protolt_version(void);

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *protolt_last_error_message(void);

/**
 * Builds a bank from `classes` anchor rows of `dim` values (row-major,
 * normalized on ingest) and per-class frequencies.
 *
 * # Safety
 * `anchors` must hold `classes * dim` values, `frequencies` must hold
 * `classes` values, and `out_bank` must be a valid pointer. A returned
 * handle must be released with [`protolt_bank_free`].
 */
enum ProtoltStatus protolt_bank_from_anchors(const double *anchors,
                                             uintptr_t classes,
                                             uintptr_t dim,
                                             const double *frequencies,
                                             double momentum,
                                             struct ProtoltBank **out_bank);

/**
 * Builds a bank with uniformly sampled prototypes.
 *
 * # Safety
 * `frequencies` must hold `classes` values; `out_bank` must be valid.
 */
enum ProtoltStatus protolt_bank_random(uintptr_t dim,
                                       uintptr_t classes,
                                       const double *frequencies,
                                       double momentum,
                                       uint64_t seed,
                                       struct ProtoltBank **out_bank);

/**
 * Releases a bank handle. Passing NULL is a no-op.
 *
 * # Safety
 * `bank` must be a handle returned by this library, not yet freed.
 */
void protolt_bank_free(struct ProtoltBank *bank);

/**
 * # Safety
 * `bank` and `out_classes` must be valid pointers.
 */
enum ProtoltStatus protolt_bank_classes(const struct ProtoltBank *bank, uintptr_t *out_classes);

/**
 * # Safety
 * `bank` and `out_dim` must be valid pointers.
 */
enum ProtoltStatus protolt_bank_dim(const struct ProtoltBank *bank, uintptr_t *out_dim);

/**
 * Copies the prototype matrix (classes × dim, row-major) into `out`.
 *
 * # Safety
 * `out` must hold `classes * dim` values.
 */
enum ProtoltStatus protolt_bank_copy_prototypes(const struct ProtoltBank *bank, double *out);

/**
 * One EMA step for class `class_id` with unit-normalized text and image
 * features of the bank's dimension.
 *
 * # Safety
 * `z_text` and `z_image` must each hold `dim` values; `bank` must be a
 * live handle with no concurrent access.
 */
enum ProtoltStatus protolt_bank_ema_update(struct ProtoltBank *bank,
                                           uintptr_t class_id,
                                           const double *z_text,
                                           const double *z_image);

/**
 * Saves the bank as an embedding file plus JSON sidecar.
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8 strings; `bank` must be live.
 */
enum ProtoltStatus protolt_bank_save(const struct ProtoltBank *bank,
                                     const char *prototypes_path,
                                     const char *sidecar_path);

/**
 * Loads a bank saved by [`protolt_bank_save`].
 *
 * # Safety
 * Paths must be NUL-terminated UTF-8 strings; `out_bank` must be valid.
 */
enum ProtoltStatus protolt_bank_load(const char *prototypes_path,
                                     const char *sidecar_path,
                                     struct ProtoltBank **out_bank);

/**
 * Total matching loss (category term + λ · prototype term) over a batch
 * of `samples` image/text rows. Gradient buffers are optional: pass NULL
 * to skip them, otherwise each must hold `samples * dim` values.
 *
 * # Safety
 * Buffers must match the documented sizes; `bank` must be live.
 */
enum ProtoltStatus protolt_total_loss(const double *images,
                                      const double *texts,
                                      uintptr_t samples,
                                      uintptr_t dim,
                                      const uint32_t *labels,
                                      const struct ProtoltBank *bank,
                                      double tau,
                                      double lambda,
                                      double *out_value,
                                      double *out_grad_images,
                                      double *out_grad_texts);

/**
 * Central finite-difference verification of the analytic loss gradients;
 * writes the maximum relative error.
 *
 * # Safety
 * Buffer sizes as in [`protolt_total_loss`]; `out_max_error` must be valid.
 */
enum ProtoltStatus protolt_gradient_check(const double *images,
                                          const double *texts,
                                          uintptr_t samples,
                                          uintptr_t dim,
                                          const uint32_t *labels,
                                          const struct ProtoltBank *bank,
                                          double tau,
                                          double lambda,
                                          double step,
                                          double *out_max_error);

/**
 * Softmax weights over candidate-prototype similarities; `out_weights`
 * receives `count` values.
 *
 * # Safety
 * `candidates` must hold `count * dim` values; `out_weights` `count`.
 */
enum ProtoltStatus protolt_filter_weights(const double *candidates,
                                          uintptr_t count,
                                          uintptr_t dim,
                                          uintptr_t class_id,
                                          const struct ProtoltBank *bank,
                                          double *out_weights);

/**
 * Reconstructs one unit text feature from the candidate set.
 *
 * # Safety
 * `candidates` must hold `count * dim` values; `out_feature` `dim`.
 */
enum ProtoltStatus protolt_filter_reconstruct(const double *candidates,
                                              uintptr_t count,
                                              uintptr_t dim,
                                              uintptr_t class_id,
                                              const struct ProtoltBank *bank,
                                              double *out_feature);

/**
 * Linear-head class probabilities for one feature.
 *
 * # Safety
 * `weights` must hold `classes * dim`, `biases` and `out_probs` `classes`,
 * and `feature` `dim` values.
 */
enum ProtoltStatus protolt_predict_linear(const double *weights,
                                          const double *biases,
                                          uintptr_t classes,
                                          uintptr_t dim,
                                          const double *feature,
                                          double *out_probs);

/**
 * Prototype-head class probabilities for one feature of the bank's
 * dimension.
 *
 * # Safety
 * `feature` must hold the bank dimension; `out_probs` the class count.
 */
enum ProtoltStatus protolt_predict_prototype(const struct ProtoltBank *bank,
                                             const double *feature,
                                             double *out_probs);

/**
 * α-fused class probabilities: α · prototype + (1 − α) · linear.
 *
 * # Safety
 * Buffer sizes as in the two component predictors.
 */
enum ProtoltStatus protolt_predict_fused(const double *weights,
                                         const double *biases,
                                         uintptr_t classes,
                                         uintptr_t dim,
                                         double alpha,
                                         const struct ProtoltBank *bank,
                                         const double *feature,
                                         double *out_probs);

/**
 * Mean intra-class pairwise distance of `samples` feature rows.
 *
 * # Safety
 * `features` must hold `samples * dim` values; `labels` `samples`.
 */
enum ProtoltStatus protolt_alignment(const double *features,
                                     uintptr_t samples,
                                     uintptr_t dim,
                                     const uint32_t *labels,
                                     double *out_value);

/**
 * Mean distance from each class center to its k nearest other centers.
 *
 * # Safety
 * Buffer sizes as in [`protolt_alignment`].
 */
enum ProtoltStatus protolt_uniformity(const double *features,
                                      uintptr_t samples,
                                      uintptr_t dim,
                                      const uint32_t *labels,
                                      uintptr_t k,
                                      double *out_value);

/**
 * Overall and per-split accuracy. `out_accuracies` receives four values:
 * all, many, medium, few; splits with no samples are written as NaN.
 *
 * # Safety
 * `predictions` and `labels` must hold `samples` values, `train_counts`
 * `classes` values, and `out_accuracies` four values.
 */
enum ProtoltStatus protolt_split_accuracy(const uint32_t *predictions,
                                          const uint32_t *labels,
                                          uintptr_t samples,
                                          const uint64_t *train_counts,
                                          uintptr_t classes,
                                          uintptr_t many_min,
                                          uintptr_t few_max,
                                          double *out_accuracies);

/**
 * Temperature-scaled softmax of `count` scores.
 *
 * # Safety
 * `scores` and `out_probs` must each hold `count` values.
 */
enum ProtoltStatus protolt_softmax(const double *scores,
                                   uintptr_t count,
                                   double temperature,
                                   double *out_probs);

/**
 * Scales a vector to unit norm.
 *
 * # Safety
 * `vector` and `out_unit` must each hold `dim` values.
 */
enum ProtoltStatus protolt_normalize(const double *vector, uintptr_t dim, double *out_unit);

/**
 * Deterministic uniform sphere samples; `out_rows` receives
 * `count * dim` values, row-major.
 *
 * # Safety
 * `out_rows` must hold `count * dim` values.
 */
enum ProtoltStatus protolt_sample_sphere(uintptr_t dim,
                                         uintptr_t count,
                                         uint64_t seed,
                                         double *out_rows);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PROTOLT_H */
