#ifndef FACEAUTH_H
#define FACEAUTH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FaStatus {
  FA_STATUS_OK = 0,
  FA_STATUS_NULL_POINTER = 1,
  FA_STATUS_INVALID_ARGUMENT = 2,
  FA_STATUS_IO = 3,
  FA_STATUS_CORRUPT_MODEL = 4,
  FA_STATUS_DIMENSION_MISMATCH = 5,
  FA_STATUS_BUFFER_TOO_SMALL = 6,
  FA_STATUS_IMAGE_TOO_SMALL = 7,
  FA_STATUS_INTERNAL = 99,
} FaStatus;

/**
 * The cascade with the synthetic stage backend and default settings.
 */
typedef struct FaDetector FaDetector;

/**
 * The seeded mock embedding backend.
 */
typedef struct FaEmbedder FaEmbedder;

/**
 * A loaded one-vs-rest linear SVM.
 */
typedef struct FaModel FaModel;

/**
 * One detected face; landmarks are five x's followed by five y's.
 */
typedef struct FaDetection {
  double x1;
  double y1;
  double x2;
  double y2;
  double confidence;
  double landmarks[10];
} FaDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on the calling thread; empty if
 * none. Valid until the next faceauth call on the same thread.
 */
const char *fa_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *fa_version(void);

/**
 * Dimension of embeddings produced by [`fa_embed_face_rgb`].
 */
size_t fa_embedding_dim(void);

/**
 * Side of the square RGB face crop expected by [`fa_embed_face_rgb`].
 */
uint32_t fa_face_size(void);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum FaStatus fa_model_load(const char *path, struct FaModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`fa_model_load`] not yet freed.
 */
void fa_model_free(struct FaModel *model);

/**
 * Number of classes; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t fa_model_num_classes(const struct FaModel *model);

/**
 * Feature dimension; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t fa_model_dim(const struct FaModel *model);

/**
 * Copies the label of class `index` into `buf` as a NUL-terminated
 * string. `needed` receives the buffer size required (label bytes + 1);
 * if `buf_len` is smaller, nothing is written and
 * `FA_STATUS_BUFFER_TOO_SMALL` is returned.
 *
 * # Safety
 * `model` must be a live handle, `buf` valid for `buf_len` bytes (or null
 * with `buf_len` 0), and `needed` null or valid.
 */
enum FaStatus fa_model_class_label(const struct FaModel *model,
                                   size_t index,
                                   char *buf,
                                   size_t buf_len,
                                   size_t *needed);

/**
 * Writes one decision score per class into `scores`.
 *
 * # Safety
 * `model` must be a live handle, `x` valid for `len` reads and `scores`
 * valid for `scores_len` writes.
 */
enum FaStatus fa_model_scores(const struct FaModel *model,
                              const double *x,
                              size_t len,
                              double *scores,
                              size_t scores_len);

/**
 * Index of the predicted class (highest score, first on ties).
 *
 * # Safety
 * `model` must be a live handle, `x` valid for `len` reads, `class_index`
 * valid.
 */
enum FaStatus fa_model_predict(const struct FaModel *model,
                               const double *x,
                               size_t len,
                               size_t *class_index);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum FaStatus fa_embedder_new_mock(uint64_t seed, struct FaEmbedder **out);

/**
 * # Safety
 * `embedder` must be null or a live handle.
 */
void fa_embedder_free(struct FaEmbedder *embedder);

/**
 * Embeds a `fa_face_size()`-square RGB crop (row-major, 3 bytes per
 * pixel) into `fa_embedding_dim()` unit-norm values.
 *
 * # Safety
 * `pixels` must be valid for `width * height * 3` reads and `out` for
 * `out_len` writes.
 */
enum FaStatus fa_embed_face_rgb(const struct FaEmbedder *embedder,
                                const uint8_t *pixels,
                                uint32_t width,
                                uint32_t height,
                                double *out,
                                size_t out_len);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum FaStatus fa_detector_new_synthetic(double min_face_size, struct FaDetector **out);

/**
 * # Safety
 * `detector` must be null or a live handle.
 */
void fa_detector_free(struct FaDetector *detector);

/**
 * Detects faces in an RGB image. `count` receives the number of faces
 * found; at most `capacity` are written to `out`, highest confidence
 * first. Finding more faces than `capacity` is not an error.
 *
 * # Safety
 * `pixels` must be valid for `width * height * 3` reads, `out` for
 * `capacity` writes (or null with capacity 0), `count` valid.
 */
enum FaStatus fa_detect_rgb(const struct FaDetector *detector,
                            const uint8_t *pixels,
                            uint32_t width,
                            uint32_t height,
                            struct FaDetection *out,
                            size_t capacity,
                            size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACEAUTH_H */
