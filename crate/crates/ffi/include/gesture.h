#ifndef GESTURE_H
#define GESTURE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GestureStatus {
  GESTURE_STATUS_OK = 0,
  GESTURE_STATUS_NULL_ARGUMENT = 1,
  GESTURE_STATUS_INVALID_UTF8 = 2,
  GESTURE_STATUS_IO = 3,
  GESTURE_STATUS_PARSE = 4,
  GESTURE_STATUS_CONTRACT = 5,
  GESTURE_STATUS_NOT_A_CHECKPOINT = 6,
  GESTURE_STATUS_CHECKPOINT_VERSION = 7,
  GESTURE_STATUS_CHECKPOINT_TRUNCATED = 8,
  GESTURE_STATUS_ARCHITECTURE_MISMATCH = 9,
  GESTURE_STATUS_NO_HAND_REGION = 10,
  GESTURE_STATUS_IMAGE = 11,
  GESTURE_STATUS_PANIC = 12,
} GestureStatus;

/**
 * A loaded model: classifier or detector checkpoint, or a feature store.
 */
typedef struct GesturePredictor GesturePredictor;

/**
 * Inclusive pixel rectangle.
 */
typedef struct GesturePixelBox {
  uint32_t x_min;
  uint32_t y_min;
  uint32_t x_max;
  uint32_t y_max;
} GesturePixelBox;

/**
 * `label_index` is -1 when nothing was recognised; `has_bbox` is 0 or 1.
 */
typedef struct GesturePrediction {
  int32_t label_index;
  double confidence;
  uint8_t has_bbox;
  struct GesturePixelBox bbox;
} GesturePrediction;

/**
 * Normalised box: centre, width and height in `[0, 1]`.
 */
typedef struct GestureBox {
  double cx;
  double cy;
  double w;
  double h;
} GestureBox;

typedef struct GestureYolo {
  uint32_t class_id;
  struct GestureBox bbox;
} GestureYolo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *gesture_last_error(void);

/**
 * Loads a classifier or detector checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GestureStatus gesture_predictor_load_checkpoint(const char *path,
                                                     struct GesturePredictor **out);

/**
 * Loads a feature store directory.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a writable pointer.
 */
enum GestureStatus gesture_predictor_load_store(const char *dir, struct GesturePredictor **out);

/**
 * # Safety
 * `handle` must be null or a pointer returned by a `gesture_predictor_load_*`
 * function that has not been freed.
 */
void gesture_predictor_free(struct GesturePredictor *handle);

/**
 * # Safety
 * `handle` must be a live predictor handle.
 */
uint32_t gesture_predictor_label_count(const struct GesturePredictor *handle);

/**
 * Label at `index`, or null when out of range. Owned by the handle.
 *
 * # Safety
 * `handle` must be a live predictor handle.
 */
const char *gesture_predictor_label(const struct GesturePredictor *handle, uint32_t index);

/**
 * Runs inference on an interleaved 8-bit image with 1 or 3 channels.
 * A frame without a hand or detection yields `label_index == -1`.
 *
 * # Safety
 * `handle` must be live, `pixels` must hold `width * height * channels`
 * bytes and `out` must be writable.
 */
enum GestureStatus gesture_predictor_infer(const struct GesturePredictor *handle,
                                           const uint8_t *pixels,
                                           uint32_t width,
                                           uint32_t height,
                                           uint32_t channels,
                                           struct GesturePrediction *out);

/**
 * Bounding box of the largest skin region in an RGB image.
 *
 * # Safety
 * `pixels` must hold `width * height * channels` bytes and `out` must be writable.
 */
enum GestureStatus gesture_find_hand(const uint8_t *pixels,
                                     uint32_t width,
                                     uint32_t height,
                                     uint32_t channels,
                                     struct GesturePixelBox *out);

/**
 * Intersection over union of two normalised boxes; 0 if either is null.
 *
 * # Safety
 * `a` and `b` must be null or point to valid boxes.
 */
double gesture_iou(const struct GestureBox *a, const struct GestureBox *b);

/**
 * Parses one `class cx cy w h` line.
 *
 * # Safety
 * `line` must be a NUL-terminated string and `out` must be writable.
 */
enum GestureStatus gesture_yolo_parse_line(const char *line, struct GestureYolo *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GESTURE_H */
