#ifndef EMREC_H
#define EMREC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes returned by every fallible call.
 */
typedef enum EmrecStatus {
  EMREC_STATUS_OK = 0,
  EMREC_STATUS_NULL_POINTER = 1,
  EMREC_STATUS_INVALID_ARGUMENT = 2,
  EMREC_STATUS_IO = 3,
  EMREC_STATUS_PARSE = 4,
  EMREC_STATUS_DATA = 5,
  EMREC_STATUS_COMPATIBILITY = 6,
  EMREC_STATUS_WINDOW = 7,
  EMREC_STATUS_LENGTH = 8,
  EMREC_STATUS_BUFFER_TOO_SMALL = 9,
  EMREC_STATUS_PANIC = 99,
} EmrecStatus;

/*
 Opaque trained model.
 */
typedef struct EmrecModel EmrecModel;

/*
 Per-minute result of segment voting.
 */
typedef struct EmrecMinutePrediction {
  /*
   0 = lying without EM, 1 = lying with EM.
   */
  int class_id;
  size_t votes_no_em;
  size_t votes_em;
  /*
   Mean class-1 score over the minute's segments.
   */
  double mean_score;
} EmrecMinutePrediction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or null if none. The pointer
 stays valid until the next failing call on the same thread.
 */
const char *emrec_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *emrec_version(void);

/*
 Number of orientation-invariant features per segment.
 */
size_t emrec_feature_count(void);

/*
 Name of invariant feature `index` as a static string, or null when out of range.
 */
const char *emrec_feature_name(size_t index);

/*
 Compute the invariant features of one segment into `out[0..emrec_feature_count()]`.

 # Safety
 `chest_xyz` and `thigh_xyz` must point to `3 * n_samples` doubles and
 `out` to `out_len` writable doubles.
 */
enum EmrecStatus emrec_segment_features(const double *chest_xyz,
                                        const double *thigh_xyz,
                                        size_t n_samples,
                                        double fs_hz,
                                        double *out,
                                        size_t out_len);

/*
 Load a model file; on success `*out_model` owns a new handle.

 # Safety
 `path` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum EmrecStatus emrec_model_load(const char *path, struct EmrecModel **out_model);

/*
 Parse a model from NUL-terminated JSON text.

 # Safety
 `json` must be a NUL-terminated string and `out_model` a valid pointer.
 */
enum EmrecStatus emrec_model_load_json(const char *json, struct EmrecModel **out_model);

/*
 Release a model handle. Null is ignored.

 # Safety
 `model` must come from a load call and not be used afterwards.
 */
void emrec_model_free(struct EmrecModel *model);

/*
 Number of input features the model expects per segment.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum EmrecStatus emrec_model_n_features(const struct EmrecModel *model, size_t *out);

/*
 Segment window in seconds used for minute prediction.

 # Safety
 `model` must be a live handle and `out` a valid pointer.
 */
enum EmrecStatus emrec_model_window_s(const struct EmrecModel *model, double *out);

/*
 Classify one feature vector laid out as the model expects. `out_class`
 receives 0 (lying, no EM) or 1 (lying, EM); `out_score` the fraction of
 trees voting 1. Either output may be null.

 # Safety
 `features` must point to `n_features` doubles; outputs must be valid or null.
 */
enum EmrecStatus emrec_model_predict(const struct EmrecModel *model,
                                     const double *features,
                                     size_t n_features,
                                     int *out_class,
                                     double *out_score);

/*
 Segment, featurize and vote over one synchronized minute of both sensors.
 `n_samples` must equal one minute at `fs_hz`.

 # Safety
 `chest_xyz` and `thigh_xyz` must point to `3 * n_samples` doubles and
 `out` must be a valid pointer.
 */
enum EmrecStatus emrec_model_predict_minute(const struct EmrecModel *model,
                                            const double *chest_xyz,
                                            const double *thigh_xyz,
                                            size_t n_samples,
                                            double fs_hz,
                                            struct EmrecMinutePrediction *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EMREC_H */
