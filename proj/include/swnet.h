#ifndef SWNET_H
#define SWNET_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SWNET_API __declspec(dllexport)
#else
#define SWNET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every call returns SWNET_OK or an error code; the message of the most
   recent failure on the calling thread is available from swnet_last_error. */
typedef enum swnet_status {
  SWNET_OK = 0,
  SWNET_INVALID_ARGUMENT = 1,
  SWNET_DOMAIN_VIOLATION = 2,
  SWNET_POSITIVITY = 3,
  SWNET_INSTABILITY = 4,
  SWNET_NUMERIC = 5,
  SWNET_SHAPE = 6,
  SWNET_IO = 7,
  SWNET_FORMAT = 8,
  SWNET_NON_FINITE = 9,
  SWNET_DETACHED = 10,
  SWNET_GEOMETRY = 11,
  SWNET_INTERNAL = 100
} swnet_status;

typedef enum swnet_precision { SWNET_F32 = 0, SWNET_F64 = 1 } swnet_precision;

typedef enum swnet_model_family {
  SWNET_MODEL_GENERIC = 0,
  SWNET_MODEL_UNET = 1,
  SWNET_MODEL_INTERP3D = 2
} swnet_model_family;

typedef struct swnet_sequence swnet_sequence;
typedef struct swnet_model swnet_model;

SWNET_API const char* swnet_version(void);
SWNET_API const char* swnet_status_name(swnet_status status);
/* Empty string when the thread has seen no failure. */
SWNET_API const char* swnet_last_error(void);
/* Releases strings returned through char** out-parameters. */
SWNET_API void swnet_free_string(char* text);

/* ---- datasets ---------------------------------------------------------- */

typedef struct swnet_generate_options {
  char dataset;      /* 'A'..'G' */
  size_t count;
  uint64_t seed;
  const char* out_dir;
  double resolution; /* cells per metre */
  int threads;
} swnet_generate_options;

SWNET_API void swnet_generate_options_init(swnet_generate_options* options);
SWNET_API int swnet_is_dataset_id(char id);
/* Writes the sequence files and manifest; *manifest_json (optional) receives
   the manifest text. */
SWNET_API swnet_status swnet_generate(const swnet_generate_options* options,
                                      char** manifest_json);

/* ---- sequences --------------------------------------------------------- */

typedef struct swnet_sequence_info {
  size_t rows;
  size_t cols;
  size_t length;
  double frame_interval;
  int normalized;
  double extent_x; /* metres */
  double extent_y;
} swnet_sequence_info;

/* extent (optional, two doubles) overrides the manifest or the 1 m default. */
SWNET_API swnet_status swnet_sequence_load(const char* path, const double* extent,
                                           swnet_sequence** out);
SWNET_API swnet_status swnet_sequence_save(const swnet_sequence* seq, const char* path);
SWNET_API void swnet_sequence_free(swnet_sequence* seq);
SWNET_API swnet_status swnet_sequence_info_get(const swnet_sequence* seq,
                                               swnet_sequence_info* info);
/* Copies frame t (rows * cols floats) into out. */
SWNET_API swnet_status swnet_sequence_frame(const swnet_sequence* seq, size_t t, float* out,
                                            size_t count);
/* Copies the solid mask (1 = solid) into out. */
SWNET_API swnet_status swnet_sequence_mask(const swnet_sequence* seq, uint8_t* out,
                                           size_t count);
/* Central 1 m window resampled to grid x grid, normalized. */
SWNET_API swnet_status swnet_sequence_view(const swnet_sequence* seq, size_t grid,
                                           swnet_sequence** out);

/* ---- models ------------------------------------------------------------ */

typedef struct swnet_model_info {
  swnet_model_family family;
  size_t parameter_count;
  size_t input_channels;
} swnet_model_info;

SWNET_API swnet_status swnet_model_load(const char* path, swnet_model** out);
SWNET_API swnet_status swnet_model_save(const swnet_model* model, const char* path);
SWNET_API void swnet_model_free(swnet_model* model);
SWNET_API swnet_status swnet_model_info_get(const swnet_model* model, swnet_model_info* info);

/* ---- training ---------------------------------------------------------- */

typedef struct swnet_epoch {
  size_t epoch; /* 1-based */
  double learning_rate;
  double train_loss;
  double validation_loss; /* NaN without a validation set */
} swnet_epoch;

typedef void (*swnet_epoch_callback)(const swnet_epoch* epoch, void* user);

typedef struct swnet_train_options {
  const char* const* data_dirs;
  size_t data_dir_count;
  const char* const* validation_dirs; /* optional */
  size_t validation_dir_count;
  size_t epochs;
  size_t batch_size;
  size_t windows_per_sequence;
  size_t validation_windows;
  size_t resolution; /* cells across the 1 m network window */
  size_t width;      /* U-Net only */
  size_t patch;      /* 3D-CNN only; 0 trains on whole frames */
  double noise_sigma; /* 3D-CNN only */
  double learning_rate;
  uint64_t seed;
  const char* checkpoint; /* written after every epoch with a ".state" sidecar */
  const char* history;    /* optional loss-history file */
  int resume;             /* continue from checkpoint + sidecar when present */
  swnet_epoch_callback on_epoch;
  void* user;
} swnet_train_options;

SWNET_API void swnet_train_unet_options_init(swnet_train_options* options);
SWNET_API void swnet_train_interp_options_init(swnet_train_options* options);
SWNET_API swnet_status swnet_train_unet(const swnet_train_options* options);
SWNET_API swnet_status swnet_train_interp(const swnet_train_options* options);

/* ---- inference and evaluation ------------------------------------------ */

typedef struct swnet_rollout_options {
  size_t steps;
  size_t grid; /* 0 uses the sequence grid, otherwise its central 1 m view */
  swnet_precision precision;
  const swnet_model* interp; /* optional 3D-CNN refining to 0.03 s */
} swnet_rollout_options;

SWNET_API void swnet_rollout_options_init(swnet_rollout_options* options);
/* Seeds from the first five frames at 0.12 s. *truth (optional) receives the
   matching source frames from the last seed frame on, or NULL when the
   source does not reach the last predicted time. */
SWNET_API swnet_status swnet_rollout(const swnet_model* unet, const swnet_sequence* source,
                                     const swnet_rollout_options* options,
                                     swnet_sequence** prediction, swnet_sequence** truth);

/* JSON report of per-step L1 and RMSE over fluid cells with baselines. */
SWNET_API swnet_status swnet_evaluate(const swnet_sequence* prediction,
                                      const swnet_sequence* truth, char** report_json);

/* One binary PGM per frame; *written (optional) receives the count. */
SWNET_API swnet_status swnet_render(const swnet_sequence* seq, const char* dir, int sixteen_bit,
                                    size_t* written);

typedef struct swnet_bench_options {
  const char* category; /* "Box", "Corner", ... */
  double sim_seconds;
  size_t grid;
  uint64_t seed;
  swnet_precision precision;
} swnet_bench_options;

typedef struct swnet_bench_result {
  double sim_seconds;
  size_t network_steps;
  double solver_seconds;
  double network_seconds;
  double solver_seconds_per_sim_second;
  double network_seconds_per_sim_second;
  double ratio; /* solver time over network time */
} swnet_bench_result;

SWNET_API void swnet_bench_options_init(swnet_bench_options* options);
SWNET_API swnet_status swnet_bench(const swnet_model* unet, const swnet_bench_options* options,
                                   swnet_bench_result* result);

#ifdef __cplusplus
}
#endif

#endif
