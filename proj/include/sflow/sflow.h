/*
 * Copyright (c) 2026, sflow contributors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

#ifndef SFLOW_SFLOW_H
#define SFLOW_SFLOW_H

/*
 * C interface to the sflow scene flow library.
 *
 * Objects are opaque handles created by sflow_*_create / _load / _build and
 * released with the matching sflow_*_destroy (destroy accepts NULL).
 * Functions returning sflow_status leave a description of the last failure
 * in sflow_last_error(), which is thread local and valid until the next
 * failing call on the same thread.
 *
 * Point and vector buffers are packed xyz triples of doubles; a buffer
 * capacity counts triples, not doubles.
 *
 * The sflow_cmd_* entry points run whole dataset commands and return a
 * process exit code: 0 success, 1 partial failure, 2 invalid invocation.
 * Their tables are delivered through the write callback.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SFLOW_API __declspec(dllexport)
#else
#define SFLOW_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sflow_status {
  SFLOW_OK = 0,
  SFLOW_ERR_INVALID_ARGUMENT = 1,
  SFLOW_ERR_IO = 2,
  SFLOW_ERR_NUMERIC = 3,
  SFLOW_ERR_EMPTY_RESULT = 4,
  SFLOW_ERR_INTERNAL = 5
} sflow_status;

typedef struct sflow_cloud sflow_cloud;
typedef struct sflow_flow sflow_flow;
typedef struct sflow_index sflow_index;
typedef struct sflow_config sflow_config;
typedef struct sflow_fit sflow_fit;

typedef void (*sflow_write_fn)(const char* text, size_t length, void* user);

typedef struct sflow_loss_report {
  double nn_loss;
  double cycle_loss;
  double combined;
} sflow_loss_report;

typedef struct sflow_eval_summary {
  double epe_mean;
  double acc_strict;
  double acc_relax;
  size_t n_points;
} sflow_eval_summary;

SFLOW_API const char* sflow_version(void);
SFLOW_API const char* sflow_last_error(void);
SFLOW_API const char* sflow_status_string(sflow_status status);

/* Point clouds. Files ending in .csv are text, anything else PCF1 binary. */
SFLOW_API sflow_status sflow_cloud_create(const double* xyz, size_t count, sflow_cloud** out);
SFLOW_API sflow_status sflow_cloud_load(const char* path, sflow_cloud** out);
SFLOW_API sflow_status sflow_cloud_save(const sflow_cloud* cloud, const char* path);
SFLOW_API size_t sflow_cloud_size(const sflow_cloud* cloud);
SFLOW_API sflow_status sflow_cloud_positions(const sflow_cloud* cloud, double* xyz, size_t capacity);
SFLOW_API sflow_status sflow_cloud_remove_ground(const sflow_cloud* cloud, double z_threshold,
                                                 sflow_cloud** out, size_t* removed);
SFLOW_API void sflow_cloud_destroy(sflow_cloud* cloud);

/* Flow fields. */
SFLOW_API sflow_status sflow_flow_create(const double* xyz, size_t count, sflow_flow** out);
SFLOW_API sflow_status sflow_flow_load(const char* path, sflow_flow** out);
SFLOW_API sflow_status sflow_flow_save(const sflow_flow* flow, const char* path);
SFLOW_API size_t sflow_flow_size(const sflow_flow* flow);
SFLOW_API sflow_status sflow_flow_vectors(const sflow_flow* flow, double* xyz, size_t capacity);
SFLOW_API sflow_status sflow_apply_flow(const sflow_cloud* cloud, const sflow_flow* flow, sflow_cloud** out);
SFLOW_API void sflow_flow_destroy(sflow_flow* flow);

/* Exact nearest-neighbour index. */
SFLOW_API sflow_status sflow_index_build(const sflow_cloud* cloud, sflow_index** out);
SFLOW_API sflow_status sflow_index_nearest(const sflow_index* index, const double query[3], size_t* point_index,
                                           double* squared_distance);
SFLOW_API sflow_status sflow_index_count_within(const sflow_index* index, const double query[3], double radius,
                                                size_t* count);
SFLOW_API void sflow_index_destroy(sflow_index* index);

/* Losses and metrics. */
SFLOW_API sflow_status sflow_combined_loss(const sflow_cloud* source, const sflow_flow* flow,
                                           const sflow_index* target, const sflow_flow* reverse_flow, double lambda,
                                           sflow_loss_report* out);
SFLOW_API sflow_status sflow_evaluate(const sflow_flow* predicted, const sflow_flow* gt, sflow_eval_summary* out);

/* Solver configuration (JSON dialect shared with manifests). */
SFLOW_API sflow_status sflow_config_create(sflow_config** out);
SFLOW_API sflow_status sflow_config_load(const char* path, sflow_config** out);
SFLOW_API sflow_status sflow_config_parse(const char* json, sflow_config** out);
SFLOW_API sflow_status sflow_config_set_seed(sflow_config* config, uint64_t seed);
SFLOW_API sflow_status sflow_config_to_json(const sflow_config* config, sflow_write_fn write, void* user);
SFLOW_API void sflow_config_destroy(sflow_config* config);

/* Per-pair fitting. */
SFLOW_API sflow_status sflow_fit_pair(const sflow_cloud* source, const sflow_cloud* target,
                                      const sflow_config* config, sflow_fit** out);
SFLOW_API sflow_status sflow_fit_flow(const sflow_fit* fit, sflow_flow** out);
SFLOW_API int sflow_fit_iterations(const sflow_fit* fit);
SFLOW_API int sflow_fit_converged(const sflow_fit* fit);
SFLOW_API sflow_status sflow_fit_final_loss(const sflow_fit* fit, sflow_loss_report* out);
SFLOW_API void sflow_fit_destroy(sflow_fit* fit);

/* Dataset commands. Optional arguments accept NULL. */
SFLOW_API int sflow_cmd_synth(const char* spec_path, const char* out_dir, const uint64_t* seed, sflow_write_fn write,
                              void* user);
SFLOW_API int sflow_cmd_estimate(const char* manifest, const sflow_config* config, const char* out_dir, int jobs,
                                 sflow_write_fn write, void* user);
/* bins: comma separated subset of "magnitude,density,histogram". */
SFLOW_API int sflow_cmd_eval(const char* manifest, const char* flow_dir, const char* bins, const char* out_dir,
                             sflow_write_fn write, void* user);
SFLOW_API int sflow_cmd_ablate(const char* manifest, const char* ablation_spec, const sflow_config* config, int jobs,
                               sflow_write_fn write, void* user);
/* corrupt: name of a component whose analytic gradient is perturbed (test hook). */
SFLOW_API int sflow_cmd_gradcheck(uint64_t seed, const char* corrupt, sflow_write_fn write, void* user);
SFLOW_API int sflow_cmd_bench(const char* work_dir, int jobs, sflow_write_fn write, void* user);

#ifdef __cplusplus
}
#endif

#endif /* SFLOW_SFLOW_H */
